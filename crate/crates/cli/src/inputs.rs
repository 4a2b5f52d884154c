//! Locating instance files and reference tables.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use prorl_core::{load_bks, parse_standard, parse_taillard, BksTable, Instance};

use crate::error::{read, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Standard,
    Taillard,
}

impl Format {
    fn dir_name(self) -> &'static str {
        match self {
            Format::Standard => "standard",
            Format::Taillard => "taillard",
        }
    }

    pub fn parse(self, text: &str) -> Result<Instance, prorl_core::ParseError> {
        match self {
            Format::Standard => parse_standard(text),
            Format::Taillard => parse_taillard(text),
        }
    }
}

/// Root of the bundled benchmark data: `$PRORL_DATA`, else `./data`, else
/// the copy next to the sources.
pub fn data_root() -> PathBuf {
    if let Some(dir) = std::env::var_os("PRORL_DATA") {
        return PathBuf::from(dir);
    }
    let local = PathBuf::from("data");
    if local.is_dir() {
        return local;
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Resolves `spec` as a file path, or as a benchmark name looked up under
/// `<data>/<format>/<name>.txt`. Without an explicit format a file is read as
/// standard and a name is searched in both format directories.
pub fn load_instance(spec: &str, format: Option<Format>) -> Result<Instance, CliError> {
    let path = Path::new(spec);
    let (path, format) = if path.is_file() {
        (path.to_path_buf(), format.unwrap_or(Format::Standard))
    } else {
        let root = data_root();
        let formats = match format {
            Some(f) => vec![f],
            None => vec![Format::Standard, Format::Taillard],
        };
        formats
            .into_iter()
            .map(|f| (root.join(f.dir_name()).join(format!("{spec}.txt")), f))
            .find(|(p, _)| p.is_file())
            .ok_or_else(|| CliError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or bundled instance"),
            })?
    };
    read_instance(&path, format)
}

pub fn read_instance(path: &Path, format: Format) -> Result<Instance, CliError> {
    let text = read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format
        .parse(&text)
        .map(|inst| inst.with_name(name))
        .map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// The given table, or the bundled one when present.
pub fn load_bks_table(path: Option<&Path>) -> Result<Option<BksTable>, CliError> {
    let path = match path {
        Some(p) => p.to_path_buf(),
        None => {
            let bundled = data_root().join("bks.csv");
            if !bundled.is_file() {
                return Ok(None);
            }
            bundled
        }
    };
    let text = read(&path)?;
    load_bks(&text).map(Some).map_err(|e| CliError::Parse {
        path,
        message: e.to_string(),
    })
}
