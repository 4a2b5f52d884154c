//! Benchmark sweeps over a directory of instances.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use prorl_core::dsl::make_policy;
use prorl_core::search::train;
use prorl_core::{run_episode, run_pdr, BksTable, Heuristic, Instance, SearchConfig};
use rayon::prelude::*;

use crate::commands::{apply_overrides, random_makespan};
use crate::error::{write, CliError};
use crate::inputs::{load_bks_table, read_instance, Format};
use crate::report::{fmt_gap, fmt_makespan, gap_of, reports_csv, RunReport};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory of instance files (`*.txt`).
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, value_enum, default_value = "standard")]
    pub format: Format,
    /// Comma-separated methods: rule names, `prorl` and `random`.
    #[arg(long, value_delimiter = ',', default_value = "fifo,spt,mor,mwr,lor")]
    pub methods: Vec<String>,
    /// Training budget for `prorl`.
    #[arg(long, default_value_t = 1000)]
    pub budget: u64,
    /// Seeds for `prorl` and `random`.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// Episodes per seed for `random`.
    #[arg(long, default_value_t = 1)]
    pub episodes: u64,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub bks: Option<PathBuf>,
    /// Per-instance gap table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Every individual run as CSV.
    #[arg(long)]
    pub runs: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rule(Heuristic),
    Prorl,
    Random,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "prorl" => Ok(Method::Prorl),
            "random" => Ok(Method::Random),
            other => other
                .parse::<Heuristic>()
                .map(Method::Rule)
                .map_err(|_| CliError::usage(format!("unknown method {s:?}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Rule(h) => h.name(),
            Method::Prorl => "ProRL",
            Method::Random => "Random",
        }
    }

    fn seeded(self) -> bool {
        !matches!(self, Method::Rule(_))
    }
}

fn run_one(
    inst: &Instance,
    method: Method,
    seed: u64,
    config: &SearchConfig,
    episodes: u64,
    bks: Option<&BksTable>,
) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let (makespan, used) = match method {
        Method::Rule(h) => (run_pdr(inst, h).makespan as f64, 1),
        Method::Random => (random_makespan(inst, seed, episodes)?.0, episodes),
        Method::Prorl => {
            let config = SearchConfig {
                seed,
                ..config.clone()
            };
            let (program, state) = train(inst, &config).map_err(CliError::internal)?;
            let result = run_episode(inst, &mut make_policy(&program)).map_err(CliError::internal)?;
            (result.makespan as f64, state.episodes_used)
        }
    };
    let mut report = RunReport::new(&inst.name, &method.label().to_ascii_lowercase(), makespan, bks);
    if method.seeded() {
        report.seed = Some(seed);
    }
    report.episodes = used;
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

struct Row {
    instance: String,
    size: String,
    bks: Option<u64>,
    /// Mean makespan per method, in method order.
    makespans: Vec<f64>,
}

pub fn bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.episodes == 0 {
        return Err(CliError::usage("--episodes must be at least 1"));
    }
    let methods = args
        .methods
        .iter()
        .map(|m| Method::parse(m))
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err(CliError::usage("no methods given"));
    }
    if methods.iter().any(|m| m.seeded()) && args.seeds.is_empty() {
        return Err(CliError::usage("no seeds given"));
    }
    let mut config = SearchConfig {
        episode_budget: args.budget,
        ..SearchConfig::default()
    };
    apply_overrides(&mut config, &args.overrides)?;
    let bks = load_bks_table(args.bks.as_deref())?;

    let entries = std::fs::read_dir(&args.dir).map_err(|source| CliError::Io {
        path: args.dir.clone(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::usage(format!("no instance files in {}", args.dir.display())));
    }

    let mut failures = 0;
    let mut instances = Vec::new();
    for path in &paths {
        match read_instance(path, args.format) {
            Ok(inst) => instances.push(inst),
            Err(e) => {
                eprintln!("skipping {e}");
                failures += 1;
            }
        }
    }

    let mut tasks = Vec::new();
    for (i, _) in instances.iter().enumerate() {
        for (k, &method) in methods.iter().enumerate() {
            if method.seeded() {
                tasks.extend(args.seeds.iter().map(|&s| (i, k, s)));
            } else {
                tasks.push((i, k, 0));
            }
        }
    }
    let results: Vec<_> = tasks
        .par_iter()
        .map(|&(i, k, seed)| run_one(&instances[i], methods[k], seed, &config, args.episodes, bks.as_ref()))
        .collect();

    let mut reports = Vec::new();
    let mut sums = vec![vec![(0.0, 0usize); methods.len()]; instances.len()];
    let mut failed_instances = vec![false; instances.len()];
    for (&(i, k, _), result) in tasks.iter().zip(results) {
        match result {
            Ok(r) => {
                sums[i][k].0 += r.makespan;
                sums[i][k].1 += 1;
                reports.push(r);
            }
            Err(e) => {
                eprintln!("{}: {} failed: {e}", instances[i].name, methods[k].label());
                failed_instances[i] = true;
            }
        }
    }
    failures += failed_instances.iter().filter(|f| **f).count();

    let rows: Vec<Row> = instances
        .iter()
        .zip(&sums)
        .zip(&failed_instances)
        .filter(|(_, failed)| !**failed)
        .map(|((inst, s), _)| Row {
            instance: inst.name.clone(),
            size: format!("{}x{}", inst.num_jobs(), inst.num_machines()),
            bks: bks.as_ref().and_then(|t| t.get(&inst.name).ok()),
            makespans: s.iter().map(|(sum, n)| sum / *n as f64).collect(),
        })
        .collect();

    let has_rules = methods.iter().any(|m| matches!(m, Method::Rule(_)));
    let (table, csv) = render(&methods, &rows, has_rules);
    print!("{table}");
    if let Some(path) = &args.csv {
        write(path, &csv)?;
    }
    if let Some(path) = &args.runs {
        write(path, &reports_csv(&reports))?;
    }
    if failures > 0 {
        return Err(CliError::Parse {
            path: args.dir.clone(),
            message: format!("{failures} instance(s) failed"),
        });
    }
    Ok(())
}

/// Gap of each method per instance plus the best rule ("mPDR"); cells hold
/// makespans instead when no reference value is known.
fn render(methods: &[Method], rows: &[Row], has_rules: bool) -> (String, String) {
    let mut headers: Vec<String> = methods.iter().map(|m| m.label().to_string()).collect();
    if has_rules {
        headers.push("mPDR".into());
    }
    let mut table = format!("{:<10} {:>7} {:>6}", "instance", "size", "bks");
    for h in &headers {
        table.push_str(&format!(" {h:>8}"));
    }
    table.push('\n');
    let mut csv = format!("instance,size,bks,{}\n", headers.join(","));

    let mut gap_sums = vec![0.0; headers.len()];
    let mut with_bks = 0;
    for row in rows {
        let mut cells: Vec<f64> = row.makespans.clone();
        let best_rule = methods
            .iter()
            .zip(&row.makespans)
            .filter(|(m, _)| matches!(m, Method::Rule(_)))
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min);
        if has_rules {
            cells.push(best_rule);
        }
        let gaps: Option<Vec<f64>> = row.bks.map(|b| {
            cells
                .iter()
                .map(|&m| gap_of(m, b))
                .collect()
        });
        let text: Vec<String> = match &gaps {
            Some(g) => {
                with_bks += 1;
                for (s, v) in gap_sums.iter_mut().zip(g) {
                    *s += v;
                }
                g.iter().map(|v| fmt_gap(*v)).collect()
            }
            None => cells.iter().map(|v| fmt_makespan(*v)).collect(),
        };
        let bks_text = row.bks.map(|b| b.to_string()).unwrap_or_else(|| "-".into());
        table.push_str(&format!("{:<10} {:>7} {:>6}", row.instance, row.size, bks_text));
        for (t, gaps) in text.iter().zip(std::iter::repeat(gaps.is_some())) {
            let cell = if gaps { format!("{t}%") } else { t.clone() };
            table.push_str(&format!(" {cell:>8}"));
        }
        table.push('\n');
        let bks_csv = row.bks.map(|b| b.to_string()).unwrap_or_default();
        csv.push_str(&format!("{},{},{},{}\n", row.instance, row.size, bks_csv, text.join(",")));
    }
    if with_bks > 0 {
        table.push_str(&format!("{:<10} {:>7} {:>6}", "mean gap", "", ""));
        for s in &gap_sums {
            table.push_str(&format!(" {:>8}", format!("{}%", fmt_gap(s / with_bks as f64))));
        }
        table.push('\n');
    }
    (table, csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methods_parse() {
        assert_eq!(Method::parse("PRORL").unwrap(), Method::Prorl);
        assert_eq!(Method::parse("mwr").unwrap(), Method::Rule(Heuristic::Mwr));
        assert_eq!(Method::parse("dqn").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn best_rule_column_is_the_row_minimum() {
        let methods = [Method::Rule(Heuristic::Fifo), Method::Rule(Heuristic::Spt), Method::Prorl];
        let rows = [
            Row {
                instance: "a".into(),
                size: "2x2".into(),
                bks: Some(100),
                makespans: vec![120.0, 110.0, 105.0],
            },
            Row {
                instance: "b".into(),
                size: "2x2".into(),
                bks: None,
                makespans: vec![50.0, 60.0, 55.5],
            },
        ];
        let (table, csv) = render(&methods, &rows, true);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "instance,size,bks,FIFO,SPT,ProRL,mPDR");
        assert_eq!(lines[1], "a,2x2,100,20.00,10.00,5.00,10.00");
        assert_eq!(lines[2], "b,2x2,,50,60,55.50,50");
        assert!(table.contains("mean gap"));
    }
}
