//! Job-shop instances and best-known-solution tables.
//!
//! Two text formats are understood:
//!
//! * **standard** (OR-Library): a header `n m`, then one line per job holding
//!   `m` pairs `machine duration` with 0-based machines.
//! * **taillard**: a header `n m`, an `n x m` matrix of durations, then an
//!   `n x m` matrix of 1-based machine indices.
//!
//! Lines starting with `#` and blank lines are ignored in both formats and in
//! BKS files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: malformed integer {token:?}")]
    MalformedInteger { line: usize, token: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    TokenCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: machine index {machine} out of range for {machines} machines")]
    MachineOutOfRange {
        line: usize,
        machine: usize,
        machines: usize,
    },
    #[error("line {line}: machine index 0 is invalid in a 1-based machine matrix")]
    ZeroMachine { line: usize },
    #[error("line {line}: duration must be at least 1, got {duration}")]
    NonPositiveDuration { line: usize, duration: i64 },
    #[error("line {line}: job visits machine {machine} more than once")]
    RepeatedMachine { line: usize, machine: usize },
    #[error("matrix dimensions do not match header: expected {expected} rows, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("missing header line `n m`")]
    MissingHeader,
    #[error("header must declare at least one job and one machine")]
    EmptyInstance,
    #[error("line {line}: duplicate BKS entry for {name:?}")]
    DuplicateBks { line: usize, name: String },
    #[error("line {line}: best-known makespan must be positive, got {value}")]
    NonPositiveBks { line: usize, value: i64 },
    #[error("line {line}: expected `name,makespan`")]
    BksLine { line: usize },
}

/// A single operation: the machine it runs on and its processing time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Operation {
    pub machine: usize,
    pub duration: u32,
}

/// An immutable job-shop problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub name: String,
    num_machines: usize,
    jobs: Vec<Vec<Operation>>,
}

impl Instance {
    /// Builds an instance after checking machine ranges, durations and that no
    /// job visits a machine twice.
    pub fn new(
        name: impl Into<String>,
        num_machines: usize,
        jobs: Vec<Vec<Operation>>,
    ) -> Result<Self, ParseError> {
        if num_machines == 0 || jobs.is_empty() {
            return Err(ParseError::EmptyInstance);
        }
        for (j, job) in jobs.iter().enumerate() {
            let mut seen = vec![false; num_machines];
            for op in job {
                if op.machine >= num_machines {
                    return Err(ParseError::MachineOutOfRange {
                        line: j + 1,
                        machine: op.machine,
                        machines: num_machines,
                    });
                }
                if op.duration < 1 {
                    return Err(ParseError::NonPositiveDuration {
                        line: j + 1,
                        duration: 0,
                    });
                }
                if std::mem::replace(&mut seen[op.machine], true) {
                    return Err(ParseError::RepeatedMachine {
                        line: j + 1,
                        machine: op.machine,
                    });
                }
            }
        }
        Ok(Self {
            name: name.into(),
            num_machines,
            jobs,
        })
    }

    pub fn num_jobs(&self) -> usize {
        self.jobs.len()
    }

    pub fn num_machines(&self) -> usize {
        self.num_machines
    }

    pub fn jobs(&self) -> &[Vec<Operation>] {
        &self.jobs
    }

    pub fn job(&self, job: usize) -> &[Operation] {
        &self.jobs[job]
    }

    pub fn operation(&self, job: usize, index: usize) -> Operation {
        self.jobs[job][index]
    }

    pub fn total_operations(&self) -> usize {
        self.jobs.iter().map(Vec::len).sum()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Total processing time demanded from each machine.
    pub fn machine_workloads(&self) -> Vec<u64> {
        let mut load = vec![0u64; self.num_machines];
        for op in self.jobs.iter().flatten() {
            load[op.machine] += u64::from(op.duration);
        }
        load
    }

    /// Total processing time of each job.
    pub fn job_lengths(&self) -> Vec<u64> {
        self.jobs
            .iter()
            .map(|job| job.iter().map(|op| u64::from(op.duration)).sum())
            .collect()
    }

    /// `max(max machine workload, max job length)`, a lower bound on any makespan.
    pub fn makespan_lower_bound(&self) -> u64 {
        let machines = self.machine_workloads().into_iter().max().unwrap_or(0);
        let jobs = self.job_lengths().into_iter().max().unwrap_or(0);
        machines.max(jobs)
    }

    /// True when every job holds exactly one operation per machine.
    pub fn is_rectangular(&self) -> bool {
        self.jobs.iter().all(|job| job.len() == self.num_machines)
    }

    /// Renders the instance in the standard format accepted by [`parse_standard`].
    pub fn to_standard_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.num_jobs(), self.num_machines);
        for job in &self.jobs {
            let line: Vec<String> = job
                .iter()
                .map(|op| format!("{} {}", op.machine, op.duration))
                .collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

/// Iterator over `(1-based line number, tokens)` for non-comment, non-blank lines.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            None
        } else {
            Some((i + 1, trimmed.split_whitespace().collect()))
        }
    })
}

fn parse_int(token: &str, line: usize) -> Result<i64, ParseError> {
    i64::from_str(token).map_err(|_| ParseError::MalformedInteger {
        line,
        token: token.to_string(),
    })
}

fn parse_row(tokens: &[&str], line: usize, expected: usize) -> Result<Vec<i64>, ParseError> {
    if tokens.len() != expected {
        return Err(ParseError::TokenCount {
            line,
            expected,
            found: tokens.len(),
        });
    }
    tokens.iter().map(|t| parse_int(t, line)).collect()
}

fn parse_header<'a>(
    lines: &mut impl Iterator<Item = (usize, Vec<&'a str>)>,
) -> Result<(usize, usize), ParseError> {
    let (line, tokens) = lines.next().ok_or(ParseError::MissingHeader)?;
    let header = parse_row(&tokens, line, 2)?;
    if header[0] < 1 || header[1] < 1 {
        return Err(ParseError::EmptyInstance);
    }
    Ok((header[0] as usize, header[1] as usize))
}

fn check_duration(value: i64, line: usize) -> Result<u32, ParseError> {
    if value < 1 || value > i64::from(u32::MAX) {
        return Err(ParseError::NonPositiveDuration {
            line,
            duration: value,
        });
    }
    Ok(value as u32)
}

fn check_jobs(jobs: &[Vec<Operation>], lines: &[usize], m: usize) -> Result<(), ParseError> {
    for (job, &line) in jobs.iter().zip(lines) {
        let mut seen = vec![false; m];
        for op in job {
            if std::mem::replace(&mut seen[op.machine], true) {
                return Err(ParseError::RepeatedMachine {
                    line,
                    machine: op.machine,
                });
            }
        }
    }
    Ok(())
}

/// Parses the OR-Library standard format. The instance name is left empty.
pub fn parse_standard(text: &str) -> Result<Instance, ParseError> {
    let mut lines = content_lines(text);
    let (n, m) = parse_header(&mut lines)?;
    let mut jobs = Vec::with_capacity(n);
    let mut job_lines = Vec::with_capacity(n);
    for (line, tokens) in lines.by_ref() {
        if jobs.len() == n {
            return Err(ParseError::Dimension {
                expected: n,
                found: n + 1,
            });
        }
        let row = parse_row(&tokens, line, 2 * m)?;
        let mut job = Vec::with_capacity(m);
        for pair in row.chunks(2) {
            if pair[0] < 0 || pair[0] as usize >= m {
                return Err(ParseError::MachineOutOfRange {
                    line,
                    machine: pair[0].max(0) as usize,
                    machines: m,
                });
            }
            job.push(Operation {
                machine: pair[0] as usize,
                duration: check_duration(pair[1], line)?,
            });
        }
        jobs.push(job);
        job_lines.push(line);
    }
    if jobs.len() != n {
        return Err(ParseError::Dimension {
            expected: n,
            found: jobs.len(),
        });
    }
    check_jobs(&jobs, &job_lines, m)?;
    Instance::new(String::new(), m, jobs)
}

/// Parses Taillard's native format (durations matrix, then 1-based machines).
pub fn parse_taillard(text: &str) -> Result<Instance, ParseError> {
    let mut lines = content_lines(text);
    let (n, m) = parse_header(&mut lines)?;
    let rows: Vec<(usize, Vec<&str>)> = lines.collect();
    if rows.len() != 2 * n {
        return Err(ParseError::Dimension {
            expected: 2 * n,
            found: rows.len(),
        });
    }
    let (times, machines) = rows.split_at(n);
    let mut jobs = Vec::with_capacity(n);
    let mut job_lines = Vec::with_capacity(n);
    for ((t_line, t_tokens), (m_line, m_tokens)) in times.iter().zip(machines) {
        let durations = parse_row(t_tokens, *t_line, m)?;
        let targets = parse_row(m_tokens, *m_line, m)?;
        let mut job = Vec::with_capacity(m);
        for (&d, &mach) in durations.iter().zip(&targets) {
            if mach == 0 {
                return Err(ParseError::ZeroMachine { line: *m_line });
            }
            if mach < 0 || mach as usize > m {
                return Err(ParseError::MachineOutOfRange {
                    line: *m_line,
                    machine: mach.max(0) as usize,
                    machines: m,
                });
            }
            job.push(Operation {
                machine: mach as usize - 1,
                duration: check_duration(d, *t_line)?,
            });
        }
        jobs.push(job);
        job_lines.push(*m_line);
    }
    check_jobs(&jobs, &job_lines, m)?;
    Instance::new(String::new(), m, jobs)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no best-known solution recorded for {0:?}")]
pub struct MissingBks(pub String);

/// Best-known makespans keyed by instance name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BksTable {
    entries: BTreeMap<String, u64>,
}

impl BksTable {
    pub fn get(&self, name: &str) -> Result<u64, MissingBks> {
        self.entries
            .get(name)
            .copied()
            .ok_or_else(|| MissingBks(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Relative gap to a best-known makespan, in percent.
pub fn gap_percent(makespan: u64, bks: u64) -> f64 {
    (makespan as f64 - bks as f64) / bks as f64 * 100.0
}

/// Parses `name,makespan` lines.
pub fn load_bks(text: &str) -> Result<BksTable, ParseError> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (name, value) = trimmed
            .split_once(',')
            .ok_or(ParseError::BksLine { line })?;
        let name = name.trim();
        if name.is_empty() {
            return Err(ParseError::BksLine { line });
        }
        let value = parse_int(value.trim(), line)?;
        if value < 1 {
            return Err(ParseError::NonPositiveBks { line, value });
        }
        if entries.insert(name.to_string(), value as u64).is_some() {
            return Err(ParseError::DuplicateBks {
                line,
                name: name.to_string(),
            });
        }
    }
    Ok(BksTable { entries })
}
