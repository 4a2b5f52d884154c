//! Run reports and their table/CSV renderings.

use prorl_core::{gap_percent, BksTable};

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub instance: String,
    /// Rule name, `prorl` or `random`.
    pub method: String,
    pub makespan: f64,
    pub gap: Option<f64>,
    pub seed: Option<u64>,
    pub seconds: f64,
    pub episodes: u64,
}

impl RunReport {
    pub fn new(instance: &str, method: &str, makespan: f64, bks: Option<&BksTable>) -> Self {
        Self {
            instance: instance.to_string(),
            method: method.to_string(),
            makespan,
            gap: gap_for(instance, makespan, bks),
            seed: None,
            seconds: 0.0,
            episodes: 0,
        }
    }

    pub const CSV_HEADER: &'static str = "instance,method,seed,makespan,gap,episodes";

    /// CSV row without the wall-clock time, so reruns are byte-identical.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.instance,
            self.method,
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            fmt_makespan(self.makespan),
            self.gap.map(fmt_gap).unwrap_or_default(),
            self.episodes
        )
    }

    pub fn table_row(&self) -> String {
        format!(
            "{:<10} {:<7} {:>5} {:>10} {:>8} {:>8} {:>8.2}s",
            self.instance,
            self.method,
            self.seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
            fmt_makespan(self.makespan),
            self.gap.map(|g| format!("{}%", fmt_gap(g))).unwrap_or_else(|| "-".into()),
            self.episodes,
            self.seconds
        )
    }

    pub fn table_header() -> String {
        format!(
            "{:<10} {:<7} {:>5} {:>10} {:>8} {:>8} {:>9}",
            "instance", "method", "seed", "makespan", "gap", "episodes", "time"
        )
    }
}

pub fn gap_for(instance: &str, makespan: f64, bks: Option<&BksTable>) -> Option<f64> {
    let best = bks?.get(instance).ok()?;
    Some(gap_of(makespan, best))
}

/// Percent gap; `makespan` may be a mean over runs.
pub fn gap_of(makespan: f64, best: u64) -> f64 {
    if makespan.fract() == 0.0 {
        gap_percent(makespan as u64, best)
    } else {
        (makespan - best as f64) / best as f64 * 100.0
    }
}

pub fn fmt_gap(gap: f64) -> String {
    format!("{gap:.2}")
}

pub fn fmt_makespan(makespan: f64) -> String {
    if makespan.fract() == 0.0 {
        format!("{makespan:.0}")
    } else {
        format!("{makespan:.2}")
    }
}

pub fn reports_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(RunReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}
