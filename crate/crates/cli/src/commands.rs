//! Single-instance commands: pdr, random, train, eval.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use prorl_core::dsl::{make_policy, parse_pretty};
use prorl_core::search::train;
use prorl_core::sim::{Choice, DecisionContext, SimError};
use prorl_core::{
    deserialize, pretty_print, run_episode, run_pdr, serialize, BksTable, Heuristic, Instance, Program, ScheduleResult,
    SearchConfig,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{read, write, CliError};
use crate::inputs::{load_bks_table, load_instance, Format};
use crate::report::{fmt_gap, RunReport};

#[derive(Debug, Args)]
pub struct InstanceArgs {
    /// Instance file, or the name of a bundled benchmark such as `ft06`.
    #[arg(long)]
    pub instance: String,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Best-known makespans as `name,value` lines (defaults to the bundled table).
    #[arg(long)]
    pub bks: Option<PathBuf>,
    /// Write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the schedule as CSV.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Write the per-decision concepts and chosen rules as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PdrArgs {
    #[command(flatten)]
    pub input: InstanceArgs,
    #[arg(long, value_parser = parse_rule)]
    pub rule: Heuristic,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RandomArgs {
    #[command(flatten)]
    pub input: InstanceArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub episodes: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InstanceArgs,
    #[arg(long, default_value_t = 1000)]
    pub budget: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override a search or BO setting, e.g. `--set bo.beta=1.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Where to write the trained policy as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the per-generation training log as CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Policy file: JSON, or the text layout printed by `train`.
    #[arg(long)]
    pub policy: PathBuf,
    #[command(flatten)]
    pub input: InstanceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn parse_rule(s: &str) -> Result<Heuristic, String> {
    s.parse::<Heuristic>()
        .map_err(|_| format!("unknown rule {s:?}; expected one of fifo, spt, mor, mwr, lor"))
}

pub fn apply_overrides(config: &mut SearchConfig, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        config
            .set(key.trim(), value)
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    config.validate().map_err(|e| CliError::usage(e.to_string()))
}

/// Picks a uniformly random rule at every decision.
pub struct RandomRules {
    rng: ChaCha8Rng,
}

impl RandomRules {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl prorl_core::Policy for RandomRules {
    fn choose(&mut self, ctx: &DecisionContext<'_>) -> Result<Choice, SimError> {
        let rule = *Heuristic::ALL.choose(&mut self.rng).expect("five rules");
        let op = rule.apply(ctx.ready, ctx.state, ctx.instance)?;
        Ok(Choice { op, rule: Some(rule) })
    }
}

/// Mean makespan of `episodes` random-rule episodes and the last schedule.
pub fn random_makespan(inst: &Instance, seed: u64, episodes: u64) -> Result<(f64, ScheduleResult), CliError> {
    let mut policy = RandomRules::new(seed);
    let mut total = 0u64;
    let mut last = None;
    for _ in 0..episodes {
        let result = run_episode(inst, &mut policy).map_err(CliError::internal)?;
        total += result.makespan;
        last = Some(result);
    }
    let last = last.ok_or_else(|| CliError::usage("--episodes must be at least 1"))?;
    Ok((total as f64 / episodes as f64, last))
}

fn finish(report: &RunReport, result: &ScheduleResult, inst: &Instance, out: &OutputArgs) -> Result<(), CliError> {
    println!("{}", RunReport::table_header());
    println!("{}", report.table_row());
    if let Some(path) = &out.csv {
        write(path, &crate::report::reports_csv(std::slice::from_ref(report)))?;
    }
    if let Some(path) = &out.schedule {
        write(path, &result.schedule_csv(inst))?;
    }
    if let Some(path) = &out.trace {
        write(path, &result.trace_csv())?;
    }
    Ok(())
}

fn bks_for(out: &OutputArgs) -> Result<Option<BksTable>, CliError> {
    load_bks_table(out.bks.as_deref())
}

pub fn pdr(args: &PdrArgs) -> Result<(), CliError> {
    let inst = load_instance(&args.input.instance, args.input.format)?;
    let bks = bks_for(&args.output)?;
    let start = Instant::now();
    let result = run_pdr(&inst, args.rule);
    let mut report = RunReport::new(&inst.name, args.rule.name(), result.makespan as f64, bks.as_ref());
    report.seconds = start.elapsed().as_secs_f64();
    report.episodes = 1;
    finish(&report, &result, &inst, &args.output)
}

pub fn random(args: &RandomArgs) -> Result<(), CliError> {
    if args.episodes == 0 {
        return Err(CliError::usage("--episodes must be at least 1"));
    }
    let inst = load_instance(&args.input.instance, args.input.format)?;
    let bks = bks_for(&args.output)?;
    let start = Instant::now();
    let (mean, last) = random_makespan(&inst, args.seed, args.episodes)?;
    let mut report = RunReport::new(&inst.name, "random", mean, bks.as_ref());
    report.seed = Some(args.seed);
    report.seconds = start.elapsed().as_secs_f64();
    report.episodes = args.episodes;
    finish(&report, &last, &inst, &args.output)
}

pub fn train_cmd(args: &TrainArgs) -> Result<(), CliError> {
    let mut config = SearchConfig {
        episode_budget: args.budget,
        seed: args.seed,
        ..SearchConfig::default()
    };
    apply_overrides(&mut config, &args.overrides)?;
    let inst = load_instance(&args.input.instance, args.input.format)?;
    let bks = bks_for(&args.output)?;
    let start = Instant::now();
    let (program, state) = train(&inst, &config).map_err(CliError::internal)?;
    let result = run_episode(&inst, &mut make_policy(&program)).map_err(CliError::internal)?;
    let mut report = RunReport::new(&inst.name, "prorl", result.makespan as f64, bks.as_ref());
    report.seed = Some(config.seed);
    report.seconds = start.elapsed().as_secs_f64();
    report.episodes = state.episodes_used;

    println!("{}\n", pretty_print(&program));
    if let Some(path) = &args.out {
        write(path, &serialize(&program))?;
    }
    if let Some(path) = &args.log {
        write(path, &state.log_csv())?;
    }
    if let Some(gap) = report.gap {
        println!("final gap {}% after {} generations", fmt_gap(gap), state.generation);
    }
    finish(&report, &result, &inst, &args.output)
}

pub fn read_policy(path: &Path) -> Result<Program, CliError> {
    let text = read(path)?;
    let parsed = if text.trim_start().starts_with('{') {
        deserialize(&text).map_err(|e| e.to_string())
    } else {
        parse_pretty(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| CliError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let program = read_policy(&args.policy)?;
    let inst = load_instance(&args.input.instance, args.input.format)?;
    let bks = bks_for(&args.output)?;
    let start = Instant::now();
    let result = run_episode(&inst, &mut make_policy(&program)).map_err(CliError::internal)?;
    let mut report = RunReport::new(&inst.name, "policy", result.makespan as f64, bks.as_ref());
    report.seconds = start.elapsed().as_secs_f64();
    report.episodes = 1;
    finish(&report, &result, &inst, &args.output)
}
