//! Bilevel training: (1+λ) local search over program architectures with
//! Bayesian optimization of each candidate's weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bo::{episode_return, optimize_params, BoError, BoSettings, EpisodeMeter};
use crate::dsl::{mutate, random_program, Limits, Program};
use crate::instance::Instance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Bo(#[from] BoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub lambda: usize,
    pub bo: BoSettings,
    pub episode_budget: u64,
    pub limits: Limits,
    /// Probability of chaining one more mutation onto a neighbor.
    pub mutation_rate: f64,
    pub max_extra_mutations: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            lambda: 10,
            bo: BoSettings::default(),
            episode_budget: 1000,
            limits: Limits::default(),
            mutation_rate: 0.1,
            max_extra_mutations: 5,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub const KEYS: [&'static str; 16] = [
        "lambda",
        "mu",
        "n_init",
        "budget",
        "max_depth",
        "max_tokens",
        "mutation_rate",
        "max_extra_mutations",
        "seed",
        "bo.beta",
        "bo.candidates",
        "bo.length_scale",
        "bo.signal_var",
        "bo.jitter",
        "bo.max_jitter",
        "bo.warm_start",
    ];

    /// Applies a `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SearchError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, SearchError> {
            value
                .trim()
                .parse()
                .map_err(|_| SearchError::Config(format!("bad value {value:?} for {key}")))
        }
        match key {
            "lambda" => self.lambda = num(key, value)?,
            "mu" | "bo.iterations" => self.bo.iterations = num(key, value)?,
            "n_init" | "bo.init_points" => self.bo.init_points = num(key, value)?,
            "budget" | "episode_budget" => self.episode_budget = num(key, value)?,
            "max_depth" => self.limits.max_depth = num(key, value)?,
            "max_tokens" => self.limits.max_tokens = num(key, value)?,
            "mutation_rate" => self.mutation_rate = num(key, value)?,
            "max_extra_mutations" => self.max_extra_mutations = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "bo.beta" => self.bo.beta = num(key, value)?,
            "bo.candidates" => self.bo.candidates = num(key, value)?,
            "bo.length_scale" => self.bo.kernel.length_scale = num(key, value)?,
            "bo.signal_var" => self.bo.kernel.signal_var = num(key, value)?,
            "bo.jitter" => self.bo.kernel.jitter = num(key, value)?,
            "bo.max_jitter" => self.bo.kernel.max_jitter = num(key, value)?,
            "bo.warm_start" => self.bo.warm_start = num(key, value)?,
            _ => return Err(SearchError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let fail = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.lambda == 0 {
            return fail("lambda must be at least 1");
        }
        if self.bo.init_points == 0 {
            return fail("n_init must be at least 1");
        }
        if self.bo.candidates == 0 {
            return fail("bo.candidates must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return fail("mutation_rate must lie in [0, 1]");
        }
        if self.limits.max_depth == 0 || self.limits.max_tokens == 0 {
            return fail("program limits must be positive");
        }
        let k = self.bo.kernel;
        if !(k.length_scale > 0.0 && k.signal_var > 0.0 && k.jitter > 0.0 && k.max_jitter >= k.jitter) {
            return fail("kernel settings must be positive with max_jitter >= jitter");
        }
        if !self.bo.beta.is_finite() || self.bo.beta < 0.0 {
            return fail("bo.beta must be finite and non-negative");
        }
        Ok(())
    }

    /// Episodes a full generation costs if every neighbor has parameters.
    pub fn episodes_per_generation(&self) -> u64 {
        self.lambda as u64 * self.bo.episodes_per_candidate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub episodes_used: u64,
    pub best_return: f64,
    pub tokens: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub generation: usize,
    pub incumbent: Program,
    pub incumbent_return: f64,
    pub episodes_used: u64,
    /// Row 0 describes the initial incumbent, whose evaluation is free.
    pub history: Vec<GenerationRecord>,
}

impl SearchState {
    fn record(&mut self) {
        self.history.push(GenerationRecord {
            generation: self.generation,
            episodes_used: self.episodes_used,
            best_return: self.incumbent_return,
            tokens: self.incumbent.token_count(),
            depth: self.incumbent.depth(),
        });
    }

    pub fn log_csv(&self) -> String {
        let mut out = String::from("gen,episodes_used,best_return,incumbent_tokens,incumbent_depth\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.generation, r.episodes_used, r.best_return, r.tokens, r.depth
            ));
        }
        out
    }
}

/// Mutates the incumbent `lambda` times; each neighbor receives one
/// mutation plus a capped geometric number of extra ones.
pub fn make_neighborhood<R: Rng + ?Sized>(
    incumbent: &Program,
    lambda: usize,
    mutation_rate: f64,
    max_extra: usize,
    limits: Limits,
    rng: &mut R,
) -> Vec<Program> {
    (0..lambda)
        .map(|_| {
            let mut p = mutate(incumbent, rng, limits);
            let mut extra = 0;
            while extra < max_extra && rng.gen_bool(mutation_rate) {
                p = mutate(&p, rng, limits);
                extra += 1;
            }
            p
        })
        .collect()
}

/// Seed of the random source owned by one candidate of one generation.
pub fn candidate_seed(seed: u64, generation: usize, index: usize) -> u64 {
    let mut x = seed;
    for v in [generation as u64, index as u64] {
        x = splitmix64(x ^ splitmix64(v));
    }
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains from a random initial program.
pub fn train(instance: &Instance, config: &SearchConfig) -> Result<(Program, SearchState), SearchError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = random_program(&mut rng, config.limits);
    train_from(instance, config, initial, rng)
}

/// Trains starting from `initial` as the incumbent.
///
/// Before each generation the remaining budget is split into per-candidate
/// quotas in candidate order, so a generation cut short by the budget is the
/// same whatever the worker count. Candidates then run concurrently, each
/// with its own seeded random source.
pub fn train_from(
    instance: &Instance,
    config: &SearchConfig,
    initial: Program,
    mut rng: ChaCha8Rng,
) -> Result<(Program, SearchState), SearchError> {
    config.validate()?;
    initial
        .check(config.limits)
        .map_err(|e| SearchError::Config(format!("initial program: {e}")))?;
    let initial_return = episode_return(&initial, instance)?;
    let mut state = SearchState {
        generation: 0,
        incumbent: initial,
        incumbent_return: initial_return,
        episodes_used: 0,
        history: Vec::new(),
    };
    state.record();

    let meter = EpisodeMeter::new(config.episode_budget);
    while meter.remaining() > 0 {
        state.generation += 1;
        let neighborhood = make_neighborhood(
            &state.incumbent,
            config.lambda,
            config.mutation_rate,
            config.max_extra_mutations,
            config.limits,
            &mut rng,
        );
        let jobs: Vec<(usize, Program, u64)> = neighborhood
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let cost = if p.param_len() == 0 {
                    1
                } else {
                    config.bo.episodes_per_candidate()
                };
                (i, p, meter.reserve(cost))
            })
            .filter(|(_, _, quota)| *quota > 0)
            .collect();

        let generation = state.generation;
        let results: Vec<_> = jobs
            .par_iter()
            .map(|(i, program, quota)| {
                let own = EpisodeMeter::new(*quota);
                let mut rng = ChaCha8Rng::seed_from_u64(candidate_seed(config.seed, generation, *i));
                optimize_params(program, instance, &config.bo, &own, &mut rng)
            })
            .collect();

        for result in results {
            let optimized = result?;
            state.episodes_used += optimized.episodes;
            if optimized.best_return > state.incumbent_return {
                state.incumbent_return = optimized.best_return;
                state.incumbent = optimized.program;
            }
        }
        state.record();
    }
    Ok((state.incumbent.clone(), state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::parse_standard;
    use crate::pdr::Heuristic;

    fn instance() -> Instance {
        parse_standard("3 3\n0 3 1 2 2 2\n0 2 2 1 1 4\n1 4 2 3 0 1").unwrap()
    }

    fn quick(budget: u64, seed: u64) -> SearchConfig {
        SearchConfig {
            episode_budget: budget,
            seed,
            bo: BoSettings {
                candidates: 32,
                ..BoSettings::default()
            },
            ..SearchConfig::default()
        }
    }

    #[test]
    fn neighborhood_size_and_validity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let limits = Limits::default();
        let p = random_program(&mut rng, limits);
        let n = make_neighborhood(&p, 10, 0.1, 5, limits, &mut rng);
        assert_eq!(n.len(), 10);
        for q in &n {
            q.check(limits).unwrap();
        }
    }

    #[test]
    fn zero_budget_returns_the_initial_program() {
        let (p, s) = train(&instance(), &quick(0, 4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(p, random_program(&mut rng, Limits::default()));
        assert_eq!(s.episodes_used, 0);
        assert_eq!(s.generation, 0);
        assert_eq!(s.history.len(), 1);
    }

    fn first_generation_cost(config: &SearchConfig) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let p = random_program(&mut rng, config.limits);
        make_neighborhood(&p, config.lambda, config.mutation_rate, config.max_extra_mutations, config.limits, &mut rng)
            .iter()
            .map(|q| if q.param_len() == 0 { 1 } else { config.bo.episodes_per_candidate() })
            .sum()
    }

    #[test]
    fn a_generation_costs_its_closed_form() {
        for seed in 0..5 {
            let mut config = quick(0, seed);
            config.episode_budget = first_generation_cost(&config);
            let (_, s) = train(&instance(), &config).unwrap();
            assert_eq!(s.generation, 1);
            assert_eq!(s.episodes_used, config.episode_budget);
            assert!(s.episodes_used <= 300);
        }
    }

    #[test]
    fn budget_is_spent_exactly() {
        for budget in [1, 29, 30, 31, 299, 301, 650] {
            let (_, s) = train(&instance(), &quick(budget, budget)).unwrap();
            assert_eq!(s.episodes_used, budget);
            assert_eq!(s.history.last().unwrap().episodes_used, budget);
        }
    }

    #[test]
    fn incumbent_never_regresses() {
        let (p, s) = train(&instance(), &quick(400, 3)).unwrap();
        assert!(s.history.windows(2).all(|w| w[1].best_return >= w[0].best_return));
        assert_eq!(episode_return(&p, &instance()).unwrap(), s.incumbent_return);
    }

    #[test]
    fn runs_are_reproducible() {
        let a = train(&instance(), &quick(200, 9)).unwrap();
        let b = train(&instance(), &quick(200, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.log_csv(), b.1.log_csv());
    }

    #[test]
    fn leaf_incumbent_is_kept_when_nothing_beats_it() {
        let inst = instance();
        let best = Heuristic::ALL
            .iter()
            .map(|h| episode_return(&Program::action(*h), &inst).unwrap())
            .fold(f64::MIN, f64::max);
        let start = Heuristic::ALL
            .into_iter()
            .find(|h| episode_return(&Program::action(*h), &inst).unwrap() == best)
            .unwrap();
        let (_, s) = train_from(
            &inst,
            &quick(120, 0),
            Program::action(start),
            ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert!(s.incumbent_return >= best);
    }

    #[test]
    fn overrides() {
        let mut c = SearchConfig::default();
        c.set("lambda", "4").unwrap();
        c.set("bo.beta", "0.5").unwrap();
        c.set("bo.warm_start", "false").unwrap();
        c.set("mu", "0").unwrap();
        assert_eq!((c.lambda, c.bo.beta, c.bo.warm_start, c.bo.iterations), (4, 0.5, false, 0));
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("lambda", "x").is_err());
        c.set("lambda", "0").unwrap();
        assert!(c.validate().is_err());
        for key in SearchConfig::KEYS {
            assert!(SearchConfig::default().set(key, "1").is_ok() || key == "bo.warm_start");
        }
    }

    #[test]
    fn seeds_differ_per_candidate() {
        let a = candidate_seed(0, 1, 0);
        assert_ne!(a, candidate_seed(0, 1, 1));
        assert_ne!(a, candidate_seed(0, 2, 0));
        assert_ne!(a, candidate_seed(1, 1, 0));
    }
}
