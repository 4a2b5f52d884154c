//! Gaussian-process Bayesian optimization of condition weights.
//!
//! The architecture of a program is frozen and its flattened weight vector is
//! tuned against the episode return (negative makespan). The surrogate is a
//! zero-mean GP with a squared-exponential kernel on inputs rescaled from the
//! weight box to `[-1, 1]`, fitted to standardized returns. New points are
//! chosen by maximizing the upper confidence bound `mean + beta * stddev`
//! over uniformly sampled candidates.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use thiserror::Error;

use crate::dsl::{make_policy, Program, ProgramError, WEIGHT_BOUND};
use crate::instance::Instance;
use crate::sim::{episode_makespan, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoError {
    #[error("cannot fit a surrogate to an empty dataset")]
    EmptyDataset,
    #[error("dataset contains a non-finite value")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    Factorization { jitter: f64 },
    #[error("episode budget exhausted before any evaluation")]
    BudgetExhausted,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Program(#[from] ProgramError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSettings {
    pub length_scale: f64,
    pub signal_var: f64,
    /// Initial diagonal jitter; multiplied by 10 on failure up to `max_jitter`.
    pub jitter: f64,
    pub max_jitter: f64,
    /// Inputs are multiplied by this factor before entering the kernel.
    pub input_scale: f64,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self {
            length_scale: 1.0,
            signal_var: 1.0,
            jitter: 1e-6,
            max_jitter: 1e-2,
            input_scale: 1.0 / WEIGHT_BOUND,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoSettings {
    pub kernel: KernelSettings,
    pub beta: f64,
    pub candidates: usize,
    pub init_points: usize,
    pub iterations: usize,
    /// Use the program's current weights as the first initial point.
    pub warm_start: bool,
}

impl Default for BoSettings {
    fn default() -> Self {
        Self {
            kernel: KernelSettings::default(),
            beta: 2.0,
            candidates: 256,
            init_points: 10,
            iterations: 20,
            warm_start: true,
        }
    }
}

impl BoSettings {
    /// Episodes one parameterized candidate costs when the budget allows.
    pub fn episodes_per_candidate(&self) -> u64 {
        (self.init_points.max(1) + self.iterations) as u64
    }
}

/// Observed `(weights, return)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoDataset {
    points: Vec<(Vec<f64>, f64)>,
}

impl BoDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<(), BoError> {
        if let Some((first, _)) = self.points.first() {
            if first.len() != x.len() {
                return Err(BoError::Dimension {
                    expected: first.len(),
                    found: x.len(),
                });
            }
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(BoError::NonFinite);
        }
        self.points.push((x, y));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(|(x, _)| x.len())
    }

    pub fn points(&self) -> &[(Vec<f64>, f64)] {
        &self.points
    }
}

/// A fitted Gaussian-process posterior.
#[derive(Debug, Clone)]
pub struct GpModel {
    settings: KernelSettings,
    inputs: Vec<Vec<f64>>,
    target_mean: f64,
    target_scale: f64,
    /// Lower Cholesky factor of `K + jitter * I`, row-major.
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

impl GpModel {
    pub fn fit(dataset: &BoDataset, settings: &KernelSettings) -> Result<Self, BoError> {
        let n = dataset.len();
        if n == 0 {
            return Err(BoError::EmptyDataset);
        }
        let inputs: Vec<Vec<f64>> = dataset
            .points()
            .iter()
            .map(|(x, _)| x.iter().map(|v| v * settings.input_scale).collect())
            .collect();
        let ys: Vec<f64> = dataset.points().iter().map(|(_, y)| *y).collect();
        let target_mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - target_mean).powi(2)).sum::<f64>() / n as f64;
        let target_scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let z: Vec<f64> = ys.iter().map(|y| (y - target_mean) / target_scale).collect();

        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = kernel(&inputs[i], &inputs[j], settings);
                gram[i * n + j] = k;
                gram[j * n + i] = k;
            }
        }

        let mut jitter = settings.jitter;
        let chol = loop {
            if let Some(l) = cholesky(&gram, n, jitter) {
                break l;
            }
            jitter *= 10.0;
            if jitter > settings.max_jitter * (1.0 + 1e-9) {
                return Err(BoError::Factorization { jitter: jitter / 10.0 });
            }
        };
        let alpha = refine(&gram, jitter, &chol, n, &z);
        Ok(Self {
            settings: *settings,
            inputs,
            target_mean,
            target_scale,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    /// Jitter actually added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior mean and standard deviation in return units.
    pub fn posterior(&self, query: &[f64]) -> Result<(f64, f64), BoError> {
        if query.len() != self.dim() {
            return Err(BoError::Dimension {
                expected: self.dim(),
                found: query.len(),
            });
        }
        let scaled: Vec<f64> = query.iter().map(|v| v * self.settings.input_scale).collect();
        let k: Vec<f64> = self
            .inputs
            .iter()
            .map(|x| kernel(x, &scaled, &self.settings))
            .collect();
        let mean = exact_dot(k.iter().zip(&self.alpha).map(|(a, b)| (*a, *b)));
        let v = forward_substitute(&self.chol, self.inputs.len(), &k);
        let var = (self.settings.signal_var - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        Ok((
            mean * self.target_scale + self.target_mean,
            var.sqrt() * self.target_scale,
        ))
    }

    pub fn ucb(&self, query: &[f64], beta: f64) -> Result<f64, BoError> {
        let (mean, sd) = self.posterior(query)?;
        Ok(mean + beta * sd)
    }
}

fn kernel(a: &[f64], b: &[f64], s: &KernelSettings) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    s.signal_var * (-d2 / (2.0 * s.length_scale * s.length_scale)).exp()
}

fn cholesky(gram: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = gram[i * n + j];
            if i == j {
                sum += jitter;
            }
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn forward_substitute(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    y
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let y = forward_substitute(l, n, b);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    x
}

/// Solves `(gram + jitter I) x = b`, then polishes `x` with a few rounds of
/// iterative refinement. The kernel matrix is badly conditioned when points
/// cluster, and the residuals are accumulated with compensated arithmetic so
/// that refinement actually recovers the lost digits.
fn refine(gram: &[f64], jitter: f64, l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = cholesky_solve(l, n, b);
    for _ in 0..3 {
        let r: Vec<f64> = (0..n)
            .map(|i| {
                let row = (0..n).map(|j| (-gram[i * n + j], x[j]));
                exact_dot(std::iter::once((b[i], 1.0)).chain(row).chain(std::iter::once((-jitter, x[i]))))
            })
            .collect();
        for (xi, di) in x.iter_mut().zip(cholesky_solve(l, n, &r)) {
            *xi += di;
        }
    }
    x
}

/// Dot product in roughly doubled precision (compensated summation of
/// error-free products).
fn exact_dot(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut sum, mut err) = (0.0f64, 0.0f64);
    for (a, b) in pairs {
        let p = a * b;
        let pe = a.mul_add(b, -p);
        let t = sum + p;
        let z = t - sum;
        err += (sum - (t - z)) + (p - z) + pe;
        sum = t;
    }
    sum + err
}

pub fn uniform_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.gen_range(-WEIGHT_BOUND..=WEIGHT_BOUND))
        .collect()
}

/// Best of `n_candidates` uniform samples under the UCB acquisition; the
/// first sample wins ties. A zero-dimensional space yields the empty vector
/// without touching the model.
pub fn propose<R: Rng + ?Sized>(
    model: Option<&GpModel>,
    dim: usize,
    beta: f64,
    n_candidates: usize,
    rng: &mut R,
) -> Result<Vec<f64>, BoError> {
    if dim == 0 {
        return Ok(Vec::new());
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..n_candidates.max(1) {
        let x = uniform_point(dim, rng);
        let score = match model {
            Some(m) => m.ucb(&x, beta)?,
            None => 0.0,
        };
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, x));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// Shared counter of training episodes.
#[derive(Debug)]
pub struct EpisodeMeter {
    remaining: AtomicU64,
    used: AtomicU64,
}

impl EpisodeMeter {
    pub fn new(budget: u64) -> Self {
        Self {
            remaining: AtomicU64::new(budget),
            used: AtomicU64::new(0),
        }
    }

    /// Charges one episode if any remain.
    pub fn try_charge(&self) -> bool {
        self.reserve(1) == 1
    }

    /// Takes up to `wanted` episodes and returns how many were granted.
    pub fn reserve(&self, wanted: u64) -> u64 {
        let mut granted = 0;
        let _ = self
            .remaining
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |left| {
                granted = left.min(wanted);
                Some(left - granted)
            });
        self.used.fetch_add(granted, Ordering::SeqCst);
        granted
    }

    pub fn remaining(&self) -> u64 {
        self.remaining.load(Ordering::SeqCst)
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }
}

/// Result of tuning one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    /// The program carrying the best observed weights.
    pub program: Program,
    pub best_return: f64,
    pub episodes: u64,
    /// Best return seen after each evaluation.
    pub running_best: Vec<f64>,
}

/// Episode return of `program` on `instance`.
pub fn episode_return(program: &Program, instance: &Instance) -> Result<f64, BoError> {
    let makespan = episode_makespan(instance, &mut make_policy(program))?;
    Ok(-(makespan as f64))
}

/// Tunes the weights of `program` with its architecture fixed.
///
/// Every evaluation is one episode charged to `meter`; the loop stops early
/// when the meter runs dry. The best observed weights are returned, never a
/// model prediction. Programs without conditions are evaluated once.
pub fn optimize_params<R: Rng + ?Sized>(
    program: &Program,
    instance: &Instance,
    settings: &BoSettings,
    meter: &EpisodeMeter,
    rng: &mut R,
) -> Result<Optimized, BoError> {
    if !meter.try_charge() {
        return Err(BoError::BudgetExhausted);
    }
    let dim = program.param_len();
    if dim == 0 {
        let ret = episode_return(program, instance)?;
        return Ok(Optimized {
            program: program.clone(),
            best_return: ret,
            episodes: 1,
            running_best: vec![ret],
        });
    }

    let mut dataset = BoDataset::new();
    let mut best: Option<(f64, Program)> = None;
    let mut running_best = Vec::new();
    let mut episodes = 0u64;
    let mut record = |x: Vec<f64>,
                      dataset: &mut BoDataset,
                      best: &mut Option<(f64, Program)>|
     -> Result<(), BoError> {
        let candidate = program.with_params(&x)?;
        let ret = episode_return(&candidate, instance)?;
        episodes += 1;
        dataset.push(x, ret)?;
        if best.as_ref().map_or(true, |(b, _)| ret > *b) {
            *best = Some((ret, candidate));
        }
        running_best.push(best.as_ref().expect("just set").0);
        Ok(())
    };

    let total = settings.init_points.max(1) + settings.iterations;
    for i in 0..total {
        // The first episode was charged on entry.
        if i > 0 && !meter.try_charge() {
            break;
        }
        let x = if i == 0 && settings.warm_start {
            program.params()
        } else if i < settings.init_points.max(1) {
            uniform_point(dim, rng)
        } else {
            let model = GpModel::fit(&dataset, &settings.kernel)?;
            propose(Some(&model), dim, settings.beta, settings.candidates, rng)?
        };
        record(x, &mut dataset, &mut best)?;
    }

    let (best_return, program) = best.expect("at least one evaluation");
    Ok(Optimized {
        program,
        best_return,
        episodes,
        running_best,
    })
}
