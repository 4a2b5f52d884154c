//! Helpers shared by the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use prorl_core::bo::{BoDataset, GpModel, KernelSettings};
use prorl_core::dsl::make_policy;
use prorl_core::{load_bks, parse_standard, parse_taillard, run_episode, verify_feasible, BksTable, Instance, Operation, Program};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Loads a bundled benchmark by name from either format directory.
pub fn load(name: &str) -> Instance {
    let std_path = data_dir().join("standard").join(format!("{name}.txt"));
    let ta_path = data_dir().join("taillard").join(format!("{name}.txt"));
    let inst = if let Ok(text) = std::fs::read_to_string(&std_path) {
        parse_standard(&text).unwrap()
    } else {
        parse_taillard(&std::fs::read_to_string(&ta_path).unwrap()).unwrap()
    };
    inst.with_name(name)
}

pub fn bks() -> BksTable {
    load_bks(&std::fs::read_to_string(data_dir().join("bks.csv")).unwrap()).unwrap()
}

/// A small random instance; jobs visit a random subset of machines in random
/// order, so some instances are not rectangular.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> Instance {
    let n = rng.gen_range(1..=8);
    let m = rng.gen_range(1..=6);
    let full = rng.gen_bool(0.5);
    let jobs = (0..n)
        .map(|_| {
            let mut machines: Vec<usize> = (0..m).collect();
            machines.shuffle(rng);
            let len = if full { m } else { rng.gen_range(1..=m) };
            machines
                .into_iter()
                .take(len)
                .map(|machine| Operation {
                    machine,
                    duration: rng.gen_range(1..=99),
                })
                .collect()
        })
        .collect();
    Instance::new("random", m, jobs).unwrap()
}

/// Runs `program` on `instance` and checks every schedule invariant.
pub fn check_pair(program: &Program, instance: &Instance) -> Result<(), String> {
    let result = run_episode(instance, &mut make_policy(program)).map_err(|e| e.to_string())?;
    if !verify_feasible(&result, instance) {
        return Err("infeasible schedule".into());
    }
    if result.makespan < instance.makespan_lower_bound() {
        return Err(format!(
            "makespan {} below lower bound {}",
            result.makespan,
            instance.makespan_lower_bound()
        ));
    }
    if result.decisions.len() != instance.total_operations() {
        return Err("one decision per operation expected".into());
    }
    if let Some(d) = result.decisions.iter().find(|d| !d.concepts.in_unit_box()) {
        return Err(format!("concepts out of range: {:?}", d.concepts));
    }
    Ok(())
}

/// Sum of products with the rounding error of every product and addition
/// carried along, accurate to about twice the working precision.
fn compensated_dot(a: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut sum, mut err) = (0.0f64, 0.0f64);
    for (x, y) in a {
        let p = x * y;
        let pe = x.mul_add(y, -p);
        let t = sum + p;
        let z = t - sum;
        err += (sum - (t - z)) + (p - z) + pe;
        sum = t;
    }
    sum + err
}

/// Dense LU solve followed by iterative refinement with compensated
/// residuals.
fn refined_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let lu = a.clone().lu();
    let mut x = lu.solve(b).unwrap();
    for _ in 0..4 {
        let r = DVector::from_iterator(
            b.len(),
            (0..b.len()).map(|i| {
                compensated_dot(std::iter::once((b[i], 1.0)).chain((0..b.len()).map(|j| (-a[(i, j)], x[j]))))
            }),
        );
        x += lu.solve(&r).unwrap();
    }
    x
}

/// Posterior from a direct dense solve of the regularized kernel system,
/// with the model's target standardization. Returns mean and stddev in
/// standardized units together with the target scale.
pub fn gp_oracle(data: &BoDataset, k: &KernelSettings, jitter: f64, query: &[f64]) -> (f64, f64, f64) {
    let pts = data.points();
    let n = pts.len();
    let scaled: Vec<Vec<f64>> = pts
        .iter()
        .map(|(x, _)| x.iter().map(|v| v * k.input_scale).collect())
        .collect();
    let q: Vec<f64> = query.iter().map(|v| v * k.input_scale).collect();
    let kern = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        k.signal_var * (-d2 / (2.0 * k.length_scale * k.length_scale)).exp()
    };
    let ys: Vec<f64> = pts.iter().map(|(_, y)| *y).collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
    let z = DVector::from_iterator(n, ys.iter().map(|y| (y - mean) / scale));
    let gram = DMatrix::from_fn(n, n, |i, j| {
        kern(&scaled[i], &scaled[j]) + if i == j { jitter } else { 0.0 }
    });
    let kq = DVector::from_iterator(n, scaled.iter().map(|x| kern(x, &q)));
    let alpha = refined_solve(&gram, &z);
    let v = refined_solve(&gram, &kq);
    let post_mean = compensated_dot(kq.iter().copied().zip(alpha.iter().copied()));
    let post_var = (k.signal_var - compensated_dot(kq.iter().copied().zip(v.iter().copied()))).max(0.0);
    (post_mean, post_var.sqrt(), scale)
}

/// Disagreement between a model's posterior `(mean, sd)` at `query` and the
/// oracle, measured on the standardized target scale and relative to the
/// magnitude of the standardized mean once it exceeds 1. Clustered inputs make
/// the kernel system nearly singular, and far extrapolations then reach
/// magnitudes where only relative agreement is meaningful in f64.
pub fn gp_discrepancy(data: &BoDataset, k: &KernelSettings, model: &GpModel, query: &[f64], mean: f64, sd: f64) -> f64 {
    let (om, os, scale) = gp_oracle(data, k, model.jitter(), query);
    let offset = data.points().iter().map(|(_, y)| *y).sum::<f64>() / data.len() as f64;
    let m = (mean - offset) / scale;
    let s = sd / scale;
    ((m - om).abs() / om.abs().max(1.0)).max((s - os).abs())
}

/// Optimal makespan by depth-first branch and bound over active schedules.
pub fn exact_makespan(instance: &Instance, upper: u64) -> u64 {
    struct Bb<'a> {
        inst: &'a Instance,
        best: u64,
        job_next: Vec<usize>,
        job_ready: Vec<u64>,
        machine_free: Vec<u64>,
        job_rest: Vec<u64>,
        machine_rest: Vec<u64>,
    }
    impl Bb<'_> {
        fn bound(&self) -> u64 {
            let j = (0..self.job_next.len()).map(|j| self.job_ready[j] + self.job_rest[j]);
            let m = (0..self.machine_free.len()).map(|m| self.machine_free[m] + self.machine_rest[m]);
            j.chain(m).max().unwrap_or(0)
        }
        fn dfs(&mut self) {
            let lb = self.bound();
            if lb >= self.best {
                return;
            }
            let jobs = self.inst.jobs();
            let mut pick: Option<(u64, usize)> = None;
            for (j, ops) in jobs.iter().enumerate() {
                if let Some(op) = ops.get(self.job_next[j]) {
                    let end = self.job_ready[j].max(self.machine_free[op.machine]) + op.duration as u64;
                    if pick.map_or(true, |(e, _)| end < e) {
                        pick = Some((end, op.machine));
                    }
                }
            }
            let Some((cstar, mstar)) = pick else {
                self.best = self.best.min(lb);
                return;
            };
            for j in 0..jobs.len() {
                let Some(op) = jobs[j].get(self.job_next[j]).copied() else { continue };
                if op.machine != mstar {
                    continue;
                }
                let start = self.job_ready[j].max(self.machine_free[mstar]);
                if start >= cstar {
                    continue;
                }
                let end = start + op.duration as u64;
                let saved = (self.job_ready[j], self.machine_free[mstar]);
                self.job_next[j] += 1;
                self.job_ready[j] = end;
                self.machine_free[mstar] = end;
                self.job_rest[j] -= op.duration as u64;
                self.machine_rest[mstar] -= op.duration as u64;
                self.dfs();
                self.job_next[j] -= 1;
                (self.job_ready[j], self.machine_free[mstar]) = saved;
                self.job_rest[j] += op.duration as u64;
                self.machine_rest[mstar] += op.duration as u64;
            }
        }
    }
    let mut bb = Bb {
        inst: instance,
        best: upper + 1,
        job_next: vec![0; instance.num_jobs()],
        job_ready: vec![0; instance.num_jobs()],
        machine_free: vec![0; instance.num_machines()],
        job_rest: instance.job_lengths(),
        machine_rest: instance.machine_workloads(),
    };
    bb.dfs();
    bb.best
}
