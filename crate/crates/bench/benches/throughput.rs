use std::path::Path;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use prorl_core::bo::{BoDataset, GpModel, KernelSettings};
use prorl_core::{
    extract, make_policy, parse_taillard, reference_policy, run_episode, run_pdr, ConceptVector, Heuristic,
    Instance, SimState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ta21() -> Instance {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/taillard/ta21.txt");
    parse_taillard(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn episodes(c: &mut Criterion) {
    let instance = ta21();
    let mut group = c.benchmark_group("episode_ta21");
    for rule in Heuristic::ALL {
        group.bench_function(rule.name(), |b| b.iter(|| run_pdr(&instance, rule).makespan));
    }
    let program = reference_policy();
    group.bench_function("reference_policy", |b| {
        b.iter(|| run_episode(&instance, &mut make_policy(&program)).unwrap().makespan)
    });
    group.finish();
}

fn concepts(c: &mut Criterion) {
    let instance = ta21();
    let state = SimState::reset(&instance);
    c.bench_function("concepts_initial_ta21", |b| b.iter(|| extract(&state, &instance).unwrap()));
}

fn evaluation(c: &mut Criterion) {
    let program = reference_policy();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<ConceptVector> = (0..1024)
        .map(|_| ConceptVector::from_array(std::array::from_fn(|_| rng.gen())))
        .collect();
    c.bench_function("program_evaluate_1024", |b| {
        b.iter(|| points.iter().filter(|v| program.evaluate(v) == Heuristic::Mwr).count())
    });
}

fn gp(c: &mut Criterion) {
    let settings = KernelSettings::default();
    let mut group = c.benchmark_group("gp_fit");
    for n in [10usize, 30] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let mut data = BoDataset::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..=2.0)).collect();
            data.push(x, -rng.gen_range(900.0..1400.0)).unwrap();
        }
        group.bench_function(format!("n{n}_d12"), |b| {
            b.iter_batched(|| data.clone(), |d| GpModel::fit(&d, &settings).unwrap(), BatchSize::SmallInput)
        });
    }
    group.finish();
}

criterion_group!(benches, episodes, concepts, evaluation, gp);
criterion_main!(benches);
