//! Normalized state features read by condition nodes.
//!
//! | name | meaning | value |
//! |------|---------|-------|
//! | LD | machine load balance | spread of unscheduled work per machine |
//! | AM | available machine ratio | idle machines / m |
//! | AO | available operation ratio | ready operations / unscheduled operations |
//! | JD | job remaining-time balance | spread of unscheduled work per job |
//! | ST | shortest-operation balance | spread of unscheduled operation durations |
//!
//! A spread is `(max - min) / max`, defined as 0 when `max` is 0.

use serde::{Deserialize, Serialize};

use crate::instance::Instance;
use crate::sim::{SimError, SimState};

pub const CONCEPT_NAMES: [&str; 5] = ["LD", "AM", "AO", "JD", "ST"];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConceptVector {
    pub ld: f64,
    pub am: f64,
    pub ao: f64,
    pub jd: f64,
    pub st: f64,
}

impl ConceptVector {
    pub fn new(ld: f64, am: f64, ao: f64, jd: f64, st: f64) -> Self {
        Self { ld, am, ao, jd, st }
    }

    /// Components in LD, AM, AO, JD, ST order.
    pub fn to_array(&self) -> [f64; 5] {
        [self.ld, self.am, self.ao, self.jd, self.st]
    }

    pub fn from_array(values: [f64; 5]) -> Self {
        let [ld, am, ao, jd, st] = values;
        Self { ld, am, ao, jd, st }
    }

    pub fn in_unit_box(&self) -> bool {
        self.to_array()
            .iter()
            .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }
}

fn spread(max: f64, min: f64) -> f64 {
    if max <= 0.0 {
        0.0
    } else {
        (max - min) / max
    }
}

/// Concepts at the current decision clock.
pub fn extract(state: &SimState, instance: &Instance) -> Result<ConceptVector, SimError> {
    extract_with_ready(state, instance, state.ready_count(instance))
}

pub(crate) fn extract_with_ready(
    state: &SimState,
    instance: &Instance,
    ready: usize,
) -> Result<ConceptVector, SimError> {
    if state.is_done() {
        return Err(SimError::NoPendingDecision);
    }
    let m = instance.num_machines();

    let (ld_max, ld_min) = min_max(state.machine_remaining.iter().copied());
    let idle = state
        .machine_free_at
        .iter()
        .filter(|&&t| t <= state.clock)
        .count();
    let (jd_max, jd_min) = min_max(
        (0..instance.num_jobs())
            .filter(|&j| state.job_next_op[j] < instance.job(j).len())
            .map(|j| state.job_remaining_work[j]),
    );
    let (st_min, st_max) = state.remaining_duration_range().unwrap_or((0, 0));

    Ok(ConceptVector {
        ld: spread(ld_max as f64, ld_min as f64),
        am: idle as f64 / m as f64,
        ao: ready as f64 / state.unscheduled_count() as f64,
        jd: spread(jd_max as f64, jd_min as f64),
        st: spread(f64::from(st_max), f64::from(st_min)),
    })
}

fn min_max(values: impl Iterator<Item = u64>) -> (u64, u64) {
    values.fold((0, u64::MAX), |(hi, lo), v| (hi.max(v), lo.min(v)))
}
