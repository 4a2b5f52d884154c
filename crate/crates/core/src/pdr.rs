//! Priority dispatching rules: the action set of the policy language.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;
use crate::sim::{self, Choice, DecisionContext, Policy, ReadyOp, ScheduleResult, SimError, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Heuristic {
    /// First in, first out: earliest arrival at the queue.
    Fifo,
    /// Shortest processing time of the next operation.
    Spt,
    /// Most operations remaining in the job.
    Mor,
    /// Most work remaining in the job.
    Mwr,
    /// Least operations remaining in the job.
    Lor,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown dispatching rule {0:?} (expected fifo, spt, mor, mwr or lor)")]
pub struct UnknownHeuristic(pub String);

impl Heuristic {
    pub const ALL: [Heuristic; 5] = [
        Heuristic::Fifo,
        Heuristic::Spt,
        Heuristic::Mor,
        Heuristic::Mwr,
        Heuristic::Lor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::Fifo => "FIFO",
            Heuristic::Spt => "SPT",
            Heuristic::Mor => "MOR",
            Heuristic::Mwr => "MWR",
            Heuristic::Lor => "LOR",
        }
    }

    /// Priority key; the ready operation with the smallest key is dispatched.
    fn key(self, op: &ReadyOp, state: &SimState, instance: &Instance) -> i128 {
        match self {
            Heuristic::Fifo => i128::from(op.arrival),
            Heuristic::Spt => i128::from(op.duration),
            Heuristic::Mor => -(state.remaining_ops(instance, op.job) as i128),
            Heuristic::Mwr => -i128::from(state.remaining_work(op.job)),
            Heuristic::Lor => state.remaining_ops(instance, op.job) as i128,
        }
    }

    /// Picks the best ready operation under this rule. Ties go to the lowest
    /// job index, then the lowest operation index.
    pub fn apply(
        self,
        ready: &[ReadyOp],
        state: &SimState,
        instance: &Instance,
    ) -> Result<ReadyOp, SimError> {
        ready
            .iter()
            .min_by_key(|op| (self.key(op, state, instance), op.job, op.op_index))
            .copied()
            .ok_or(SimError::EmptyReadySet)
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Heuristic {
    type Err = UnknownHeuristic;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownHeuristic(s.to_string()))
    }
}

/// A single rule applied at every decision.
impl Policy for Heuristic {
    fn choose(&mut self, ctx: &DecisionContext<'_>) -> Result<Choice, SimError> {
        let op = self.apply(ctx.ready, ctx.state, ctx.instance)?;
        Ok(Choice {
            op,
            rule: Some(*self),
        })
    }
}

pub fn run_pdr(instance: &Instance, rule: Heuristic) -> ScheduleResult {
    let mut policy = rule;
    sim::run_episode(instance, &mut policy).expect("a fixed rule always finds a ready operation")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::parse_standard;

    fn two_by_two() -> Instance {
        parse_standard("2 2\n0 3 1 2\n1 2 0 4").unwrap()
    }

    #[test]
    fn names_round_trip_case_insensitively() {
        for h in Heuristic::ALL {
            assert_eq!(h.name().parse::<Heuristic>(), Ok(h));
            assert_eq!(h.name().to_lowercase().parse::<Heuristic>(), Ok(h));
        }
        assert!("xyz".parse::<Heuristic>().is_err());
    }

    #[test]
    fn rules_at_time_zero() {
        let inst = two_by_two();
        let state = SimState::reset(&inst);
        let ready = state.ready_set(&inst).unwrap();
        let pick = |h: Heuristic| h.apply(&ready, &state, &inst).unwrap().job;
        assert_eq!(pick(Heuristic::Spt), 1);
        // Remaining work: J0 = 5, J1 = 6.
        assert_eq!(pick(Heuristic::Mwr), 1);
        // Both jobs have two operations left; the tie goes to J0.
        assert_eq!(pick(Heuristic::Mor), 0);
        assert_eq!(pick(Heuristic::Lor), 0);
        assert_eq!(pick(Heuristic::Fifo), 0);
    }

    #[test]
    fn fifo_prefers_earliest_arrival() {
        // J0 arrives at the M1 queue at 1, J1 at 2; both wait for M1 until 5.
        let inst = parse_standard("3 2\n0 1 1 3\n0 1 1 3\n1 5 0 1").unwrap();
        let mut state = SimState::reset(&inst);
        let mut trace = Vec::new();
        while !state.is_done() {
            let ready = state.ready_set(&inst).unwrap();
            let pick = Heuristic::Fifo.apply(&ready, &state, &inst).unwrap();
            trace.push((pick.job, pick.op_index, pick.arrival));
            state.step(&inst, &pick).unwrap();
        }
        assert_eq!(
            trace,
            vec![(0, 0, 0), (2, 0, 0), (1, 0, 0), (0, 1, 1), (2, 1, 5), (1, 1, 2)]
        );
    }

    #[test]
    fn empty_ready_set_is_an_error() {
        let inst = two_by_two();
        let state = SimState::reset(&inst);
        assert_eq!(
            Heuristic::Spt.apply(&[], &state, &inst),
            Err(SimError::EmptyReadySet)
        );
    }

    #[test]
    fn every_rule_is_optimal_on_the_two_by_two() {
        let inst = two_by_two();
        for h in Heuristic::ALL {
            assert_eq!(run_pdr(&inst, h).makespan, 7, "{h}");
        }
    }
}
