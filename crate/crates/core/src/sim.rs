//! Event-driven, non-delay job-shop simulator.
//!
//! At every decision point the policy picks exactly one operation from the
//! ready set: operations whose job predecessor has completed and whose
//! machine is idle at the current clock. After each dispatch the clock jumps
//! to the earliest moment at which some pending operation becomes startable,
//! so an episode contains exactly one decision per operation and the reward
//! (negative makespan) arrives at the last step.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::concepts::{self, ConceptVector};
use crate::instance::Instance;
use crate::pdr::Heuristic;

pub type Time = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("all operations are scheduled; no decision is pending")]
    NoPendingDecision,
    #[error("operation {op_index} of job {job} is not in the ready set")]
    NotReady { job: usize, op_index: usize },
    #[error("the ready set is empty")]
    EmptyReadySet,
    #[error("policy failed: {0}")]
    Policy(String),
}

/// An operation that can start at the current clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadyOp {
    pub job: usize,
    pub op_index: usize,
    pub machine: usize,
    pub duration: u32,
    pub ready_at: Time,
    /// Completion time of the job predecessor, 0 for first operations.
    pub arrival: Time,
}

/// The evolving partial schedule of one episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    pub clock: Time,
    pub machine_free_at: Vec<Time>,
    pub job_next_op: Vec<usize>,
    pub job_ready_at: Vec<Time>,
    pub start_times: Vec<Vec<Option<Time>>>,
    pub scheduled_count: usize,
    // Running aggregates over unscheduled operations, read by the concept
    // extractor and the dispatching rules.
    pub(crate) machine_remaining: Vec<u64>,
    pub(crate) job_remaining_work: Vec<u64>,
    pub(crate) remaining_durations: BTreeMap<u32, usize>,
    total_operations: usize,
}

impl SimState {
    /// Fresh state: clock 0, every machine idle, every job at its first operation.
    pub fn reset(instance: &Instance) -> Self {
        let mut remaining_durations = BTreeMap::new();
        for op in instance.jobs().iter().flatten() {
            *remaining_durations.entry(op.duration).or_insert(0) += 1;
        }
        Self {
            clock: 0,
            machine_free_at: vec![0; instance.num_machines()],
            job_next_op: vec![0; instance.num_jobs()],
            job_ready_at: vec![0; instance.num_jobs()],
            start_times: instance.jobs().iter().map(|j| vec![None; j.len()]).collect(),
            scheduled_count: 0,
            machine_remaining: instance.machine_workloads(),
            job_remaining_work: instance.job_lengths(),
            remaining_durations,
            total_operations: instance.total_operations(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.scheduled_count == self.total_operations
    }

    pub fn unscheduled_count(&self) -> usize {
        self.total_operations - self.scheduled_count
    }

    /// Number of operations of `job` not yet scheduled, the next one included.
    pub fn remaining_ops(&self, instance: &Instance, job: usize) -> usize {
        instance.job(job).len() - self.job_next_op[job]
    }

    /// Total processing time of the job's unscheduled operations.
    pub fn remaining_work(&self, job: usize) -> u64 {
        self.job_remaining_work[job]
    }

    /// Unscheduled processing time destined for `machine`.
    pub fn machine_remaining(&self, machine: usize) -> u64 {
        self.machine_remaining[machine]
    }

    /// Shortest and longest unscheduled operation durations.
    pub fn remaining_duration_range(&self) -> Option<(u32, u32)> {
        let min = self.remaining_durations.keys().next()?;
        let max = self.remaining_durations.keys().next_back()?;
        Some((*min, *max))
    }

    fn pending<'a>(&'a self, instance: &'a Instance) -> impl Iterator<Item = (usize, Time)> + 'a {
        let jobs = instance.jobs();
        self.job_next_op
            .iter()
            .enumerate()
            .filter(move |&(job, &next)| next < jobs[job].len())
            .map(move |(job, &next)| {
                let machine = jobs[job][next].machine;
                (job, self.job_ready_at[job].max(self.machine_free_at[machine]))
            })
    }

    /// Operations startable at the current clock, by ascending job index.
    pub fn ready_set(&self, instance: &Instance) -> Result<Vec<ReadyOp>, SimError> {
        if self.is_done() {
            return Err(SimError::NoPendingDecision);
        }
        Ok(self
            .pending(instance)
            .filter(|&(_, at)| at <= self.clock)
            .map(|(job, at)| {
                let op_index = self.job_next_op[job];
                let op = instance.operation(job, op_index);
                ReadyOp {
                    job,
                    op_index,
                    machine: op.machine,
                    duration: op.duration,
                    ready_at: at,
                    arrival: self.job_ready_at[job],
                }
            })
            .collect())
    }

    pub(crate) fn ready_count(&self, instance: &Instance) -> usize {
        self.pending(instance)
            .filter(|&(_, at)| at <= self.clock)
            .count()
    }

    /// Starts `pick` at the current clock, then advances the clock to the next
    /// decision point if nothing else is startable now.
    pub fn step(&mut self, instance: &Instance, pick: &ReadyOp) -> Result<(), SimError> {
        let not_ready = SimError::NotReady {
            job: pick.job,
            op_index: pick.op_index,
        };
        if self.is_done() {
            return Err(SimError::NoPendingDecision);
        }
        if pick.job >= instance.num_jobs() || self.job_next_op[pick.job] != pick.op_index {
            return Err(not_ready);
        }
        let Some(&op) = instance.job(pick.job).get(pick.op_index) else {
            return Err(not_ready);
        };
        if self.job_ready_at[pick.job] > self.clock || self.machine_free_at[op.machine] > self.clock
        {
            return Err(not_ready);
        }

        let end = self.clock + Time::from(op.duration);
        self.start_times[pick.job][pick.op_index] = Some(self.clock);
        self.machine_free_at[op.machine] = end;
        self.job_ready_at[pick.job] = end;
        self.job_next_op[pick.job] += 1;
        self.scheduled_count += 1;
        self.machine_remaining[op.machine] -= u64::from(op.duration);
        self.job_remaining_work[pick.job] -= u64::from(op.duration);
        if let Some(count) = self.remaining_durations.get_mut(&op.duration) {
            *count -= 1;
            if *count == 0 {
                self.remaining_durations.remove(&op.duration);
            }
        }

        if !self.is_done() && self.ready_count(instance) == 0 {
            self.clock = self
                .pending(instance)
                .map(|(_, at)| at)
                .min()
                .expect("pending operations exist");
        }
        Ok(())
    }
}

/// What a policy hands back: the operation to dispatch and, when the policy
/// works through a dispatching rule, which rule produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Choice {
    pub op: ReadyOp,
    pub rule: Option<Heuristic>,
}

/// Everything a policy may look at when making a decision.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub concepts: &'a ConceptVector,
    pub ready: &'a [ReadyOp],
    pub state: &'a SimState,
    pub instance: &'a Instance,
}

pub trait Policy {
    fn choose(&mut self, ctx: &DecisionContext<'_>) -> Result<Choice, SimError>;
}

impl<F> Policy for F
where
    F: FnMut(&DecisionContext<'_>) -> Result<Choice, SimError>,
{
    fn choose(&mut self, ctx: &DecisionContext<'_>) -> Result<Choice, SimError> {
        self(ctx)
    }
}

/// One traced decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub clock: Time,
    pub concepts: ConceptVector,
    pub rule: Option<Heuristic>,
    pub job: usize,
    pub op_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    pub makespan: Time,
    pub start_times: Vec<Vec<Time>>,
    pub decisions: Vec<Decision>,
}

impl ScheduleResult {
    /// Episode return: the negative makespan.
    pub fn episode_return(&self) -> f64 {
        -(self.makespan as f64)
    }

    /// `job,op,machine,start,end` rows sorted by start time.
    pub fn schedule_csv(&self, instance: &Instance) -> String {
        let mut rows = Vec::with_capacity(instance.total_operations());
        for (job, starts) in self.start_times.iter().enumerate() {
            for (op_index, &start) in starts.iter().enumerate() {
                let op = instance.operation(job, op_index);
                rows.push((start, job, op_index, op.machine, start + Time::from(op.duration)));
            }
        }
        rows.sort_unstable();
        let mut out = String::from("job,op,machine,start,end\n");
        for (start, job, op_index, machine, end) in rows {
            let _ = writeln!(out, "{job},{op_index},{machine},{start},{end}");
        }
        out
    }

    /// `t,ld,am,ao,jd,st,action` rows, one per decision.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("t,ld,am,ao,jd,st,action\n");
        for (t, d) in self.decisions.iter().enumerate() {
            let c = &d.concepts;
            let action = d.rule.map(|r| r.name()).unwrap_or("-");
            let _ = writeln!(
                out,
                "{t},{:.6},{:.6},{:.6},{:.6},{:.6},{action}",
                c.ld, c.am, c.ao, c.jd, c.st
            );
        }
        out
    }
}

/// Runs a full episode, recording the concept vector and rule of every decision.
pub fn run_episode<P: Policy + ?Sized>(
    instance: &Instance,
    policy: &mut P,
) -> Result<ScheduleResult, SimError> {
    simulate(instance, policy, true)
}

/// Runs a full episode and returns only the makespan.
pub fn episode_makespan<P: Policy + ?Sized>(
    instance: &Instance,
    policy: &mut P,
) -> Result<Time, SimError> {
    simulate(instance, policy, false).map(|r| r.makespan)
}

fn simulate<P: Policy + ?Sized>(
    instance: &Instance,
    policy: &mut P,
    record: bool,
) -> Result<ScheduleResult, SimError> {
    let mut state = SimState::reset(instance);
    let mut decisions = Vec::with_capacity(if record { instance.total_operations() } else { 0 });
    let mut ready = Vec::with_capacity(instance.num_jobs());
    while !state.is_done() {
        ready.clear();
        ready.extend(state.ready_set(instance)?);
        if ready.is_empty() {
            return Err(SimError::EmptyReadySet);
        }
        let concepts = concepts::extract_with_ready(&state, instance, ready.len())?;
        let ctx = DecisionContext {
            concepts: &concepts,
            ready: &ready,
            state: &state,
            instance,
        };
        let choice = policy.choose(&ctx)?;
        if record {
            decisions.push(Decision {
                clock: state.clock,
                concepts,
                rule: choice.rule,
                job: choice.op.job,
                op_index: choice.op.op_index,
            });
        }
        state.step(instance, &choice.op)?;
    }
    let start_times: Vec<Vec<Time>> = state
        .start_times
        .iter()
        .map(|job| job.iter().map(|s| s.expect("all scheduled")).collect())
        .collect();
    let makespan = completion_max(&start_times, instance);
    Ok(ScheduleResult {
        makespan,
        start_times,
        decisions,
    })
}

fn completion_max(start_times: &[Vec<Time>], instance: &Instance) -> Time {
    start_times
        .iter()
        .enumerate()
        .flat_map(|(job, starts)| {
            starts
                .iter()
                .enumerate()
                .map(move |(i, &s)| s + Time::from(instance.operation(job, i).duration))
        })
        .max()
        .unwrap_or(0)
}

/// Checks job precedence, machine exclusivity and the reported makespan.
pub fn verify_feasible(result: &ScheduleResult, instance: &Instance) -> bool {
    if result.start_times.len() != instance.num_jobs() {
        return false;
    }
    let mut per_machine: Vec<Vec<(Time, Time)>> = vec![Vec::new(); instance.num_machines()];
    for (job, starts) in result.start_times.iter().enumerate() {
        let ops = instance.job(job);
        if starts.len() != ops.len() {
            return false;
        }
        let mut job_free = 0;
        for (&start, op) in starts.iter().zip(ops) {
            if start < job_free {
                return false;
            }
            job_free = start + Time::from(op.duration);
            per_machine[op.machine].push((start, job_free));
        }
    }
    for intervals in &mut per_machine {
        intervals.sort_unstable();
        if intervals.windows(2).any(|w| w[1].0 < w[0].1) {
            return false;
        }
    }
    result.makespan == completion_max(&result.start_times, instance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::parse_standard;

    fn two_by_two() -> Instance {
        parse_standard("2 2\n0 3 1 2\n1 2 0 4").unwrap()
    }

    #[test]
    fn reset_initial_state() {
        let inst = two_by_two();
        let state = SimState::reset(&inst);
        assert_eq!(state.clock, 0);
        assert_eq!(state.machine_free_at, vec![0, 0]);
        assert_eq!(state.job_next_op, vec![0, 0]);
        assert_eq!(state.scheduled_count, 0);
        assert_eq!(SimState::reset(&inst), state);

        let single = parse_standard("1 1\n0 5").unwrap();
        assert_eq!(SimState::reset(&single).unscheduled_count(), 1);
    }

    #[test]
    fn ready_set_at_time_zero() {
        let inst = two_by_two();
        let state = SimState::reset(&inst);
        let ready = state.ready_set(&inst).unwrap();
        assert_eq!(ready.len(), 2);
        assert_eq!((ready[0].job, ready[0].machine, ready[0].duration), (0, 0, 3));
        assert_eq!((ready[1].job, ready[1].machine, ready[1].duration), (1, 1, 2));
    }

    #[test]
    fn stepping_the_two_by_two() {
        let inst = two_by_two();
        let mut state = SimState::reset(&inst);
        let ready = state.ready_set(&inst).unwrap();
        state.step(&inst, &ready[1]).unwrap();
        assert_eq!(state.machine_free_at[1], 2);
        assert_eq!(state.job_ready_at[1], 2);
        assert_eq!(state.clock, 0);
        let ready = state.ready_set(&inst).unwrap();
        assert_eq!(ready.len(), 1);
        assert_eq!((ready[0].job, ready[0].op_index), (0, 0));

        state.step(&inst, &ready[0]).unwrap();
        // J1-op1 waits for M0 (free at 3); J0-op1 waits for its predecessor (3).
        assert_eq!(state.clock, 3);
        let ready = state.ready_set(&inst).unwrap();
        let picked: Vec<_> = ready.iter().map(|r| (r.job, r.op_index)).collect();
        assert_eq!(picked, vec![(0, 1), (1, 1)]);
    }

    #[test]
    fn step_rejects_operations_outside_the_ready_set() {
        let inst = two_by_two();
        let mut state = SimState::reset(&inst);
        let ready = state.ready_set(&inst).unwrap();
        let mut bogus = ready[0];
        bogus.op_index = 1;
        assert_eq!(
            state.step(&inst, &bogus),
            Err(SimError::NotReady { job: 0, op_index: 1 })
        );
        state.step(&inst, &ready[1]).unwrap();
        // J1's second operation is not startable yet.
        let late = ReadyOp {
            job: 1,
            op_index: 1,
            machine: 0,
            duration: 4,
            ready_at: 2,
            arrival: 2,
        };
        assert!(state.step(&inst, &late).is_err());
    }

    #[test]
    fn exhausted_state_has_no_ready_set() {
        let inst = parse_standard("1 1\n0 5").unwrap();
        let mut state = SimState::reset(&inst);
        let ready = state.ready_set(&inst).unwrap();
        state.step(&inst, &ready[0]).unwrap();
        assert!(state.is_done());
        assert_eq!(state.ready_set(&inst), Err(SimError::NoPendingDecision));
        assert_eq!(state.step(&inst, &ready[0]), Err(SimError::NoPendingDecision));
    }

    #[test]
    fn single_operation_episode() {
        let inst = parse_standard("1 1\n0 5").unwrap();
        let mut first = |ctx: &DecisionContext<'_>| {
            Ok(Choice {
                op: ctx.ready[0],
                rule: None,
            })
        };
        let result = run_episode(&inst, &mut first).unwrap();
        assert_eq!(result.makespan, 5);
        assert_eq!(result.episode_return(), -5.0);
        assert_eq!(result.decisions.len(), 1);
        assert!(verify_feasible(&result, &inst));
    }

    #[test]
    fn policy_errors_propagate() {
        let inst = two_by_two();
        let mut failing = |_: &DecisionContext<'_>| -> Result<Choice, SimError> {
            Err(SimError::Policy("nope".into()))
        };
        assert_eq!(
            run_episode(&inst, &mut failing),
            Err(SimError::Policy("nope".into()))
        );
    }

    #[test]
    fn verify_rejects_machine_overlap() {
        let inst = two_by_two();
        // J0: M0 [0,3), M1 [3,5); J1: M1 [0,2), M0 [2,6) overlaps J0 on M0.
        let result = ScheduleResult {
            makespan: 6,
            start_times: vec![vec![0, 3], vec![0, 2]],
            decisions: vec![],
        };
        assert!(!verify_feasible(&result, &inst));
    }

    #[test]
    fn verify_rejects_precedence_violation() {
        let inst = two_by_two();
        // J0's second operation starts at 1, before its first ends at 3.
        let result = ScheduleResult {
            makespan: 9,
            start_times: vec![vec![0, 1], vec![3, 5]],
            decisions: vec![],
        };
        assert!(!verify_feasible(&result, &inst));
    }

    #[test]
    fn verify_checks_reported_makespan() {
        let inst = two_by_two();
        let good = ScheduleResult {
            makespan: 7,
            start_times: vec![vec![0, 3], vec![0, 3]],
            decisions: vec![],
        };
        assert!(verify_feasible(&good, &inst));
        let wrong = ScheduleResult {
            makespan: 8,
            ..good
        };
        assert!(!verify_feasible(&wrong, &inst));
    }

    #[test]
    fn schedule_csv_is_sorted_by_start() {
        let inst = two_by_two();
        let result = ScheduleResult {
            makespan: 7,
            start_times: vec![vec![0, 3], vec![0, 3]],
            decisions: vec![],
        };
        assert_eq!(
            result.schedule_csv(&inst),
            "job,op,machine,start,end\n0,0,0,0,3\n1,0,1,0,2\n0,1,1,3,5\n1,1,0,3,7\n"
        );
    }
}
