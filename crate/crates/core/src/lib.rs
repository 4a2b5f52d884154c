//! Job-shop scheduling with programmatic dispatching policies.
//!
//! The simulator dispatches one operation per decision; a [`Policy`] picks
//! it. Policies are either single dispatching rules ([`Heuristic`]) or small
//! decision trees over five state features ([`Program`]), trained by local
//! search over tree shapes with Bayesian optimization of the weights.

pub mod bo;
pub mod concepts;
pub mod dsl;
pub mod instance;
pub mod pdr;
pub mod search;
pub mod sim;

pub use bo::{BoSettings, EpisodeMeter, GpModel, KernelSettings};
pub use concepts::{extract, ConceptVector, CONCEPT_NAMES};
pub use dsl::{
    deserialize, make_policy, parse_pretty, pretty_print, reference_policy, serialize, Condition, Limits,
    Node, Program, ProgramError,
};
pub use instance::{gap_percent, load_bks, parse_standard, parse_taillard, BksTable, Instance, Operation, ParseError};
pub use pdr::{run_pdr, Heuristic};
pub use search::{train, SearchConfig, SearchState};
pub use sim::{run_episode, verify_feasible, Policy, ScheduleResult, SimError, SimState, Time};
