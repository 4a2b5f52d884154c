//! The scheduling policy language.
//!
//! ```text
//! Program   E := h | if B then E1 else E2
//! Condition B := w . [1, LD, AM, AO, JD, ST] > 0
//! Action    h in {FIFO, SPT, MOR, MWR, LOR}
//! ```
//!
//! Programs are immutable trees. Evaluation walks from the root, taking the
//! `then` branch iff the condition's linear score is strictly positive, and
//! returns the dispatching rule at the leaf it reaches.

mod generate;
mod render;
mod serial;

pub use generate::{mutate, random_program, random_weights};
pub use render::{parse_pretty, pretty_print, RenderError};
pub use serial::{deserialize, serialize, SerialError};

use thiserror::Error;

use crate::concepts::ConceptVector;
use crate::pdr::Heuristic;
use crate::sim::{Choice, DecisionContext, Policy, SimError};

/// Number of weights per condition: a bias and one coefficient per concept.
pub const CONDITION_ARITY: usize = 6;
/// Weights live in `[-WEIGHT_BOUND, WEIGHT_BOUND]`.
pub const WEIGHT_BOUND: f64 = 2.0;
/// Tokens contributed by a condition: its weights plus the comparison.
const CONDITION_TOKENS: usize = CONDITION_ARITY + 1;
/// Tokens of an `if` node excluding its branches.
pub const IF_OVERHEAD_TOKENS: usize = 1 + CONDITION_TOKENS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error("program depth {depth} exceeds the limit of {limit}")]
    TooDeep { depth: usize, limit: usize },
    #[error("program has {tokens} tokens, more than the limit of {limit}")]
    TooManyTokens { tokens: usize, limit: usize },
    #[error("parameter vector has length {found}, expected {expected}")]
    ParamLength { expected: usize, found: usize },
    #[error("weight {value} is not finite or lies outside [-{WEIGHT_BOUND}, {WEIGHT_BOUND}]")]
    WeightOutOfRange { value: f64 },
}

/// Structural limits on programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_depth: usize,
    pub max_tokens: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_depth: 4,
            max_tokens: 85,
        }
    }
}

/// A linear test `w . [1, LD, AM, AO, JD, ST] > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    weights: [f64; CONDITION_ARITY],
}

impl Condition {
    pub fn new(weights: [f64; CONDITION_ARITY]) -> Result<Self, ProgramError> {
        for &value in &weights {
            check_weight(value)?;
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64; CONDITION_ARITY] {
        &self.weights
    }

    pub fn score(&self, concepts: &ConceptVector) -> f64 {
        let c = concepts.to_array();
        self.weights[0] + self.weights[1..].iter().zip(c).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn holds(&self, concepts: &ConceptVector) -> bool {
        self.score(concepts) > 0.0
    }
}

fn check_weight(value: f64) -> Result<(), ProgramError> {
    if value.is_finite() && value.abs() <= WEIGHT_BOUND {
        Ok(())
    } else {
        Err(ProgramError::WeightOutOfRange { value })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Action(Heuristic),
    If {
        condition: Condition,
        then: Box<Node>,
        otherwise: Box<Node>,
    },
}

impl Node {
    pub fn branch(condition: Condition, then: Node, otherwise: Node) -> Self {
        Node::If {
            condition,
            then: Box::new(then),
            otherwise: Box::new(otherwise),
        }
    }

    /// A lone action has depth 1; each `if` adds one level.
    pub fn depth(&self) -> usize {
        match self {
            Node::Action(_) => 1,
            Node::If {
                then, otherwise, ..
            } => 1 + then.depth().max(otherwise.depth()),
        }
    }

    pub fn tokens(&self) -> usize {
        match self {
            Node::Action(_) => 1,
            Node::If {
                then, otherwise, ..
            } => IF_OVERHEAD_TOKENS + then.tokens() + otherwise.tokens(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Node::Action(_) => 1,
            Node::If {
                then, otherwise, ..
            } => 1 + then.node_count() + otherwise.node_count(),
        }
    }

    pub fn condition_count(&self) -> usize {
        match self {
            Node::Action(_) => 0,
            Node::If {
                then, otherwise, ..
            } => 1 + then.condition_count() + otherwise.condition_count(),
        }
    }

    /// Same tree shape and actions, ignoring condition weights.
    pub fn same_architecture(&self, other: &Node) -> bool {
        match (self, other) {
            (Node::Action(a), Node::Action(b)) => a == b,
            (
                Node::If {
                    then: t1,
                    otherwise: e1,
                    ..
                },
                Node::If {
                    then: t2,
                    otherwise: e2,
                    ..
                },
            ) => t1.same_architecture(t2) && e1.same_architecture(e2),
            _ => false,
        }
    }

    fn collect_weights(&self, out: &mut Vec<f64>) {
        if let Node::If {
            condition,
            then,
            otherwise,
        } = self
        {
            out.extend_from_slice(&condition.weights);
            then.collect_weights(out);
            otherwise.collect_weights(out);
        }
    }

    fn assign_weights(&mut self, values: &mut std::slice::Chunks<'_, f64>) {
        if let Node::If {
            condition,
            then,
            otherwise,
        } = self
        {
            let chunk = values.next().expect("length checked by caller");
            condition.weights.copy_from_slice(chunk);
            then.assign_weights(values);
            otherwise.assign_weights(values);
        }
    }
}

/// A complete program: every leaf is an action.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    root: Node,
}

/// The route one evaluation takes through a program.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub action: Heuristic,
    /// `(pre-order index of the condition, branch taken)` for each test made.
    pub tests: Vec<(usize, bool)>,
}

impl Program {
    /// Wraps `root` after checking it against the default [`Limits`].
    pub fn new(root: Node) -> Result<Self, ProgramError> {
        Self::with_limits(root, Limits::default())
    }

    pub fn with_limits(root: Node, limits: Limits) -> Result<Self, ProgramError> {
        let program = Self { root };
        program.check(limits)?;
        Ok(program)
    }

    pub fn action(rule: Heuristic) -> Self {
        Self {
            root: Node::Action(rule),
        }
    }

    pub(crate) fn from_root_unchecked(root: Node) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn token_count(&self) -> usize {
        self.root.tokens()
    }

    pub fn condition_count(&self) -> usize {
        self.root.condition_count()
    }

    pub fn param_len(&self) -> usize {
        CONDITION_ARITY * self.condition_count()
    }

    /// Recognizer for well-formed programs within `limits`.
    pub fn check(&self, limits: Limits) -> Result<(), ProgramError> {
        let depth = self.depth();
        if depth > limits.max_depth {
            return Err(ProgramError::TooDeep {
                depth,
                limit: limits.max_depth,
            });
        }
        let tokens = self.token_count();
        if tokens > limits.max_tokens {
            return Err(ProgramError::TooManyTokens {
                tokens,
                limit: limits.max_tokens,
            });
        }
        self.params().into_iter().try_for_each(check_weight)
    }

    pub fn evaluate(&self, concepts: &ConceptVector) -> Heuristic {
        self.evaluate_counted(concepts).0
    }

    /// Evaluates and reports how many conditions were computed on the way.
    pub fn evaluate_counted(&self, concepts: &ConceptVector) -> (Heuristic, usize) {
        let mut node = &self.root;
        let mut tested = 0;
        loop {
            match node {
                Node::Action(rule) => return (*rule, tested),
                Node::If {
                    condition,
                    then,
                    otherwise,
                } => {
                    tested += 1;
                    node = if condition.holds(concepts) {
                        then
                    } else {
                        otherwise
                    };
                }
            }
        }
    }

    /// Evaluates while recording which conditions were tested and their outcome.
    pub fn route(&self, concepts: &ConceptVector) -> Route {
        fn walk(node: &Node, concepts: &ConceptVector, index: &mut usize, tests: &mut Vec<(usize, bool)>) -> Heuristic {
            match node {
                Node::Action(rule) => *rule,
                Node::If {
                    condition,
                    then,
                    otherwise,
                } => {
                    let here = *index;
                    *index += 1;
                    let taken = condition.holds(concepts);
                    tests.push((here, taken));
                    if taken {
                        walk(then, concepts, index, tests)
                    } else {
                        // Skip the conditions inside the untaken branch.
                        *index += then.condition_count();
                        walk(otherwise, concepts, index, tests)
                    }
                }
            }
        }
        let mut tests = Vec::new();
        let action = walk(&self.root, concepts, &mut 0, &mut tests);
        Route { action, tests }
    }

    /// Conditions in pre-order.
    pub fn conditions(&self) -> Vec<Condition> {
        fn walk(node: &Node, out: &mut Vec<Condition>) {
            if let Node::If {
                condition,
                then,
                otherwise,
            } = node
            {
                out.push(*condition);
                walk(then, out);
                walk(otherwise, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// All condition weights flattened in pre-order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        self.root.collect_weights(&mut out);
        out
    }

    /// Returns a copy with the given weights; the structure is unchanged.
    pub fn with_params(&self, values: &[f64]) -> Result<Self, ProgramError> {
        let expected = self.param_len();
        if values.len() != expected {
            return Err(ProgramError::ParamLength {
                expected,
                found: values.len(),
            });
        }
        values.iter().copied().try_for_each(check_weight)?;
        let mut root = self.root.clone();
        root.assign_weights(&mut values.chunks(CONDITION_ARITY));
        Ok(Self { root })
    }

    pub fn same_architecture(&self, other: &Program) -> bool {
        self.root.same_architecture(&other.root)
    }
}

/// Runs a program as a dispatching policy.
#[derive(Debug, Clone)]
pub struct ProgramPolicy<'p> {
    program: &'p Program,
}

pub fn make_policy(program: &Program) -> ProgramPolicy<'_> {
    ProgramPolicy { program }
}

impl Policy for ProgramPolicy<'_> {
    fn choose(&mut self, ctx: &DecisionContext<'_>) -> Result<Choice, SimError> {
        let rule = self.program.evaluate(ctx.concepts);
        let op = rule.apply(ctx.ready, ctx.state, ctx.instance)?;
        Ok(Choice {
            op,
            rule: Some(rule),
        })
    }
}

/// The MWR / LOR / SPT policy used throughout the tests and documentation.
pub fn reference_policy() -> Program {
    let first = Condition::new([1.00, 0.79, -0.84, 1.20, -0.84, -1.84]).expect("in range");
    let second = Condition::new([-1.11, -0.24, 1.66, 1.35, -1.98, 1.46]).expect("in range");
    Program::from_root_unchecked(Node::branch(
        first,
        Node::Action(Heuristic::Mwr),
        Node::branch(second, Node::Action(Heuristic::Lor), Node::Action(Heuristic::Spt)),
    ))
}
