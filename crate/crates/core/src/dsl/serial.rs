//! JSON policy documents.
//!
//! ```json
//! {"version": 1,
//!  "root": {"kind": "if", "weights": [1.0, 0.79, -0.84, 1.2, -0.84, -1.84],
//!           "then": {"kind": "action", "heuristic": "MWR"},
//!           "else": {"kind": "action", "heuristic": "SPT"}}}
//! ```
//!
//! Weights are written with full `f64` precision, so documents round-trip
//! exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Condition, Node, Program, ProgramError, CONDITION_ARITY};
use crate::pdr::Heuristic;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SerialError {
    #[error("malformed policy document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported policy document version {0}")]
    Version(u32),
    #[error("unknown heuristic {0:?}")]
    UnknownHeuristic(String),
    #[error("condition has {found} weights, expected {CONDITION_ARITY}")]
    Arity { found: usize },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: u32,
    root: NodeDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum NodeDoc {
    Action {
        heuristic: String,
    },
    If {
        weights: Vec<f64>,
        then: Box<NodeDoc>,
        #[serde(rename = "else")]
        otherwise: Box<NodeDoc>,
    },
}

fn to_doc(node: &Node) -> NodeDoc {
    match node {
        Node::Action(rule) => NodeDoc::Action {
            heuristic: rule.name().to_string(),
        },
        Node::If {
            condition,
            then,
            otherwise,
        } => NodeDoc::If {
            weights: condition.weights().to_vec(),
            then: Box::new(to_doc(then)),
            otherwise: Box::new(to_doc(otherwise)),
        },
    }
}

fn from_doc(doc: NodeDoc) -> Result<Node, SerialError> {
    match doc {
        NodeDoc::Action { heuristic } => heuristic
            .parse::<Heuristic>()
            .map(Node::Action)
            .map_err(|_| SerialError::UnknownHeuristic(heuristic)),
        NodeDoc::If {
            weights,
            then,
            otherwise,
        } => {
            let weights: [f64; CONDITION_ARITY] = weights
                .as_slice()
                .try_into()
                .map_err(|_| SerialError::Arity {
                    found: weights.len(),
                })?;
            Ok(Node::branch(
                Condition::new(weights)?,
                from_doc(*then)?,
                from_doc(*otherwise)?,
            ))
        }
    }
}

pub fn serialize(program: &Program) -> String {
    let doc = Document {
        version: FORMAT_VERSION,
        root: to_doc(program.root()),
    };
    serde_json::to_string_pretty(&doc).expect("policy documents always serialize")
}

pub fn deserialize(text: &str) -> Result<Program, SerialError> {
    let doc: Document = serde_json::from_str(text)?;
    if doc.version != FORMAT_VERSION {
        return Err(SerialError::Version(doc.version));
    }
    Ok(Program::new(from_doc(doc.root)?)?)
}
