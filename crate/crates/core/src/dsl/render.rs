//! Human-readable rendering of programs, and a parser that reads it back.
//!
//! ```text
//! if (1.00 + 0.79·LD - 0.84·AM + 1.20·AO - 0.84·JD - 1.84·ST > 0):
//!     then MWR
//!     else if (-1.11 - 0.24·LD + 1.66·AM + 1.35·AO - 1.98·JD + 1.46·ST > 0):
//!         then LOR
//!         else SPT
//! ```
//!
//! Coefficients are printed with two decimals and terms that round to zero
//! are omitted, so reading the text back recovers the weights rounded to
//! the nearest hundredth. `*` is accepted in place of `·`.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Condition, Node, Program, ProgramError, CONDITION_ARITY};
use crate::concepts::CONCEPT_NAMES;
use crate::pdr::Heuristic;

const INDENT: usize = 4;

pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    render(program.root(), 0, &mut out);
    out
}

fn render(node: &Node, indent: usize, out: &mut String) {
    match node {
        Node::Action(rule) => out.push_str(rule.name()),
        Node::If {
            condition,
            then,
            otherwise,
        } => {
            let _ = write!(out, "if ({} > 0):", render_condition(condition));
            let pad = " ".repeat(indent + INDENT);
            let _ = write!(out, "\n{pad}then ");
            render(then, indent + INDENT, out);
            let _ = write!(out, "\n{pad}else ");
            render(otherwise, indent + INDENT, out);
        }
    }
}

fn render_condition(condition: &Condition) -> String {
    let w = condition.weights();
    let mut text = format!("{:.2}", w[0]);
    if text == "-0.00" {
        text = "0.00".to_string();
    }
    for (name, &coef) in CONCEPT_NAMES.iter().zip(&w[1..]) {
        let magnitude = format!("{:.2}", coef.abs());
        if magnitude == "0.00" {
            continue;
        }
        let sign = if coef < 0.0 { '-' } else { '+' };
        let _ = write!(text, " {sign} {magnitude}·{name}");
    }
    text
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("at byte {pos}: expected {expected}, found {found:?}")]
    Unexpected {
        pos: usize,
        expected: &'static str,
        found: String,
    },
    #[error("at byte {pos}: unknown name {name:?}")]
    UnknownName { pos: usize, name: String },
    #[error("at byte {pos}: term {term:?} appears twice in one condition")]
    DuplicateTerm { pos: usize, term: String },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Number(f64),
    Sym(char),
    End,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, RenderError> {
    let mut toks = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c.is_ascii_digit() || c == '.' {
            let mut end = pos;
            while let Some(&(i, d)) = chars.peek() {
                if d.is_ascii_digit() || d == '.' {
                    end = i + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let literal = &text[pos..end];
            let value = literal.parse().map_err(|_| RenderError::Unexpected {
                pos,
                expected: "a number",
                found: literal.to_string(),
            })?;
            toks.push((pos, Tok::Number(value)));
        } else if c.is_alphabetic() {
            let mut end = pos;
            while let Some(&(i, d)) = chars.peek() {
                if d.is_alphanumeric() {
                    end = i + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            toks.push((pos, Tok::Word(text[pos..end].to_string())));
        } else if "()+-:>*·".contains(c) {
            let sym = if c == '*' { '·' } else { c };
            toks.push((pos, Tok::Sym(sym)));
            chars.next();
        } else {
            return Err(RenderError::Unexpected {
                pos,
                expected: "a program token",
                found: c.to_string(),
            });
        }
    }
    toks.push((text.len(), Tok::End));
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn next(&mut self) -> (usize, Tok) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &'static str) -> Result<T, RenderError> {
        Err(RenderError::Unexpected {
            pos: self.pos(),
            expected,
            found: format!("{:?}", self.peek()),
        })
    }

    fn expect_sym(&mut self, sym: char, expected: &'static str) -> Result<(), RenderError> {
        if *self.peek() == Tok::Sym(sym) {
            self.next();
            Ok(())
        } else {
            self.fail(expected)
        }
    }

    fn expect_word(&mut self, word: &str, expected: &'static str) -> Result<(), RenderError> {
        match self.peek() {
            Tok::Word(w) if w.eq_ignore_ascii_case(word) => {
                self.next();
                Ok(())
            }
            _ => self.fail(expected),
        }
    }

    fn node(&mut self) -> Result<Node, RenderError> {
        let pos = self.pos();
        match self.next().1 {
            Tok::Word(w) if w.eq_ignore_ascii_case("if") => {
                self.expect_sym('(', "'('")?;
                let condition = self.condition()?;
                self.expect_sym('>', "'>'")?;
                match self.next() {
                    (_, Tok::Number(z)) if z == 0.0 => {}
                    (pos, found) => {
                        return Err(RenderError::Unexpected {
                            pos,
                            expected: "0",
                            found: format!("{found:?}"),
                        })
                    }
                }
                self.expect_sym(')', "')'")?;
                self.expect_sym(':', "':'")?;
                self.expect_word("then", "'then'")?;
                let then = self.node()?;
                self.expect_word("else", "'else'")?;
                let otherwise = self.node()?;
                Ok(Node::branch(condition, then, otherwise))
            }
            Tok::Word(w) => w
                .parse::<Heuristic>()
                .map(Node::Action)
                .map_err(|_| RenderError::UnknownName { pos, name: w }),
            other => Err(RenderError::Unexpected {
                pos,
                expected: "a rule name or 'if'",
                found: format!("{other:?}"),
            }),
        }
    }

    fn condition(&mut self) -> Result<Condition, RenderError> {
        let mut weights = [0.0; CONDITION_ARITY];
        let mut seen = [false; CONDITION_ARITY];
        let mut first = true;
        loop {
            let sign = match self.peek() {
                Tok::Sym('+') => {
                    self.next();
                    1.0
                }
                Tok::Sym('-') => {
                    self.next();
                    -1.0
                }
                _ if first => 1.0,
                _ => break,
            };
            first = false;
            let pos = self.pos();
            let magnitude = match self.next().1 {
                Tok::Number(v) => v,
                found => {
                    return Err(RenderError::Unexpected {
                        pos,
                        expected: "a coefficient",
                        found: format!("{found:?}"),
                    })
                }
            };
            let slot = if *self.peek() == Tok::Sym('·') {
                self.next();
                let pos = self.pos();
                match self.next().1 {
                    Tok::Word(name) => {
                        let index = CONCEPT_NAMES
                            .iter()
                            .position(|c| c.eq_ignore_ascii_case(&name))
                            .ok_or(RenderError::UnknownName { pos, name })?;
                        index + 1
                    }
                    found => {
                        return Err(RenderError::Unexpected {
                            pos,
                            expected: "a concept name",
                            found: format!("{found:?}"),
                        })
                    }
                }
            } else {
                0
            };
            if std::mem::replace(&mut seen[slot], true) {
                let term = if slot == 0 { "constant" } else { CONCEPT_NAMES[slot - 1] };
                return Err(RenderError::DuplicateTerm {
                    pos,
                    term: term.to_string(),
                });
            }
            weights[slot] = sign * magnitude;
        }
        Ok(Condition::new(weights)?)
    }
}

/// Reads the text produced by [`pretty_print`] (whitespace-insensitive).
pub fn parse_pretty(text: &str) -> Result<Program, RenderError> {
    let mut parser = Parser {
        toks: tokenize(text)?,
        at: 0,
    };
    let root = parser.node()?;
    if *parser.peek() != Tok::End {
        return parser.fail("end of input");
    }
    Ok(Program::new(root)?)
}
