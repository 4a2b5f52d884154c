//! Random program generation and the mutation operator.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Condition, Limits, Node, Program, CONDITION_ARITY, IF_OVERHEAD_TOKENS, WEIGHT_BOUND};
use crate::pdr::Heuristic;

/// Probability of choosing the `if` production when both productions fit.
const BRANCH_PROBABILITY: f64 = 0.5;
/// Probability that a mutated action leaf grows into an `if` node instead of
/// swapping its rule.
const GROW_PROBABILITY: f64 = 0.5;

pub fn random_weights<R: Rng + ?Sized>(rng: &mut R) -> [f64; CONDITION_ARITY] {
    let mut w = [0.0; CONDITION_ARITY];
    for v in &mut w {
        *v = rng.gen_range(-WEIGHT_BOUND..=WEIGHT_BOUND);
    }
    w
}

fn random_condition<R: Rng + ?Sized>(rng: &mut R) -> Condition {
    Condition::new(random_weights(rng)).expect("sampled inside the box")
}

fn random_rule<R: Rng + ?Sized>(rng: &mut R) -> Heuristic {
    *Heuristic::ALL.choose(rng).expect("non-empty")
}

fn can_branch(depth_budget: usize, token_budget: usize) -> bool {
    depth_budget >= 2 && token_budget >= IF_OVERHEAD_TOKENS + 2
}

/// Expands the start symbol within the given depth and token budgets.
fn expand<R: Rng + ?Sized>(
    rng: &mut R,
    depth_budget: usize,
    token_budget: usize,
    force_branch: bool,
) -> Node {
    if can_branch(depth_budget, token_budget) && (force_branch || rng.gen_bool(BRANCH_PROBABILITY)) {
        let condition = random_condition(rng);
        // Reserve one token for the else branch.
        let then = expand(rng, depth_budget - 1, token_budget - IF_OVERHEAD_TOKENS - 1, false);
        let rest = token_budget - IF_OVERHEAD_TOKENS - then.tokens();
        let otherwise = expand(rng, depth_budget - 1, rest, false);
        Node::branch(condition, then, otherwise)
    } else {
        Node::Action(random_rule(rng))
    }
}

/// Samples a program from the grammar with uniform rules and uniform weights.
pub fn random_program<R: Rng + ?Sized>(rng: &mut R, limits: Limits) -> Program {
    Program::from_root_unchecked(expand(rng, limits.max_depth, limits.max_tokens, false))
}

/// Returns a mutated copy of `program`.
///
/// One node is picked uniformly. An `if` node is discarded together with its
/// branches and the position is re-expanded from the start symbol. An action
/// leaf either swaps its rule for a different one or, when the budget allows,
/// grows into a fresh `if` node with random branches.
pub fn mutate<R: Rng + ?Sized>(program: &Program, rng: &mut R, limits: Limits) -> Program {
    let root = program.root();
    let target = rng.gen_range(0..root.node_count());
    let total_tokens = root.tokens();
    let mut counter = 0;
    let new_root = rebuild(root, 1, target, &mut counter, total_tokens, limits, rng);
    Program::from_root_unchecked(new_root)
}

fn rebuild<R: Rng + ?Sized>(
    node: &Node,
    level: usize,
    target: usize,
    counter: &mut usize,
    total_tokens: usize,
    limits: Limits,
    rng: &mut R,
) -> Node {
    let here = *counter;
    *counter += 1;
    if here == target {
        let depth_budget = limits.max_depth + 1 - level;
        let token_budget = limits.max_tokens.saturating_sub(total_tokens - node.tokens());
        return match node {
            Node::If { .. } => expand(rng, depth_budget, token_budget, false),
            Node::Action(current) => {
                if can_branch(depth_budget, token_budget) && rng.gen_bool(GROW_PROBABILITY) {
                    expand(rng, depth_budget, token_budget, true)
                } else {
                    let others: Vec<Heuristic> =
                        Heuristic::ALL.into_iter().filter(|h| h != current).collect();
                    Node::Action(*others.choose(rng).expect("four alternatives"))
                }
            }
        };
    }
    match node {
        Node::Action(_) => node.clone(),
        Node::If {
            condition,
            then,
            otherwise,
        } => {
            // Skip whole subtrees that cannot contain the target.
            let then_end = here + then.node_count();
            let then = if target <= then_end {
                rebuild(then, level + 1, target, counter, total_tokens, limits, rng)
            } else {
                *counter += then.node_count();
                (**then).clone()
            };
            let otherwise = if target > then_end {
                rebuild(otherwise, level + 1, target, counter, total_tokens, limits, rng)
            } else {
                (**otherwise).clone()
            };
            Node::branch(*condition, then, otherwise)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seeded_generation_is_reproducible() {
        let limits = Limits::default();
        let a = random_program(&mut ChaCha8Rng::seed_from_u64(7), limits);
        let b = random_program(&mut ChaCha8Rng::seed_from_u64(7), limits);
        assert_eq!(a, b);
    }

    #[test]
    fn samples_respect_limits_and_cover_every_rule() {
        let limits = Limits::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = std::collections::BTreeSet::new();
        let mut depths = std::collections::BTreeSet::new();
        for _ in 0..10_000 {
            let p = random_program(&mut rng, limits);
            p.check(limits).unwrap();
            depths.insert(p.depth());
            collect_rules(p.root(), &mut seen);
        }
        assert_eq!(seen.len(), 5);
        assert_eq!(depths, (1..=4).collect());
    }

    fn collect_rules(node: &Node, out: &mut std::collections::BTreeSet<Heuristic>) {
        match node {
            Node::Action(h) => {
                out.insert(*h);
            }
            Node::If {
                then, otherwise, ..
            } => {
                collect_rules(then, out);
                collect_rules(otherwise, out);
            }
        }
    }

    #[test]
    fn tight_token_budget_forces_leaves() {
        let limits = Limits {
            max_depth: 4,
            max_tokens: 10,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = random_program(&mut rng, limits);
            assert!(p.token_count() <= 10);
            let q = mutate(&p, &mut rng, limits);
            assert!(q.token_count() <= 10);
        }
    }

    #[test]
    fn mutating_a_leaf_program() {
        let limits = Limits::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spt = Program::action(Heuristic::Spt);
        let mut grew = false;
        for _ in 0..200 {
            let q = mutate(&spt, &mut rng, limits);
            match q.root() {
                Node::Action(h) => assert_ne!(*h, Heuristic::Spt),
                Node::If { .. } => grew = true,
            }
        }
        assert!(grew);
        assert_eq!(spt, Program::action(Heuristic::Spt));
    }

    #[test]
    fn leaf_at_depth_limit_only_swaps() {
        let limits = Limits {
            max_depth: 1,
            max_tokens: 85,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let q = mutate(&Program::action(Heuristic::Mor), &mut rng, limits);
            assert!(matches!(q.root(), Node::Action(h) if *h != Heuristic::Mor));
        }
    }

    #[test]
    fn mutation_changes_exactly_one_subtree() {
        let limits = Limits::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let p = random_program(&mut rng, limits);
            let q = mutate(&p, &mut rng, limits);
            q.check(limits).unwrap();
            assert_ne!(p, q);
        }
    }

    #[test]
    fn root_mutation_depth_varies() {
        let limits = Limits::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let deep = loop {
            let p = random_program(&mut rng, limits);
            if p.depth() == 4 {
                break p;
            }
        };
        let mut depths = std::collections::BTreeSet::new();
        for _ in 0..2000 {
            depths.insert(mutate(&deep, &mut rng, limits).depth());
        }
        assert!(depths.contains(&1), "{depths:?}");
        assert!(depths.contains(&4));
    }
}
