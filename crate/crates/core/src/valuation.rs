//! Noncontextual `{0,1}` valuations over overlapping sample spaces.
//!
//! The realist premise that every observable has a definite value at all
//! times reduces, at the level of properties, to a valuation: each projector
//! gets 0 or 1, exactly one projector in every decomposition gets 1, and a
//! projector shared by several decompositions gets the same value in all of
//! them. Values of a general observable `A = Σ a_α P_α` are then read off as
//! the `a_α` whose indicator is 1, so a failure at the projector level already
//! rules out real-valued assignments `λ(A)`. The converse reduction is not
//! attempted: this module only decides the projector-level problem.
//!
//! Whether a valuation exists is decided by an exhaustive backtracking
//! search; an empty result comes with a certificate counting the search
//! nodes explored. Nothing about particular Kochen–Specker sets is built in:
//! uncolorability is always a search result on input data.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg::frobenius_distance_unchecked;
use crate::properties::{Decomposition, Projector};
use crate::tol;

/// Largest identifier count the search accepts.
pub const MAX_IDENTIFIERS: usize = 64;

/// Contexts over a pool of shared identifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct ValuationProblem {
    identifiers: Vec<String>,
    contexts: Vec<Vec<usize>>,
    projectors: Option<Vec<Projector>>,
}

impl ValuationProblem {
    /// A purely combinatorial problem: contexts are sets of identifier
    /// indices. Each context must be nonempty and free of repeats.
    pub fn from_contexts(identifiers: Vec<String>, contexts: Vec<Vec<usize>>) -> Result<Self> {
        for (c, ctx) in contexts.iter().enumerate() {
            if ctx.is_empty() {
                return Err(Error::validation(format!("context {c} is empty")));
            }
            if let Some(&bad) = ctx.iter().find(|&&i| i >= identifiers.len()) {
                return Err(Error::validation(format!(
                    "context {c} refers to unknown identifier {bad}"
                )));
            }
            let unique: BTreeSet<_> = ctx.iter().collect();
            if unique.len() != ctx.len() {
                return Err(Error::validation(format!(
                    "context {c} repeats an identifier"
                )));
            }
        }
        Ok(ValuationProblem {
            identifiers,
            contexts,
            projectors: None,
        })
    }

    /// Same as [`from_contexts`](Self::from_contexts) with identifiers given
    /// by name.
    pub fn from_named_contexts(contexts: &[Vec<String>]) -> Result<Self> {
        let mut identifiers: Vec<String> = Vec::new();
        let mut indexed = Vec::with_capacity(contexts.len());
        for ctx in contexts {
            let mut ids = Vec::with_capacity(ctx.len());
            for name in ctx {
                let i = match identifiers.iter().position(|x| x == name) {
                    Some(i) => i,
                    None => {
                        identifiers.push(name.clone());
                        identifiers.len() - 1
                    }
                };
                ids.push(i);
            }
            indexed.push(ids);
        }
        Self::from_contexts(identifiers, indexed)
    }

    pub fn identifiers(&self) -> &[String] {
        &self.identifiers
    }

    pub fn contexts(&self) -> &[Vec<usize>] {
        &self.contexts
    }

    /// Projector behind each identifier, when the problem came from matrices.
    pub fn projectors(&self) -> Option<&[Projector]> {
        self.projectors.as_deref()
    }

    /// Contexts each identifier belongs to.
    pub fn memberships(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.identifiers.len()];
        for (c, ctx) in self.contexts.iter().enumerate() {
            for &i in ctx {
                m[i].push(c);
            }
        }
        m
    }

    /// Whether the bipartite identifier–context incidence graph has no
    /// cycles.
    pub fn is_acyclic(&self) -> bool {
        // forest ⇔ edges = vertices − components, over vertices that occur
        let n_ids = self.identifiers.len();
        let n = n_ids + self.contexts.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (c, ctx) in self.contexts.iter().enumerate() {
            for &i in ctx {
                let (a, b) = (find(&mut parent, i), find(&mut parent, n_ids + c));
                if a == b {
                    return false;
                }
                parent[a] = b;
            }
        }
        true
    }
}

/// Which contexts share which identifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct SharingReport {
    /// `(context i, context j, shared identifiers)` for `i < j` with a
    /// nonempty overlap.
    pub bridges: Vec<(usize, usize, Vec<usize>)>,
    /// Identifiers appearing in more than one context.
    pub shared: Vec<usize>,
    /// Some projector of one context fails to commute with some projector of
    /// another.
    pub noncommuting: bool,
}

/// Assigns one identifier per class of equal projectors (Frobenius distance
/// `≤ 1e-9`) across the given decompositions. Identifiers are named
/// `c{context}.{label}` after their first occurrence.
pub fn detect_shared_projectors(
    raw: &[Decomposition],
) -> Result<(ValuationProblem, SharingReport)> {
    if let Some(first) = raw.first() {
        if raw.iter().any(|d| d.dim() != first.dim()) {
            return Err(Error::validation("contexts live in different dimensions"));
        }
    }
    let mut pool: Vec<Projector> = Vec::new();
    let mut identifiers: Vec<String> = Vec::new();
    let mut contexts = Vec::with_capacity(raw.len());
    for (c, d) in raw.iter().enumerate() {
        let mut ids = Vec::with_capacity(d.len());
        for (k, p) in d.projectors().iter().enumerate() {
            let id = match pool
                .iter()
                .position(|q| frobenius_distance_unchecked(q.matrix(), p.matrix()) <= tol::IDENTITY)
            {
                Some(i) => i,
                None => {
                    pool.push(p.clone());
                    identifiers.push(format!("c{c}.{}", d.label(k)));
                    pool.len() - 1
                }
            };
            ids.push(id);
        }
        contexts.push(ids);
    }

    let mut bridges = Vec::new();
    let mut shared = BTreeSet::new();
    let mut noncommuting = false;
    for i in 0..raw.len() {
        for j in i + 1..raw.len() {
            let common: Vec<usize> = contexts[i]
                .iter()
                .filter(|id| contexts[j].contains(id))
                .copied()
                .collect();
            shared.extend(common.iter().copied());
            if !common.is_empty() {
                bridges.push((i, j, common));
            }
            noncommuting |= raw[i].projectors().iter().any(|p| {
                raw[j]
                    .projectors()
                    .iter()
                    .any(|q| p.commutator_norm(q) > tol::IDENTITY)
            });
        }
    }
    let mut problem = ValuationProblem::from_contexts(identifiers, contexts)?;
    problem.projectors = Some(pool);
    Ok((
        problem,
        SharingReport {
            bridges,
            shared: shared.into_iter().collect(),
            noncommuting,
        },
    ))
}

/// An assignment of 0 or 1 to every identifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Valuation {
    pub assignment: Vec<bool>,
}

impl Valuation {
    /// Exactly one `1` in every context.
    pub fn satisfies(&self, problem: &ValuationProblem) -> bool {
        self.assignment.len() == problem.identifiers.len()
            && problem
                .contexts
                .iter()
                .all(|ctx| ctx.iter().filter(|&&i| self.assignment[i]).count() == 1)
    }

    /// Identifiers valued 1.
    pub fn true_identifiers<'a>(&self, problem: &'a ValuationProblem) -> Vec<&'a str> {
        self.assignment
            .iter()
            .zip(&problem.identifiers)
            .filter(|(&v, _)| v)
            .map(|(_, n)| n.as_str())
            .collect()
    }
}

/// Proof of exhaustion when no valuation exists.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExhaustionCertificate {
    /// Partial assignments visited by the search.
    pub nodes_examined: u64,
    /// Branches cut off by propagation conflicts.
    pub branches_pruned: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(Valuation),
    Exhausted(ExhaustionCertificate),
}

impl SearchOutcome {
    pub fn valuation(&self) -> Option<&Valuation> {
        match self {
            SearchOutcome::Found(v) => Some(v),
            SearchOutcome::Exhausted(_) => None,
        }
    }
}

/// Backtracking search for a valuation.
///
/// Contexts are visited by descending overlap degree (stable, so ties keep
/// input order). In each context the search either accepts an identifier
/// that is already 1, or branches on which unassigned identifier becomes 1;
/// after every choice all contexts are checked for two 1s or for having no
/// candidate left.
pub fn search_valuation(problem: &ValuationProblem) -> Result<SearchOutcome> {
    let n = problem.identifiers.len();
    if n > MAX_IDENTIFIERS {
        return Err(Error::Capacity {
            what: "valuation identifiers",
            requested: n,
            limit: MAX_IDENTIFIERS,
        });
    }
    let memberships = problem.memberships();
    let degree =
        |ctx: &Vec<usize>| -> usize { ctx.iter().map(|&i| memberships[i].len() - 1).sum() };
    let mut order: Vec<usize> = (0..problem.contexts.len()).collect();
    order.sort_by_key(|&c| std::cmp::Reverse(degree(&problem.contexts[c])));

    let mut search = Search {
        problem,
        order,
        state: vec![None; n],
        nodes: 0,
        pruned: 0,
    };
    if search.descend(0) {
        let assignment = search.state.iter().map(|v| v.unwrap_or(false)).collect();
        let valuation = Valuation { assignment };
        debug_assert!(valuation.satisfies(problem));
        Ok(SearchOutcome::Found(valuation))
    } else {
        Ok(SearchOutcome::Exhausted(ExhaustionCertificate {
            nodes_examined: search.nodes,
            branches_pruned: search.pruned,
        }))
    }
}

struct Search<'a> {
    problem: &'a ValuationProblem,
    order: Vec<usize>,
    state: Vec<Option<bool>>,
    nodes: u64,
    pruned: u64,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize) -> bool {
        self.nodes += 1;
        let Some(&c) = self.order.get(depth) else {
            return true;
        };
        let ctx = &self.problem.contexts[c];
        let ones = ctx.iter().filter(|&&i| self.state[i] == Some(true)).count();
        match ones {
            0 => {
                let free: Vec<usize> = ctx
                    .iter()
                    .copied()
                    .filter(|&i| self.state[i].is_none())
                    .collect();
                for &pick in &free {
                    let saved = self.state.clone();
                    for &i in &free {
                        self.state[i] = Some(i == pick);
                    }
                    if self.consistent() {
                        if self.descend(depth + 1) {
                            return true;
                        }
                    } else {
                        self.pruned += 1;
                    }
                    self.state = saved;
                }
                false
            }
            1 => {
                let saved = self.state.clone();
                for &i in ctx {
                    if self.state[i].is_none() {
                        self.state[i] = Some(false);
                    }
                }
                if self.consistent() && self.descend(depth + 1) {
                    return true;
                }
                self.state = saved;
                false
            }
            _ => false,
        }
    }

    /// No context has two 1s, and every context still has a 1 or a free
    /// identifier.
    fn consistent(&self) -> bool {
        self.problem.contexts.iter().all(|ctx| {
            let mut ones = 0;
            let mut free = 0;
            for &i in ctx {
                match self.state[i] {
                    Some(true) => ones += 1,
                    None => free += 1,
                    Some(false) => {}
                }
            }
            ones <= 1 && (ones == 1 || free > 0)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ComplexMatrix;
    use crate::properties::spectral_decompose;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn lone_context_is_satisfiable() {
        let p = ValuationProblem::from_contexts(names(3), vec![vec![0, 1, 2]]).unwrap();
        let v = search_valuation(&p).unwrap();
        let v = v.valuation().unwrap();
        assert!(v.satisfies(&p));
        assert_eq!(v.assignment, vec![true, false, false]);
    }

    #[test]
    fn disjoint_contexts_are_satisfiable() {
        let p = ValuationProblem::from_contexts(names(4), vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert!(search_valuation(&p)
            .unwrap()
            .valuation()
            .unwrap()
            .satisfies(&p));
    }

    #[test]
    fn odd_cycle_of_pairs_is_not() {
        // three 2-element contexts on a triangle: each vertex in two contexts
        let p = ValuationProblem::from_contexts(names(3), vec![vec![0, 1], vec![1, 2], vec![2, 0]])
            .unwrap();
        match search_valuation(&p).unwrap() {
            SearchOutcome::Exhausted(cert) => assert!(cert.nodes_examined > 0),
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_contexts_share_everything() {
        let d = Decomposition::standard_basis(3);
        let (p, report) = detect_shared_projectors(&[d.clone(), d]).unwrap();
        assert_eq!(p.identifiers().len(), 3);
        assert_eq!(report.shared, vec![0, 1, 2]);
        assert_eq!(report.bridges, vec![(0, 1, vec![0, 1, 2])]);
        assert!(!report.noncommuting);
    }

    #[test]
    fn spin_components_share_nothing() {
        let x = spectral_decompose(
            &ComplexMatrix::from_real_rows(&[&[0.0, 0.5], &[0.5, 0.0]]).unwrap(),
        )
        .unwrap();
        let z = spectral_decompose(&ComplexMatrix::diagonal(&[0.5, -0.5])).unwrap();
        let (p, report) =
            detect_shared_projectors(&[x.decomposition().clone(), z.decomposition().clone()])
                .unwrap();
        assert_eq!(p.identifiers().len(), 4);
        assert!(report.shared.is_empty());
        assert!(report.noncommuting);
    }

    #[test]
    fn capacity_is_enforced() {
        let p = ValuationProblem::from_contexts(names(65), vec![(0..65).collect()]).unwrap();
        assert!(matches!(search_valuation(&p), Err(Error::Capacity { .. })));
    }

    #[test]
    fn malformed_contexts_are_rejected() {
        assert!(ValuationProblem::from_contexts(names(2), vec![vec![]]).is_err());
        assert!(ValuationProblem::from_contexts(names(2), vec![vec![0, 0]]).is_err());
        assert!(ValuationProblem::from_contexts(names(2), vec![vec![0, 2]]).is_err());
    }

    #[test]
    fn acyclicity() {
        let tree =
            ValuationProblem::from_contexts(names(5), vec![vec![0, 1, 2], vec![2, 3], vec![3, 4]])
                .unwrap();
        assert!(tree.is_acyclic());
        let cycle =
            ValuationProblem::from_contexts(names(3), vec![vec![0, 1], vec![1, 2], vec![2, 0]])
                .unwrap();
        assert!(!cycle.is_acyclic());
    }
}
