//! Frameworks and the single framework rule.
//!
//! A [`Framework`] is a sample space (a decomposition of the identity) whose
//! event algebra is every subset of its indices. The algebra is never
//! materialized: an [`Event`] is an index set plus the projector built from
//! it on demand.
//!
//! Two frameworks may be used together only when every projector of one
//! commutes with every projector of the other, and then only through their
//! common refinement. [`combine_frameworks`] returns a
//! [`SingleFrameworkViolation`] value, not an error, when they do not.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg::frobenius_distance_unchecked;
use crate::properties::{refine_decompositions, Decomposition, Projector, QuantumState};
use crate::tol;

#[derive(Clone, Debug, PartialEq)]
pub struct Framework {
    name: String,
    sample_space: Decomposition,
}

impl Framework {
    pub fn new(name: impl Into<String>, sample_space: Decomposition) -> Self {
        Framework {
            name: name.into(),
            sample_space,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sample_space(&self) -> &Decomposition {
        &self.sample_space
    }

    pub fn dim(&self) -> usize {
        self.sample_space.dim()
    }

    /// The compound event "one of `indices` occurs".
    pub fn event(&self, indices: impl IntoIterator<Item = usize>) -> Result<Event> {
        let indices: BTreeSet<usize> = indices.into_iter().collect();
        if indices.is_empty() {
            return Err(Error::validation(
                "an event needs at least one sample-space index",
            ));
        }
        let projector = self.sample_space.event_projector(indices.iter().copied())?;
        Ok(Event {
            framework: self.name.clone(),
            indices,
            projector,
        })
    }

    /// The event containing every sample-space element.
    pub fn certain_event(&self) -> Event {
        self.event(0..self.sample_space.len())
            .expect("the full index set is a valid event")
    }
}

/// A member of a framework's event algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    framework: String,
    indices: BTreeSet<usize>,
    projector: Projector,
}

impl Event {
    pub fn framework(&self) -> &str {
        &self.framework
    }

    pub fn indices(&self) -> &BTreeSet<usize> {
        &self.indices
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }
}

/// Noncommuting pair that blocks combining two frameworks.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleFrameworkViolation {
    pub first_framework: String,
    pub second_framework: String,
    /// Sample-space index and label in the first framework.
    pub first: (usize, String),
    pub second: (usize, String),
    /// `‖[P, Q]‖_F` for the named pair, the largest over all pairs.
    pub commutator_norm: f64,
    /// Number of projector pairs whose commutator exceeds `1e-9`.
    pub noncommuting_pairs: usize,
}

/// Outcome of [`combine_frameworks`].
#[derive(Clone, Debug, PartialEq)]
pub enum Combination {
    Combined(Framework),
    Violation(SingleFrameworkViolation),
}

impl Combination {
    pub fn framework(&self) -> Option<&Framework> {
        match self {
            Combination::Combined(f) => Some(f),
            Combination::Violation(_) => None,
        }
    }

    pub fn violation(&self) -> Option<&SingleFrameworkViolation> {
        match self {
            Combination::Violation(v) => Some(v),
            Combination::Combined(_) => None,
        }
    }
}

fn check_same_dim(f1: &Framework, f2: &Framework) -> Result<()> {
    if f1.dim() != f2.dim() {
        return Err(Error::validation(format!(
            "frameworks {} and {} live in dimensions {} and {}",
            f1.name,
            f2.name,
            f1.dim(),
            f2.dim()
        )));
    }
    Ok(())
}

/// Every projector of `f1` commutes with every projector of `f2`.
pub fn frameworks_compatible(f1: &Framework, f2: &Framework) -> Result<bool> {
    check_same_dim(f1, f2)?;
    Ok(f1.sample_space.projectors().iter().all(|p| {
        f2.sample_space
            .projectors()
            .iter()
            .all(|q| p.commutator_norm(q) <= tol::IDENTITY)
    }))
}

/// The common refinement of two compatible frameworks, or the worst
/// noncommuting pair when they are incompatible.
pub fn combine_frameworks(f1: &Framework, f2: &Framework) -> Result<Combination> {
    check_same_dim(f1, f2)?;
    let mut worst: Option<(usize, usize, f64)> = None;
    let mut count = 0;
    for (i, p) in f1.sample_space.projectors().iter().enumerate() {
        for (j, q) in f2.sample_space.projectors().iter().enumerate() {
            let n = p.commutator_norm(q);
            if n > tol::IDENTITY {
                count += 1;
                if worst.is_none_or(|(_, _, w)| n > w) {
                    worst = Some((i, j, n));
                }
            }
        }
    }
    if let Some((i, j, n)) = worst {
        return Ok(Combination::Violation(SingleFrameworkViolation {
            first_framework: f1.name.clone(),
            second_framework: f2.name.clone(),
            first: (i, f1.sample_space.label(i).to_string()),
            second: (j, f2.sample_space.label(j).to_string()),
            commutator_norm: n,
            noncommuting_pairs: count,
        }));
    }
    let (refined, _) = refine_decompositions(&f1.sample_space, &f2.sample_space)?;
    Ok(Combination::Combined(Framework::new(
        format!("{}+{}", f1.name, f2.name),
        refined,
    )))
}

/// Probability of a compound event: the sum of its elementary Born weights.
pub fn event_probability(f: &Framework, state: &impl QuantumState, e: &Event) -> Result<f64> {
    if e.framework != f.name {
        return Err(Error::validation(format!(
            "event belongs to framework {}, not {}",
            e.framework, f.name
        )));
    }
    let rebuilt = f.sample_space.event_projector(e.indices.iter().copied())?;
    if frobenius_distance_unchecked(rebuilt.matrix(), e.projector.matrix()) > tol::IDENTITY {
        return Err(Error::validation(format!(
            "event projector does not belong to framework {}",
            f.name
        )));
    }
    if state.dim() != f.dim() {
        return Err(Error::validation("state and framework dimensions differ"));
    }
    state.probability(&e.projector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ComplexMatrix, StateVector};
    use crate::properties::spectral_decompose;

    fn spin(m: ComplexMatrix, name: &str) -> Framework {
        Framework::new(
            name,
            spectral_decompose(&m).unwrap().decomposition().clone(),
        )
    }

    fn sx() -> Framework {
        spin(
            ComplexMatrix::from_real_rows(&[&[0.0, 0.5], &[0.5, 0.0]]).unwrap(),
            "Sx",
        )
    }

    fn sz() -> Framework {
        spin(ComplexMatrix::diagonal(&[0.5, -0.5]), "Sz")
    }

    #[test]
    fn self_compatibility() {
        assert!(frameworks_compatible(&sx(), &sx()).unwrap());
        assert!(!frameworks_compatible(&sx(), &sz()).unwrap());
    }

    #[test]
    fn combining_diagonal_pair_gives_refinement() {
        let a = spin(ComplexMatrix::diagonal(&[1.0, 1.0, 2.0]), "A");
        let b = spin(ComplexMatrix::diagonal(&[3.0, 4.0, 4.0]), "B");
        let combined = combine_frameworks(&a, &b).unwrap();
        let f = combined.framework().expect("compatible");
        assert_eq!(f.sample_space().len(), 3);
        assert_eq!(f.name(), "A+B");
    }

    #[test]
    fn combining_spin_components_is_a_violation() {
        let v = combine_frameworks(&sx(), &sz()).unwrap();
        let v = v.violation().expect("Sx and Sz do not commute");
        assert_eq!(v.noncommuting_pairs, 4);
        assert!(v.commutator_norm > 0.1);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let three = Framework::new("e", Decomposition::standard_basis(3));
        assert!(frameworks_compatible(&sx(), &three).is_err());
        assert!(combine_frameworks(&sx(), &three).is_err());
    }

    #[test]
    fn event_probabilities() {
        let f = Framework::new("z", Decomposition::standard_basis(2));
        let plus = StateVector::from_real(&[1.0, 1.0]).unwrap();
        assert!((event_probability(&f, &plus, &f.certain_event()).unwrap() - 1.0).abs() < 1e-15);
        let half = event_probability(&f, &plus, &f.event([0]).unwrap()).unwrap();
        assert!((half - 0.5).abs() < 1e-15);
    }

    #[test]
    fn event_from_another_framework_is_rejected() {
        let f = Framework::new("z", Decomposition::standard_basis(2));
        let g = Framework::new("x", sx().sample_space().clone());
        let e = g.event([0]).unwrap();
        let psi = StateVector::basis(2, 0);
        assert!(event_probability(&f, &psi, &e).is_err());
        // same name, different sample space
        let impostor = Framework::new("z", sx().sample_space().clone());
        let e = impostor.event([0]).unwrap();
        assert!(event_probability(&f, &psi, &e).is_err());
        assert!(f.event(Vec::<usize>::new()).is_err());
        assert!(f.event([5]).is_err());
    }
}
