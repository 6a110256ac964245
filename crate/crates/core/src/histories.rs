//! Families of histories and the decoherence functional.
//!
//! A family starts from an initial projector `Ψ₀` at `t₀` and, at each later
//! time `t_k`, picks one projector `C_k` from that time's decomposition after
//! evolving with the step unitary `U_k`. The chain operator of a history is
//!
//! ```text
//! K(h) = C_n U_n ⋯ C_1 U_1 Ψ₀
//! ```
//!
//! and the decoherence functional is `D(h, h′) = Tr(K(h′)† K(h)) / Tr(Ψ₀)`.
//! A family is consistent when every off-diagonal entry vanishes (medium
//! decoherence, real and imaginary parts alike); only then are the diagonal
//! entries probabilities.

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::measurement::MeasurementModel;
use crate::properties::{refine_decompositions, Decomposition, Projector};
use crate::tol;

/// Default cap on the number of histories in a family.
pub const DEFAULT_MAX_HISTORIES: usize = 4096;

#[derive(Clone, Debug)]
pub struct HistoryFamily {
    initial: Projector,
    times: Vec<String>,
    steps: Vec<ComplexMatrix>,
    event_sets: Vec<Decomposition>,
}

impl HistoryFamily {
    /// `steps[k]` evolves from time `k` to time `k + 1`, where
    /// `event_sets[k]` applies. Time labels default to `t0, t1, …`.
    pub fn new(
        initial: Projector,
        steps: Vec<ComplexMatrix>,
        event_sets: Vec<Decomposition>,
    ) -> Result<Self> {
        if initial.is_zero() {
            return Err(Error::validation("initial projector must be nonzero"));
        }
        if event_sets.is_empty() {
            return Err(Error::validation("a family needs at least one later time"));
        }
        if steps.len() != event_sets.len() {
            return Err(Error::validation(format!(
                "{} step unitaries for {} later times",
                steps.len(),
                event_sets.len()
            )));
        }
        let dim = initial.dim();
        for (k, (u, d)) in steps.iter().zip(&event_sets).enumerate() {
            if u.dim() != dim || d.dim() != dim {
                return Err(Error::validation(format!(
                    "time t{} does not act on the {dim}-dimensional space",
                    k + 1
                )));
            }
            let defect = u.unitary_defect();
            if defect > tol::IDENTITY {
                return Err(Error::validation(format!(
                    "step into t{} is not unitary (‖U†U − I‖_F = {defect:e})",
                    k + 1
                )));
            }
        }
        let times = (0..=event_sets.len()).map(|k| format!("t{k}")).collect();
        Ok(HistoryFamily {
            initial,
            times,
            steps,
            event_sets,
        })
    }

    /// Family with identity dynamics between all times.
    pub fn static_family(initial: Projector, event_sets: Vec<Decomposition>) -> Result<Self> {
        let dim = initial.dim();
        let steps = vec![ComplexMatrix::identity(dim); event_sets.len()];
        Self::new(initial, steps, event_sets)
    }

    /// `[ψ]⊗M₀ ⊙ {P_α ⊗ I} ⊙ {Π_α}`: the system decomposition `at_t1` just
    /// before the measurement (no evolution from `t₀`), then the pointers
    /// after `T`.
    pub fn measurement_family(
        model: &MeasurementModel,
        prepared: &Projector,
        at_t1: &Decomposition,
    ) -> Result<Self> {
        let initial = model.initial_property(prepared)?;
        let lifted = at_t1
            .projectors()
            .iter()
            .map(|p| model.lift(p))
            .collect::<Result<Vec<_>>>()?;
        let t1 = Decomposition::new(lifted, Some(at_t1.labels().to_vec()))?;
        let total = model.total_dim();
        Self::new(
            initial,
            vec![ComplexMatrix::identity(total), model.unitary().clone()],
            vec![t1, model.pointers().clone()],
        )
    }

    pub fn with_time_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.times.len() {
            return Err(Error::validation("one label per time, including t0"));
        }
        self.times = labels;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn initial(&self) -> &Projector {
        &self.initial
    }

    pub fn times(&self) -> &[String] {
        &self.times
    }

    pub fn steps(&self) -> &[ComplexMatrix] {
        &self.steps
    }

    pub fn event_sets(&self) -> &[Decomposition] {
        &self.event_sets
    }

    /// Number of histories, `Π_k |event_sets[k]|`.
    pub fn history_count(&self) -> usize {
        self.event_sets
            .iter()
            .fold(1usize, |acc, d| acc.saturating_mul(d.len()))
    }

    /// All histories, lexicographic in the per-time indices.
    pub fn histories(&self) -> impl Iterator<Item = History> + '_ {
        let sizes: Vec<usize> = self.event_sets.iter().map(Decomposition::len).collect();
        let count = self.history_count();
        (0..count).map(move |mut n| {
            let mut choice = vec![0; sizes.len()];
            for (slot, &s) in choice.iter_mut().zip(&sizes).rev() {
                *slot = n % s;
                n /= s;
            }
            History { choice }
        })
    }

    /// Human-readable name, e.g. `a0 ⊙ pi1`.
    pub fn describe(&self, h: &History) -> String {
        h.choice
            .iter()
            .zip(&self.event_sets)
            .map(|(&i, d)| d.label(i).to_string())
            .collect::<Vec<_>>()
            .join(" ⊙ ")
    }

    /// Refines each time's decomposition with the other family's. Initial
    /// projector and dynamics must match; the decompositions must commute
    /// time by time.
    pub fn combine(&self, other: &HistoryFamily) -> Result<HistoryFamily> {
        if self.event_sets.len() != other.event_sets.len() || self.dim() != other.dim() {
            return Err(Error::validation("families have different time structure"));
        }
        if !self.initial.approx_eq(&other.initial) {
            return Err(Error::validation(
                "families have different initial projectors",
            ));
        }
        for (u, v) in self.steps.iter().zip(&other.steps) {
            if crate::linalg::frobenius_distance_unchecked(u, v) > tol::IDENTITY {
                return Err(Error::validation("families have different dynamics"));
            }
        }
        let event_sets = self
            .event_sets
            .iter()
            .zip(&other.event_sets)
            .map(|(a, b)| refine_decompositions(a, b).map(|(d, _)| d))
            .collect::<Result<Vec<_>>>()?;
        let mut family = HistoryFamily::new(self.initial.clone(), self.steps.clone(), event_sets)?;
        family.times = self.times.clone();
        Ok(family)
    }
}

/// One projector index per time after `t₀`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct History {
    pub choice: Vec<usize>,
}

impl History {
    pub fn new(choice: Vec<usize>) -> Self {
        History { choice }
    }
}

/// `K(h) = C_n U_n ⋯ C_1 U_1 Ψ₀`.
pub fn chain_operator(family: &HistoryFamily, h: &History) -> Result<ComplexMatrix> {
    if h.choice.len() != family.event_sets.len() {
        return Err(Error::validation(format!(
            "history has {} entries, the family {} times after t0",
            h.choice.len(),
            family.event_sets.len()
        )));
    }
    let mut k = family.initial.matrix().clone();
    for ((&i, u), d) in h.choice.iter().zip(&family.steps).zip(&family.event_sets) {
        let c = d.projectors().get(i).ok_or_else(|| {
            Error::validation(format!(
                "index {i} outside a {}-element decomposition",
                d.len()
            ))
        })?;
        k = &(c.matrix() * u) * &k;
    }
    Ok(k)
}

/// `D(h, h′)` over all histories in lexicographic order.
#[derive(Clone, Debug)]
pub struct DecoherenceMatrix {
    histories: Vec<History>,
    entries: Vec<C64>,
}

impl DecoherenceMatrix {
    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    pub fn histories(&self) -> &[History] {
        &self.histories
    }

    /// `D(h_i, h_j)`.
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.len() + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i, i).re).collect()
    }

    /// Largest `|D(h, h′)|` with `h ≠ h′`, and where it occurs.
    pub fn max_off_diagonal(&self) -> (f64, Option<(usize, usize)>) {
        let n = self.len();
        let mut best = (0.0, None);
        for i in 0..n {
            for j in i + 1..n {
                let m = self.get(i, j).norm();
                if m > best.0 {
                    best = (m, Some((i, j)));
                }
            }
        }
        best
    }

    /// `‖D − D†‖_F`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.get(i, j) - self.get(j, i).conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }
}

pub fn decoherence_matrix(family: &HistoryFamily) -> Result<DecoherenceMatrix> {
    decoherence_matrix_with_limit(family, DEFAULT_MAX_HISTORIES)
}

pub fn decoherence_matrix_with_limit(
    family: &HistoryFamily,
    max_histories: usize,
) -> Result<DecoherenceMatrix> {
    let count = family.history_count();
    if count > max_histories {
        return Err(Error::Capacity {
            what: "history count",
            requested: count,
            limit: max_histories,
        });
    }
    let histories: Vec<History> = family.histories().collect();
    let chains = histories
        .iter()
        .map(|h| chain_operator(family, h))
        .collect::<Result<Vec<_>>>()?;
    let norm = family.initial.rank() as f64;
    let n = histories.len();
    let mut entries = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in i..n {
            // D(h_i, h_j) = Tr(K_j† K_i)
            let d = chains[j].inner(&chains[i]) / norm;
            entries[i * n + j] = d;
            entries[j * n + i] = d.conj();
        }
    }
    Ok(DecoherenceMatrix { histories, entries })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub max_off_diagonal: f64,
    /// Histories achieving the maximum, when any off-diagonal is nonzero.
    pub worst_pair: Option<(History, History)>,
}

/// Medium decoherence: `|D(h, h′)| ≤ 1e-9` for all `h ≠ h′`.
pub fn is_consistent(family: &HistoryFamily) -> Result<ConsistencyReport> {
    Ok(consistency_of(&decoherence_matrix(family)?))
}

pub fn consistency_of(d: &DecoherenceMatrix) -> ConsistencyReport {
    let (max_off_diagonal, at) = d.max_off_diagonal();
    ConsistencyReport {
        consistent: max_off_diagonal <= tol::IDENTITY,
        max_off_diagonal,
        worst_pair: at.map(|(i, j)| (d.histories[i].clone(), d.histories[j].clone())),
    }
}

/// Probabilities of every history in a consistent family.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryProbabilities {
    pub histories: Vec<History>,
    pub probabilities: Vec<f64>,
}

impl HistoryProbabilities {
    pub fn get(&self, h: &History) -> Option<f64> {
        self.histories
            .iter()
            .position(|x| x == h)
            .map(|i| self.probabilities[i])
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Total weight of histories passing through `event`.
    pub fn event_weight(&self, event: &TimedEvent) -> f64 {
        self.histories
            .iter()
            .zip(&self.probabilities)
            .filter(|(h, _)| event.contains(h))
            .map(|(_, p)| p)
            .sum()
    }
}

/// The extended Born rule: `Pr(h) = D(h, h)`, refused for inconsistent
/// families.
pub fn history_probabilities(family: &HistoryFamily) -> Result<HistoryProbabilities> {
    let d = decoherence_matrix(family)?;
    let report = consistency_of(&d);
    if !report.consistent {
        return Err(Error::Inconsistent {
            max_off_diagonal: report.max_off_diagonal,
        });
    }
    Ok(HistoryProbabilities {
        probabilities: d.diagonal().into_iter().map(|p| p.max(0.0)).collect(),
        histories: d.histories,
    })
}

/// A set of projector indices at one time `t_k`, `k ≥ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedEvent {
    pub time: usize,
    pub indices: Vec<usize>,
}

impl TimedEvent {
    pub fn new(time: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        TimedEvent {
            time,
            indices: indices.into_iter().collect(),
        }
    }

    fn contains(&self, h: &History) -> bool {
        self.indices.contains(&h.choice[self.time - 1])
    }

    fn validate(&self, family: &HistoryFamily) -> Result<()> {
        if self.time == 0 || self.time > family.event_sets.len() {
            return Err(Error::validation(format!(
                "event time {} outside t1..t{}",
                self.time,
                family.event_sets.len()
            )));
        }
        let size = family.event_sets[self.time - 1].len();
        if self.indices.is_empty() || self.indices.iter().any(|&i| i >= size) {
            return Err(Error::validation(format!(
                "event indices must be a nonempty subset of 0..{size}"
            )));
        }
        Ok(())
    }
}

/// `Pr(target | given)` from the history probabilities of a consistent family.
pub fn conditional_probability(
    family: &HistoryFamily,
    given: &TimedEvent,
    target: &TimedEvent,
) -> Result<f64> {
    given.validate(family)?;
    target.validate(family)?;
    let probs = history_probabilities(family)?;
    let denom = probs.event_weight(given);
    if denom <= tol::NONZERO_WEIGHT {
        return Err(Error::Degenerate(format!(
            "conditioning event has probability {denom:e}"
        )));
    }
    let joint: f64 = probs
        .histories
        .iter()
        .zip(&probs.probabilities)
        .filter(|(h, _)| given.contains(h) && target.contains(h))
        .map(|(_, p)| p)
        .sum();
    Ok(joint / denom)
}

/// Three-box fixture in `C³`: initial `(|A⟩+|B⟩+|C⟩)/√3`, final event
/// `[φ]` with `φ = (|A⟩+|B⟩−|C⟩)/√3`, identity dynamics, and the
/// intermediate sample space `{[box], I − [box]}` for the given box
/// (`0 = A`, `1 = B`, `2 = C`).
pub fn three_box_family(box_index: usize) -> Result<HistoryFamily> {
    use crate::linalg::StateVector;
    let psi = StateVector::from_real(&[1.0, 1.0, 1.0])?;
    let phi = StateVector::from_real(&[1.0, 1.0, -1.0])?;
    let names = ["A", "B", "C"];
    let name = names
        .get(box_index)
        .ok_or_else(|| Error::validation("box index must be 0, 1 or 2"))?;
    let inside = Projector::diagonal(3, &[box_index]);
    let middle = Decomposition::binary(&inside, Some((name, &format!("not{name}"))))?;
    let final_set = Decomposition::binary(&Projector::ray(&phi)?, Some(("phi", "notphi")))?;
    HistoryFamily::static_family(Projector::ray(&psi)?, vec![middle, final_set])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::StateVector;
    use crate::measurement::build_pointer_model;

    fn superposition_family() -> HistoryFamily {
        let measured = Decomposition::standard_basis(2);
        let model = build_pointer_model(&measured, 3).unwrap();
        let psi = StateVector::from_real(&[1.0, 1.0]).unwrap();
        HistoryFamily::measurement_family(&model, &Projector::ray(&psi).unwrap(), &measured)
            .unwrap()
    }

    #[test]
    fn histories_enumerate_lexicographically() {
        let f = superposition_family();
        let all: Vec<Vec<usize>> = f.histories().map(|h| h.choice).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[3], vec![1, 0]);
        assert_eq!(all[5], vec![1, 2]);
    }

    #[test]
    fn single_time_identity_event_gives_initial_projector() {
        let psi = StateVector::from_real(&[0.6, 0.8]).unwrap();
        let init = Projector::ray(&psi).unwrap();
        let f =
            HistoryFamily::static_family(init.clone(), vec![Decomposition::trivial(2)]).unwrap();
        let k = chain_operator(&f, &History::new(vec![0])).unwrap();
        assert!(crate::linalg::frobenius_distance(&k, init.matrix()).unwrap() < 1e-15);
    }

    #[test]
    fn superposition_family_weights() {
        let f = superposition_family();
        let d = decoherence_matrix(&f).unwrap();
        let diag = d.diagonal();
        // histories (P1, Π1) and (P2, Π2) are choices [0,1] and [1,2]
        for (h, p) in d.histories().iter().zip(&diag) {
            let want = if h.choice == [0, 1] || h.choice == [1, 2] {
                0.5
            } else {
                0.0
            };
            assert!((p - want).abs() < 1e-12, "{:?} → {p}", h.choice);
        }
        assert!(d.max_off_diagonal().0 < 1e-12);
    }

    #[test]
    fn two_time_family_gives_born_weights() {
        let psi = StateVector::from_real(&[0.6, 0.8]).unwrap();
        let f = HistoryFamily::static_family(
            Projector::ray(&psi).unwrap(),
            vec![Decomposition::standard_basis(2)],
        )
        .unwrap();
        let d = decoherence_matrix(&f).unwrap();
        let diag = d.diagonal();
        assert!((diag[0] - 0.36).abs() < 1e-12 && (diag[1] - 0.64).abs() < 1e-12);
    }

    #[test]
    fn three_box_single_families_are_consistent_and_combined_is_not() {
        let fa = three_box_family(0).unwrap();
        let fb = three_box_family(1).unwrap();
        assert!(is_consistent(&fa).unwrap().consistent);
        assert!(is_consistent(&fb).unwrap().consistent);
        let combined = fa.combine(&fb).unwrap();
        let report = is_consistent(&combined).unwrap();
        assert!(!report.consistent);
        // ⟨ψ|B⟩⟨B|φ⟩⟨φ|A⟩⟨A|ψ⟩ = (1/√3)^4
        assert!((report.max_off_diagonal - 1.0 / 9.0).abs() < 1e-12);
        assert!(matches!(
            history_probabilities(&combined),
            Err(Error::Inconsistent { .. })
        ));
    }

    #[test]
    fn conditional_perfect_correlation() {
        let f = superposition_family();
        let p1_given_pi1 =
            conditional_probability(&f, &TimedEvent::new(2, [1]), &TimedEvent::new(1, [0]))
                .unwrap();
        let pi1_given_p1 =
            conditional_probability(&f, &TimedEvent::new(1, [0]), &TimedEvent::new(2, [1]))
                .unwrap();
        assert!((p1_given_pi1 - 1.0).abs() < 1e-12);
        assert!((pi1_given_p1 - 1.0).abs() < 1e-12);
        let self_cond =
            conditional_probability(&f, &TimedEvent::new(1, [0]), &TimedEvent::new(1, [0]))
                .unwrap();
        assert!((self_cond - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditioning_on_impossible_event_is_refused() {
        let f = superposition_family();
        let r = conditional_probability(&f, &TimedEvent::new(2, [0]), &TimedEvent::new(1, [0]));
        assert!(matches!(r, Err(Error::Degenerate(_))));
        assert!(
            conditional_probability(&f, &TimedEvent::new(3, [0]), &TimedEvent::new(1, [0]))
                .is_err()
        );
        assert!(
            conditional_probability(&f, &TimedEvent::new(1, [7]), &TimedEvent::new(1, [0]))
                .is_err()
        );
    }

    #[test]
    fn chain_operator_rejects_bad_history() {
        let f = superposition_family();
        assert!(chain_operator(&f, &History::new(vec![0])).is_err());
        assert!(chain_operator(&f, &History::new(vec![0, 3])).is_err());
    }

    #[test]
    fn capacity_limit() {
        let f = superposition_family();
        assert!(matches!(
            decoherence_matrix_with_limit(&f, 5),
            Err(Error::Capacity { requested: 6, .. })
        ));
    }
}
