//! Fully quantum measurement models.
//!
//! The measured system lives in `H_s`, the apparatus (with whatever
//! environment matters) in `H_m`, and the pair evolves from just before the
//! measurement to just after it under a unitary `T` on `H_s ⊗ H_m`. The
//! apparatus starts in a ready property `M₀`, and the outcome is read from a
//! decomposition of the identity into pointer properties `Π_1 … Π_n` plus a
//! catch-all `Π₀ = I − Σ_{α≥1} Π_α`.
//!
//! An apparatus is calibrated when every evolved measured property
//! `V_α = T (P_α ⊗ M₀) T†` sits inside its own pointer subspace:
//! `Π_α' V_α = δ_αα' V_α`. Outcome probabilities for an arbitrary initial
//! property `P̂` follow from the Born rule applied to
//! `V̂ = T (P̂ ⊗ M₀) T†`, which is only a pre-probability: it generally does not
//! commute with the pointer projectors and is not itself an outcome.
//!
//! [`build_pointer_model`] constructs a calibrated apparatus for any
//! decomposition. Pointer index `α ≥ 1` always belongs to measured projector
//! `α − 1`; index `0` is the catch-all.

use crate::error::{Error, Result};
use crate::linalg::{tensor_product_with_limit, ComplexMatrix, DEFAULT_MAX_DIM};
use crate::properties::{common_refinement, Decomposition, Observable, Projector, Refinement};
use crate::tol;

/// System, apparatus, dynamics and pointer read-out.
#[derive(Clone, Debug)]
pub struct MeasurementModel {
    dim_s: usize,
    dim_m: usize,
    ready: Projector,
    unitary: ComplexMatrix,
    pointers: Decomposition,
    measured: Decomposition,
    refinement: Option<Refinement>,
}

impl MeasurementModel {
    /// Assembles a model from its parts.
    ///
    /// Checks dimensions, unitarity of `T` (within `1e-9`) and that there is
    /// one pointer per measured projector plus the catch-all at index 0.
    /// Calibration is not enforced here; see [`verify_calibration`].
    pub fn new(
        ready: Projector,
        unitary: ComplexMatrix,
        pointers: Decomposition,
        measured: Decomposition,
    ) -> Result<Self> {
        let dim_s = measured.dim();
        let dim_m = ready.dim();
        let total = dim_s * dim_m;
        if unitary.dim() != total || pointers.dim() != total {
            return Err(Error::validation(format!(
                "T and the pointers must act on the {total}-dimensional joint space"
            )));
        }
        if ready.is_zero() {
            return Err(Error::validation("the ready property M₀ must be nonzero"));
        }
        let defect = unitary.unitary_defect();
        if defect > tol::IDENTITY {
            return Err(Error::validation(format!(
                "T is not unitary (‖T†T − I‖_F = {defect:e})"
            )));
        }
        if pointers.len() != measured.len() + 1 {
            return Err(Error::validation(format!(
                "{} measured properties need {} pointers including Π₀, got {}",
                measured.len(),
                measured.len() + 1,
                pointers.len()
            )));
        }
        Ok(MeasurementModel {
            dim_s,
            dim_m,
            ready,
            unitary,
            pointers,
            measured,
            refinement: None,
        })
    }

    pub fn dim_s(&self) -> usize {
        self.dim_s
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn total_dim(&self) -> usize {
        self.dim_s * self.dim_m
    }

    /// `M₀`.
    pub fn ready(&self) -> &Projector {
        &self.ready
    }

    /// `T(t₂, t₁)`; its adjoint is `T(t₁, t₂)`.
    pub fn unitary(&self) -> &ComplexMatrix {
        &self.unitary
    }

    /// `{Π₀, Π₁, …, Π_n}`.
    pub fn pointers(&self) -> &Decomposition {
        &self.pointers
    }

    /// The system decomposition the apparatus was built to measure.
    pub fn measured(&self) -> &Decomposition {
        &self.measured
    }

    /// Present for joint models: carries `(a_j, b_j)` for each pointer `Ξ_j`.
    pub fn refinement(&self) -> Option<&Refinement> {
        self.refinement.as_ref()
    }

    /// Pointer index registering measured projector `k`.
    pub fn pointer_for(&self, k: usize) -> usize {
        k + 1
    }

    /// Same apparatus with different dynamics, e.g. to model a faulty setup.
    pub fn with_unitary(&self, unitary: ComplexMatrix) -> Result<Self> {
        let mut m = MeasurementModel::new(
            self.ready.clone(),
            unitary,
            self.pointers.clone(),
            self.measured.clone(),
        )?;
        m.refinement = self.refinement.clone();
        Ok(m)
    }

    /// `P ⊗ I_m`.
    pub fn lift(&self, p: &Projector) -> Result<Projector> {
        self.check_system(p)?;
        let m = tensor_product_with_limit(
            p.matrix(),
            &ComplexMatrix::identity(self.dim_m),
            usize::MAX,
        )?;
        Projector::new(m)
    }

    /// `P ⊗ M₀`.
    pub fn initial_property(&self, p: &Projector) -> Result<Projector> {
        self.check_system(p)?;
        Projector::new(tensor_product_with_limit(
            p.matrix(),
            self.ready.matrix(),
            usize::MAX,
        )?)
    }

    fn check_system(&self, p: &Projector) -> Result<()> {
        if p.dim() != self.dim_s {
            return Err(Error::validation(format!(
                "system property has dimension {}, the measured system {}",
                p.dim(),
                self.dim_s
            )));
        }
        Ok(())
    }

    fn evolved_matrix(&self, p: &Projector) -> Result<ComplexMatrix> {
        self.check_system(p)?;
        let start = tensor_product_with_limit(p.matrix(), self.ready.matrix(), usize::MAX)?;
        Ok(self.unitary.conjugate(&start))
    }
}

/// Construction options for [`build_pointer_model_with`].
#[derive(Clone, Debug)]
pub struct PointerOptions {
    /// Rank of `M₀`; pointer properties become blocks of the same rank.
    pub ready_rank: usize,
    /// Label prefix: pointers are `{prefix}0 … {prefix}n`.
    pub prefix: String,
    /// Cap on `dim_s · dim_m`.
    pub max_dim: usize,
}

impl Default for PointerOptions {
    fn default() -> Self {
        PointerOptions {
            ready_rank: 1,
            prefix: "pi".to_string(),
            max_dim: DEFAULT_MAX_DIM,
        }
    }
}

/// A calibrated apparatus for `measured` with a pure ready state.
pub fn build_pointer_model(measured: &Decomposition, dim_m: usize) -> Result<MeasurementModel> {
    build_pointer_model_with(measured, dim_m, &PointerOptions::default())
}

/// A calibrated apparatus for `measured`.
///
/// Apparatus basis states are split into consecutive blocks of
/// `ready_rank` states: block 0 is `M₀`, block `α` is the pointer for
/// measured projector `α − 1`, and anything left over belongs to `Π₀`. The
/// dynamics is the controlled permutation `T = Σ_α P_α ⊗ S_α` where `S_α`
/// swaps block 0 with block `α`; in a basis adapted to the decomposition this
/// is the permutation `|e⟩⊗|m₀⟩ ↦ |e⟩⊗|m_α⟩` for `|e⟩` in the range of `P_α`.
pub fn build_pointer_model_with(
    measured: &Decomposition,
    dim_m: usize,
    options: &PointerOptions,
) -> Result<MeasurementModel> {
    let r = options.ready_rank;
    if r == 0 {
        return Err(Error::validation("the ready property needs rank ≥ 1"));
    }
    let n = measured.len();
    let needed = r * (n + 1);
    if dim_m < needed {
        return Err(Error::Capacity {
            what: "apparatus dimension",
            requested: needed,
            limit: dim_m,
        });
    }
    let dim_s = measured.dim();
    let total = dim_s.saturating_mul(dim_m);
    if total > options.max_dim {
        return Err(Error::Capacity {
            what: "joint system-apparatus dimension",
            requested: total,
            limit: options.max_dim,
        });
    }

    let block = |b: usize| -> Vec<usize> { (b * r..(b + 1) * r).collect() };
    let ready = Projector::diagonal(dim_m, &block(0));

    let mut unitary = ComplexMatrix::zeros(total);
    for (k, p) in measured.projectors().iter().enumerate() {
        let swap = block_swap(dim_m, r, k + 1);
        unitary = &unitary + &tensor_product_with_limit(p.matrix(), &swap, options.max_dim)?;
    }

    let eye_s = ComplexMatrix::identity(dim_s);
    let mut pointer_projectors = Vec::with_capacity(n + 1);
    let mut sum = ComplexMatrix::zeros(total);
    for alpha in 1..=n {
        let m_alpha = Projector::diagonal(dim_m, &block(alpha));
        let pi = tensor_product_with_limit(&eye_s, m_alpha.matrix(), options.max_dim)?;
        sum = &sum + &pi;
        pointer_projectors.push(Projector::new(pi)?);
    }
    let catch_all = Projector::new(&ComplexMatrix::identity(total) - &sum)?;
    pointer_projectors.insert(0, catch_all);
    let labels = (0..=n).map(|a| format!("{}{a}", options.prefix)).collect();
    let pointers = Decomposition::new(pointer_projectors, Some(labels))?;

    MeasurementModel::new(ready, unitary, pointers, measured.clone())
}

/// Permutation matrix exchanging apparatus block 0 with block `b`.
fn block_swap(dim_m: usize, r: usize, b: usize) -> ComplexMatrix {
    let mut perm: Vec<usize> = (0..dim_m).collect();
    for i in 0..r {
        perm.swap(i, b * r + i);
    }
    let mut s = ComplexMatrix::zeros(dim_m);
    for (from, &to) in perm.iter().enumerate() {
        s[(to, from)] = crate::linalg::c(1.0, 0.0);
    }
    s
}

/// `V̂ = T (P̂ ⊗ M₀) T†` together with the `P̂` it came from.
#[derive(Clone, Debug)]
pub struct EvolvedProperty {
    pub evolved: Projector,
    pub source: Projector,
}

impl EvolvedProperty {
    pub fn matrix(&self) -> &ComplexMatrix {
        self.evolved.matrix()
    }
}

/// Unitarily evolves a system property through the apparatus.
pub fn evolve_property(model: &MeasurementModel, p_hat: &Projector) -> Result<EvolvedProperty> {
    model.check_system(p_hat)?;
    if p_hat.is_zero() {
        return Err(Error::validation(
            "the zero projector is a property that is never true",
        ));
    }
    let evolved = Projector::new(model.evolved_matrix(p_hat)?)?;
    Ok(EvolvedProperty {
        evolved,
        source: p_hat.clone(),
    })
}

/// Pointer probabilities, in pointer order (catch-all first).
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    labels: Vec<String>,
    probabilities: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.probabilities[i])
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.labels
            .iter()
            .map(String::as_str)
            .zip(self.probabilities.iter().copied())
    }
}

/// `Pr(Π_α | P̂) = Tr(Π_α V̂) / Tr(V̂)` for every pointer.
pub fn born_probabilities(
    model: &MeasurementModel,
    p_hat: &Projector,
) -> Result<OutcomeDistribution> {
    let v = model.evolved_matrix(p_hat)?;
    let norm = v.trace().re;
    if norm <= tol::NONZERO_WEIGHT {
        return Err(Error::Degenerate(format!(
            "Tr(V̂) = {norm:e}: the initial property has no weight"
        )));
    }
    let probabilities = model
        .pointers
        .projectors()
        .iter()
        .map(|pi| (pi.matrix().trace_product(&v).re / norm).clamp(0.0, 1.0))
        .collect();
    Ok(OutcomeDistribution {
        labels: model.pointers.labels().to_vec(),
        probabilities,
    })
}

/// Worst deviation from `Π_α' V_α = δ_αα' V_α`.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationReport {
    /// `‖Π_α' V_α − δ_αα' V_α‖_F`, rows indexed by measured projector,
    /// columns by pointer (catch-all first).
    pub violations: Vec<Vec<f64>>,
    pub max_violation: f64,
}

impl CalibrationReport {
    pub fn passes(&self) -> bool {
        self.max_violation <= tol::IDENTITY
    }

    pub fn passes_at(&self, tolerance: f64) -> bool {
        self.max_violation <= tolerance
    }
}

/// Checks that each measured property ends up in, and only in, its pointer.
pub fn verify_calibration(model: &MeasurementModel) -> CalibrationReport {
    let mut violations = Vec::with_capacity(model.measured.len());
    let mut max_violation: f64 = 0.0;
    for (k, p) in model.measured.projectors().iter().enumerate() {
        let v = model
            .evolved_matrix(p)
            .expect("measured projectors match the system dimension");
        let row: Vec<f64> = model
            .pointers
            .projectors()
            .iter()
            .enumerate()
            .map(|(alpha, pi)| {
                let piv = pi.matrix() * &v;
                if alpha == model.pointer_for(k) {
                    (&piv - &v).frobenius_norm()
                } else {
                    piv.frobenius_norm()
                }
            })
            .collect();
        max_violation = row.iter().copied().fold(max_violation, f64::max);
        violations.push(row);
    }
    CalibrationReport {
        violations,
        max_violation,
    }
}

/// A calibrated apparatus measuring two compatible observables at once, by
/// measuring their common refinement. Pointers are labelled `xi0 … xin`.
pub fn build_joint_model(a: &Observable, b: &Observable, dim_m: usize) -> Result<MeasurementModel> {
    build_joint_model_with(
        a,
        b,
        dim_m,
        &PointerOptions {
            prefix: "xi".to_string(),
            ..PointerOptions::default()
        },
    )
}

pub fn build_joint_model_with(
    a: &Observable,
    b: &Observable,
    dim_m: usize,
    options: &PointerOptions,
) -> Result<MeasurementModel> {
    let refinement = common_refinement(a, b)?;
    let mut model = build_pointer_model_with(refinement.decomposition(), dim_m, options)?;
    model.refinement = Some(refinement);
    Ok(model)
}

fn check_pointer_indices(model: &MeasurementModel, pointers: &[usize]) -> Result<()> {
    if let Some(&bad) = pointers.iter().find(|&&i| i >= model.pointers.len()) {
        return Err(Error::validation(format!(
            "pointer index {bad} outside 0..{}",
            model.pointers.len()
        )));
    }
    Ok(())
}

/// `Pr(⋃_{α∈pointers} Π_α | P̂)` for any nonzero initial property.
pub fn outcome_set_probability(
    model: &MeasurementModel,
    p_hat: &Projector,
    pointers: &[usize],
) -> Result<f64> {
    check_pointer_indices(model, pointers)?;
    let dist = born_probabilities(model, p_hat)?;
    let mut seen = vec![false; dist.probabilities.len()];
    let mut total = 0.0;
    for &i in pointers {
        if !std::mem::replace(&mut seen[i], true) {
            total += dist.probabilities[i];
        }
    }
    Ok(total)
}

/// Probability of a set of pointers given a coarse property `p`, which must
/// be a sum of measured projectors.
///
/// When `p = R_{j₁} + … + R_{j_k}` and the pointers are exactly those of the
/// `R_j`, the result is 1 by linearity of the calibration condition.
pub fn coarse_outcome_probability(
    model: &MeasurementModel,
    p: &Projector,
    pointers: &[usize],
) -> Result<f64> {
    model.check_system(p)?;
    if model.measured.express_as_sum(p).is_none() {
        return Err(Error::validation(
            "property is not a sum of the apparatus's measured projectors",
        ));
    }
    outcome_set_probability(model, p, pointers)
}

/// Pointers whose measured projectors sum to `p`, if `p` is such a sum.
pub fn pointers_for_sum(model: &MeasurementModel, p: &Projector) -> Option<Vec<usize>> {
    model
        .measured
        .express_as_sum(p)
        .map(|ks| ks.into_iter().map(|k| model.pointer_for(k)).collect())
}

/// Outcome statistics of observable A read from an apparatus.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    /// A's eigenvalues, ascending as in A's decomposition.
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Weight on the catch-all pointer.
    pub catch_all: f64,
}

/// Probabilities of A's eigenvalues, summing pointer probabilities over the
/// refinement elements that share an `a_j`. Models without a refinement
/// measure A's own decomposition, one pointer per eigenvalue.
pub fn a_marginal(model: &MeasurementModel, p_hat: &Projector) -> Result<Marginal> {
    let dist = born_probabilities(model, p_hat)?;
    let catch_all = dist.probabilities[0];
    match &model.refinement {
        Some(r) => {
            let count = r.parent_a().iter().copied().max().map_or(0, |m| m + 1);
            let mut values = vec![f64::NAN; count];
            let mut probabilities = vec![0.0; count];
            for (j, (&alpha, &a)) in r.parent_a().iter().zip(r.values_a()).enumerate() {
                values[alpha] = a;
                probabilities[alpha] += dist.probabilities[model.pointer_for(j)];
            }
            Ok(Marginal {
                values,
                probabilities,
                catch_all,
            })
        }
        None => Err(Error::validation(
            "apparatus carries no eigenvalue annotations; use a joint model or born_probabilities",
        )),
    }
}

/// A-marginals from two apparatuses co-measuring A with B and with C.
#[derive(Clone, Debug, PartialEq)]
pub struct NoncontextualityReport {
    pub with_b: Marginal,
    pub with_c: Marginal,
    pub max_difference: f64,
    /// `‖[B, C]‖_F`; typically nonzero.
    pub commutator_bc: f64,
}

impl NoncontextualityReport {
    pub fn passes(&self) -> bool {
        self.max_difference <= tol::IDENTITY
    }
}

/// Builds apparatus `m′` for (A, B) and `m″` for (A, C) and compares the
/// statistics of A's eigenvalues for the same initial property.
pub fn noncontextuality_check(
    a: &Observable,
    b: &Observable,
    c: &Observable,
    p_hat: &Projector,
    dim_m: usize,
) -> Result<NoncontextualityReport> {
    let m_b = build_joint_model(a, b, dim_m)?;
    let m_c = build_joint_model(a, c, dim_m)?;
    let with_b = a_marginal(&m_b, p_hat)?;
    let with_c = a_marginal(&m_c, p_hat)?;
    let max_difference = with_b
        .probabilities
        .iter()
        .zip(&with_c.probabilities)
        .map(|(x, y)| (x - y).abs())
        .fold((with_b.catch_all - with_c.catch_all).abs(), f64::max);
    let commutator_bc = b.matrix().commutator(&c.matrix()).frobenius_norm();
    Ok(NoncontextualityReport {
        with_b,
        with_c,
        max_difference,
        commutator_bc,
    })
}

/// Counterfactual reasoning through a pivot property.
///
/// The actual-world outcome (the pointers of the actual apparatus whose
/// measured projectors make up `pivot`) is traced back to `pivot` at the
/// earlier time; from there the counterfactual apparatus is run forward.
/// Returns the probability that the counterfactual apparatus shows a pointer
/// from which `pivot` can be inferred.
///
/// Both apparatuses must measure `pivot` as a sum of their measured
/// projectors, and in the actual apparatus the outcome must imply the pivot:
/// its pointers receive weight one from `pivot` and none from any measured
/// projector outside it.
pub fn counterfactual_pivot(
    actual: &MeasurementModel,
    counterfactual: &MeasurementModel,
    pivot: &Projector,
) -> Result<f64> {
    if pivot.is_zero() {
        return Err(Error::validation(
            "the zero projector cannot serve as a pivot",
        ));
    }
    let actual_pointers = pointers_for_sum(actual, pivot).ok_or_else(|| {
        Error::validation("pivot is not a sum of the actual apparatus's measured projectors")
    })?;
    let cf_pointers = pointers_for_sum(counterfactual, pivot).ok_or_else(|| {
        Error::validation(
            "pivot is not a sum of the counterfactual apparatus's measured projectors",
        )
    })?;

    let back = coarse_outcome_probability(actual, pivot, &actual_pointers)?;
    if (back - 1.0).abs() > tol::IDENTITY {
        return Err(Error::validation(format!(
            "actual outcome occurs with probability {back} given the pivot, not 1"
        )));
    }
    for (k, p) in actual.measured.projectors().iter().enumerate() {
        if actual_pointers.contains(&actual.pointer_for(k)) {
            continue;
        }
        let leak = outcome_set_probability(actual, p, &actual_pointers)?;
        if leak > tol::IDENTITY {
            return Err(Error::validation(format!(
                "actual outcome can occur without the pivot (weight {leak:e} from {})",
                actual.measured.label(k)
            )));
        }
    }
    coarse_outcome_probability(counterfactual, pivot, &cf_pointers)
}
