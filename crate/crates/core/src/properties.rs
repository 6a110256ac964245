//! Quantum properties as subspaces.
//!
//! A property is a [`Projector`]; a sample space of mutually exclusive
//! properties is a [`Decomposition`] of the identity; an [`Observable`] pairs
//! distinct real values with such a decomposition. Two observables that
//! commute share a [`Refinement`] made of all nonzero products of their
//! projectors, and every value of either observable can be read off it.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::linalg::{
    frobenius_distance, frobenius_distance_unchecked, hermitian_eigendecomposition, ComplexMatrix,
    StateVector,
};
use crate::tol;

/// An orthogonal projector `P = P† = P²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    matrix: ComplexMatrix,
    rank: usize,
}

impl Projector {
    /// Validates `m` as a projector. The stored matrix is the exact Hermitian
    /// part of `m`.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        let herm = m.hermitian_defect();
        if herm > tol::PROJECTOR {
            return Err(Error::validation(format!(
                "projector is not Hermitian (‖P − P†‖_F = {herm:e})"
            )));
        }
        let m = m.hermitian_part();
        let idem = frobenius_distance_unchecked(&(&m * &m), &m);
        if idem > tol::PROJECTOR {
            return Err(Error::validation(format!(
                "projector is not idempotent (‖P² − P‖_F = {idem:e})"
            )));
        }
        let tr = m.trace().re;
        let rank = tr.round();
        if (tr - rank).abs() > tol::IDENTITY {
            return Err(Error::validation(format!(
                "projector trace {tr} is not an integer"
            )));
        }
        Ok(Projector {
            matrix: m,
            rank: rank as usize,
        })
    }

    /// `[ψ] = |ψ⟩⟨ψ|/⟨ψ|ψ⟩`; the zero vector is refused.
    pub fn ray(psi: &StateVector) -> Result<Self> {
        if psi.norm() == 0.0 {
            return Err(Error::validation("the zero ket represents no property"));
        }
        Projector::new(psi.ray()?)
    }

    /// Projector onto the span of an orthonormal set.
    pub fn span(dim: usize, vectors: &[StateVector]) -> Result<Self> {
        let mut m = ComplexMatrix::zeros(dim);
        for v in vectors {
            if v.dim() != dim {
                return Err(Error::validation(
                    "vector dimension does not match projector",
                ));
            }
            m = &m + &ComplexMatrix::outer(v, v);
        }
        Projector::new(m)
    }

    pub fn identity(dim: usize) -> Self {
        Projector {
            matrix: ComplexMatrix::identity(dim),
            rank: dim,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Projector {
            matrix: ComplexMatrix::zeros(dim),
            rank: 0,
        }
    }

    /// Diagonal projector with ones at the given indices.
    pub fn diagonal(dim: usize, ones: &[usize]) -> Self {
        let mut d = vec![0.0; dim];
        for &i in ones {
            d[i] = 1.0;
        }
        Projector {
            matrix: ComplexMatrix::diagonal(&d),
            rank: ones.len(),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_zero(&self) -> bool {
        self.rank == 0
    }

    /// `I − P`.
    pub fn complement(&self) -> Self {
        Projector {
            matrix: &ComplexMatrix::identity(self.dim()) - &self.matrix,
            rank: self.dim() - self.rank,
        }
    }

    /// Frobenius distance `≤ 1e-9`.
    pub fn approx_eq(&self, other: &Projector) -> bool {
        self.dim() == other.dim()
            && frobenius_distance_unchecked(&self.matrix, &other.matrix) <= tol::IDENTITY
    }

    /// `‖[P, Q]‖_F`.
    pub fn commutator_norm(&self, other: &Projector) -> f64 {
        self.matrix.commutator(&other.matrix).frobenius_norm()
    }

    /// Orthonormal basis of the range, from the eigenvectors with
    /// eigenvalue one.
    pub fn range_basis(&self) -> Result<Vec<StateVector>> {
        let e = hermitian_eigendecomposition(&self.matrix)?;
        Ok(e.values
            .iter()
            .zip(e.vectors)
            .filter(|(&l, _)| l > 0.5)
            .map(|(_, v)| v)
            .collect())
    }
}

/// An ordered set of mutually orthogonal nonzero projectors summing to `I`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    dim: usize,
    projectors: Vec<Projector>,
    labels: Vec<String>,
}

impl Decomposition {
    /// Labels default to `a0, a1, …`.
    pub fn new(projectors: Vec<Projector>, labels: Option<Vec<String>>) -> Result<Self> {
        let Some(first) = projectors.first() else {
            return Err(Error::validation(
                "a decomposition needs at least one projector",
            ));
        };
        let dim = first.dim();
        if projectors.iter().any(|p| p.dim() != dim) {
            return Err(Error::validation(
                "decomposition projectors differ in dimension",
            ));
        }
        if let Some(k) = projectors.iter().position(Projector::is_zero) {
            return Err(Error::validation(format!(
                "decomposition member {k} is the zero projector"
            )));
        }
        let labels = match labels {
            Some(l) if l.len() != projectors.len() => {
                return Err(Error::validation(format!(
                    "{} labels for {} projectors",
                    l.len(),
                    projectors.len()
                )))
            }
            Some(l) => l,
            None => (0..projectors.len()).map(|i| format!("a{i}")).collect(),
        };

        let mut sum = ComplexMatrix::zeros(dim);
        for p in &projectors {
            sum = &sum + p.matrix();
        }
        let completeness = frobenius_distance_unchecked(&sum, &ComplexMatrix::identity(dim));
        if completeness > tol::IDENTITY {
            return Err(Error::validation(format!(
                "projectors do not sum to the identity (‖ΣP − I‖_F = {completeness:e})"
            )));
        }
        for i in 0..projectors.len() {
            for j in i + 1..projectors.len() {
                let overlap = (projectors[i].matrix() * projectors[j].matrix()).frobenius_norm();
                if overlap > tol::IDENTITY {
                    return Err(Error::validation(format!(
                        "projectors {} and {} are not orthogonal (‖PQ‖_F = {overlap:e})",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(Decomposition {
            dim,
            projectors,
            labels,
        })
    }

    /// `{P, I − P}` for a projector other than `0` or `I`.
    pub fn binary(p: &Projector, labels: Option<(&str, &str)>) -> Result<Self> {
        let labels = labels.map(|(a, b)| vec![a.to_string(), b.to_string()]);
        Decomposition::new(vec![p.clone(), p.complement()], labels)
    }

    /// One rank-1 projector per standard basis vector.
    pub fn standard_basis(dim: usize) -> Self {
        let projectors = (0..dim).map(|i| Projector::diagonal(dim, &[i])).collect();
        Decomposition::new(projectors, None).expect("standard basis is a decomposition")
    }

    /// The trivial sample space `{I}`.
    pub fn trivial(dim: usize) -> Self {
        Decomposition::new(vec![Projector::identity(dim)], None).expect("identity is complete")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn projectors(&self) -> &[Projector] {
        &self.projectors
    }

    pub fn projector(&self, i: usize) -> &Projector {
        &self.projectors[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.projectors.len() {
            return Err(Error::validation(
                "label count does not match decomposition",
            ));
        }
        self.labels = labels;
        Ok(self)
    }

    /// `Σ_{i∈indices} P_i`.
    pub fn event_projector(&self, indices: impl IntoIterator<Item = usize>) -> Result<Projector> {
        let mut m = ComplexMatrix::zeros(self.dim);
        let mut rank = 0;
        for i in indices {
            let p = self.projectors.get(i).ok_or_else(|| {
                Error::validation(format!(
                    "index {i} outside a {}-element sample space",
                    self.len()
                ))
            })?;
            m = &m + p.matrix();
            rank += p.rank();
        }
        Ok(Projector { matrix: m, rank })
    }

    /// `Σ_i v_i P_i`.
    pub fn weighted_sum(&self, values: &[f64]) -> ComplexMatrix {
        assert_eq!(values.len(), self.len(), "one value per projector");
        let mut m = ComplexMatrix::zeros(self.dim);
        for (v, p) in values.iter().zip(&self.projectors) {
            m = &m + &p.matrix().scale_real(*v);
        }
        m
    }

    /// Indices `S` with `p = Σ_{i∈S} P_i` within `1e-9`, if such a set exists.
    pub fn express_as_sum(&self, p: &Projector) -> Option<Vec<usize>> {
        if p.dim() != self.dim {
            return None;
        }
        // P_i ≤ p  ⇔  Tr(p P_i) = rank(P_i)
        let members: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let overlap = p.matrix().trace_product(self.projectors[i].matrix()).re;
                overlap > self.projectors[i].rank() as f64 - 0.5
            })
            .collect();
        let sum = self.event_projector(members.iter().copied()).ok()?;
        (frobenius_distance_unchecked(sum.matrix(), p.matrix()) <= tol::IDENTITY).then_some(members)
    }
}

/// A Hermitian operator in spectral form `Σ_α a_α P_α` with distinct `a_α`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    eigenvalues: Vec<f64>,
    decomposition: Decomposition,
}

impl Observable {
    /// Pairs values with a decomposition; values must be distinct by more than
    /// the degeneracy gap.
    pub fn new(eigenvalues: Vec<f64>, decomposition: Decomposition) -> Result<Self> {
        if eigenvalues.len() != decomposition.len() {
            return Err(Error::validation(format!(
                "{} eigenvalues for {} projectors",
                eigenvalues.len(),
                decomposition.len()
            )));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("eigenvalues must be finite"));
        }
        for i in 0..eigenvalues.len() {
            for j in i + 1..eigenvalues.len() {
                if (eigenvalues[i] - eigenvalues[j]).abs() <= tol::DEGENERACY_GAP {
                    return Err(Error::validation(format!(
                        "eigenvalues {} and {} are not distinct",
                        eigenvalues[i], eigenvalues[j]
                    )));
                }
            }
        }
        Ok(Observable {
            eigenvalues,
            decomposition,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn dim(&self) -> usize {
        self.decomposition.dim()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `Σ_α a_α P_α`.
    pub fn matrix(&self) -> ComplexMatrix {
        self.decomposition.weighted_sum(&self.eigenvalues)
    }

    /// Index of the eigenprojector for an exact eigenvalue.
    pub fn index_of_value(&self, value: f64) -> Option<usize> {
        self.eigenvalues.iter().position(|&v| v == value)
    }
}

/// Spectral decomposition of a Hermitian matrix, grouping degenerate
/// eigenvalues into a single projector.
///
/// Neighbouring eigenvalues within `1e-9` are merged and the cluster value is
/// their mean; neighbours more than `1e-8` apart start a new cluster; a gap in
/// between is reported as [`Error::AmbiguousSpectrum`].
pub fn spectral_decompose(h: &ComplexMatrix) -> Result<Observable> {
    let eig = hermitian_eigendecomposition(h)?;
    let mut clusters: Vec<(Vec<f64>, Vec<StateVector>)> = Vec::new();
    for (value, vector) in eig.values.into_iter().zip(eig.vectors) {
        match clusters.last_mut() {
            Some((vals, vecs)) => {
                let last = *vals.last().expect("clusters are nonempty");
                let gap = value - last;
                if gap <= tol::SPECTRAL_NOISE {
                    vals.push(value);
                    vecs.push(vector);
                } else if gap <= tol::DEGENERACY_GAP {
                    return Err(Error::AmbiguousSpectrum {
                        low: last,
                        high: value,
                        gap,
                    });
                } else {
                    clusters.push((vec![value], vec![vector]));
                }
            }
            None => clusters.push((vec![value], vec![vector])),
        }
    }
    let dim = h.dim();
    let mut values = Vec::with_capacity(clusters.len());
    let mut projectors = Vec::with_capacity(clusters.len());
    for (vals, vecs) in clusters {
        values.push(vals.iter().sum::<f64>() / vals.len() as f64);
        projectors.push(Projector::span(dim, &vecs)?);
    }
    Observable::new(values, Decomposition::new(projectors, None)?)
}

/// A state that can carry properties: a nonzero ket or a density operator.
pub trait QuantumState {
    fn dim(&self) -> usize;

    /// `‖Pψ − ψ‖ ≤ 1e-9‖ψ‖` for kets, `‖Pρ − ρ‖_F ≤ 1e-9` for density operators.
    fn has_property(&self, p: &Projector) -> Result<bool>;

    /// Born weight of `p`: `⟨ψ|P|ψ⟩/⟨ψ|ψ⟩` or `Tr(ρP)`.
    fn probability(&self, p: &Projector) -> Result<f64>;
}

fn check_dims(state_dim: usize, p: &Projector) -> Result<()> {
    if state_dim != p.dim() {
        return Err(Error::validation(format!(
            "state has dimension {state_dim}, projector {}",
            p.dim()
        )));
    }
    Ok(())
}

impl QuantumState for StateVector {
    fn dim(&self) -> usize {
        StateVector::dim(self)
    }

    fn has_property(&self, p: &Projector) -> Result<bool> {
        check_dims(StateVector::dim(self), p)?;
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::validation(
                "the zero ket is a property which is never true",
            ));
        }
        Ok(p.matrix().apply(self).distance(self) <= tol::IDENTITY * norm)
    }

    fn probability(&self, p: &Projector) -> Result<f64> {
        check_dims(StateVector::dim(self), p)?;
        let norm2 = self.norm().powi(2);
        if norm2 == 0.0 {
            return Err(Error::validation("probability of the zero ket"));
        }
        let w = self.inner(&p.matrix().apply(self)).re / norm2;
        Ok(w.clamp(0.0, 1.0))
    }
}

/// A positive semidefinite Hermitian operator of unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        let defect = m.hermitian_defect();
        if defect > tol::HERMITIAN {
            return Err(Error::validation(format!(
                "density operator is not Hermitian (‖ρ − ρ†‖_F = {defect:e})"
            )));
        }
        let tr = m.trace().re;
        if (tr - 1.0).abs() > tol::IDENTITY {
            return Err(Error::validation(format!(
                "density operator has trace {tr}"
            )));
        }
        let m = m.hermitian_part();
        let min = hermitian_eigendecomposition(&m)?.values[0];
        if min < -tol::IDENTITY {
            return Err(Error::validation(format!(
                "density operator has negative eigenvalue {min:e}"
            )));
        }
        Ok(DensityOperator { matrix: m })
    }

    /// The pure state `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn pure(psi: &StateVector) -> Result<Self> {
        Ok(DensityOperator { matrix: psi.ray()? })
    }

    /// `P / Tr(P)` for a nonzero projector.
    pub fn uniform_on(p: &Projector) -> Result<Self> {
        if p.is_zero() {
            return Err(Error::validation(
                "no density operator is supported on the zero subspace",
            ));
        }
        Ok(DensityOperator {
            matrix: p.matrix().scale_real(1.0 / p.rank() as f64),
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }
}

impl QuantumState for DensityOperator {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn has_property(&self, p: &Projector) -> Result<bool> {
        check_dims(self.matrix.dim(), p)?;
        let pr = p.matrix() * &self.matrix;
        Ok(frobenius_distance_unchecked(&pr, &self.matrix) <= tol::IDENTITY)
    }

    fn probability(&self, p: &Projector) -> Result<f64> {
        check_dims(self.matrix.dim(), p)?;
        Ok(self.matrix.trace_product(p.matrix()).re.clamp(0.0, 1.0))
    }
}

/// Anything with a Hermitian matrix and a list of spectral projectors.
///
/// A bare projector `P` counts as the observable with decomposition
/// `{P, I − P}`; listing `P` alone is enough for commutation tests.
pub trait Spectral {
    fn operator_matrix(&self) -> Cow<'_, ComplexMatrix>;
    fn spectral_projectors(&self) -> Vec<(&str, &Projector)>;
}

impl Spectral for Observable {
    fn operator_matrix(&self) -> Cow<'_, ComplexMatrix> {
        Cow::Owned(self.matrix())
    }

    fn spectral_projectors(&self) -> Vec<(&str, &Projector)> {
        self.decomposition
            .labels()
            .iter()
            .map(String::as_str)
            .zip(self.decomposition.projectors())
            .collect()
    }
}

impl Spectral for Projector {
    fn operator_matrix(&self) -> Cow<'_, ComplexMatrix> {
        Cow::Borrowed(&self.matrix)
    }

    fn spectral_projectors(&self) -> Vec<(&str, &Projector)> {
        vec![("P", self)]
    }
}

/// First pair of spectral projectors (in lexicographic order) whose
/// commutator exceeds `1e-9`, with its norm.
pub(crate) fn first_noncommuting_pair<'a>(
    a: &'a impl Spectral,
    b: &'a impl Spectral,
) -> Option<(String, String, f64)> {
    for (la, p) in a.spectral_projectors() {
        for (lb, q) in b.spectral_projectors() {
            let n = p.commutator_norm(q);
            if n > tol::IDENTITY {
                return Some((la.to_string(), lb.to_string(), n));
            }
        }
    }
    None
}

/// `[A, B] = 0` within `1e-9`, checked both on the operators and on every
/// pair of spectral projectors; the two tests must agree.
pub fn are_compatible(a: &impl Spectral, b: &impl Spectral) -> Result<bool> {
    let (ma, mb) = (a.operator_matrix(), b.operator_matrix());
    if ma.dim() != mb.dim() {
        return Err(Error::validation(format!(
            "compatibility of {}- and {}-dimensional operators",
            ma.dim(),
            mb.dim()
        )));
    }
    let by_operator = ma.commutator(&mb).frobenius_norm() <= tol::IDENTITY;
    let by_projectors = first_noncommuting_pair(a, b).is_none();
    if by_operator != by_projectors {
        return Err(Error::Numeric(format!(
            "operator commutator ({}) and projector commutators ({}) disagree",
            if by_operator { "zero" } else { "nonzero" },
            if by_projectors { "zero" } else { "nonzero" },
        )));
    }
    Ok(by_operator)
}

/// The common refinement `{R_j}` of two compatible observables.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    decomposition: Decomposition,
    parent_a: Vec<usize>,
    parent_b: Vec<usize>,
    values_a: Vec<f64>,
    values_b: Vec<f64>,
}

impl Refinement {
    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn len(&self) -> usize {
        self.decomposition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decomposition.is_empty()
    }

    /// `α(j)`: index of the A-eigenprojector containing `R_j`.
    pub fn parent_a(&self) -> &[usize] {
        &self.parent_a
    }

    /// `β(j)`.
    pub fn parent_b(&self) -> &[usize] {
        &self.parent_b
    }

    /// `a_j`, copied from A's eigenvalues.
    pub fn values_a(&self) -> &[f64] {
        &self.values_a
    }

    /// `b_j`, copied from B's eigenvalues.
    pub fn values_b(&self) -> &[f64] {
        &self.values_b
    }

    /// `Σ_j a_j R_j`.
    pub fn reconstruct_a(&self) -> ComplexMatrix {
        self.decomposition.weighted_sum(&self.values_a)
    }

    /// `Σ_j b_j R_j`.
    pub fn reconstruct_b(&self) -> ComplexMatrix {
        self.decomposition.weighted_sum(&self.values_b)
    }
}

/// Minimal decomposition refining both sample spaces: all nonzero products
/// `P_α Q_β`, ordered lexicographically in `(α, β)`.
pub(crate) fn refine_decompositions(
    a: &Decomposition,
    b: &Decomposition,
) -> Result<(Decomposition, Vec<(usize, usize)>)> {
    if a.dim() != b.dim() {
        return Err(Error::validation(
            "refining decompositions of different dimension",
        ));
    }
    let mut projectors = Vec::new();
    let mut labels = Vec::new();
    let mut parents = Vec::new();
    for (i, p) in a.projectors().iter().enumerate() {
        for (j, q) in b.projectors().iter().enumerate() {
            let n = p.commutator_norm(q);
            if n > tol::IDENTITY {
                return Err(Error::Incompatible {
                    first: a.label(i).to_string(),
                    second: b.label(j).to_string(),
                    commutator_norm: n,
                });
            }
            // symmetrized product: exactly Hermitian, equal to PQ up to the commutator
            let pq = p.matrix() * q.matrix();
            if pq.trace().re < 0.5 {
                continue;
            }
            projectors.push(Projector::new(pq.hermitian_part())?);
            labels.push(format!("{}&{}", a.label(i), b.label(j)));
            parents.push((i, j));
        }
    }
    Ok((Decomposition::new(projectors, Some(labels))?, parents))
}

pub fn common_refinement(a: &Observable, b: &Observable) -> Result<Refinement> {
    if a.dim() != b.dim() {
        return Err(Error::validation(
            "refining observables of different dimension",
        ));
    }
    if let Some((first, second, commutator_norm)) = first_noncommuting_pair(a, b) {
        return Err(Error::Incompatible {
            first,
            second,
            commutator_norm,
        });
    }
    let (decomposition, parents) = refine_decompositions(a.decomposition(), b.decomposition())?;
    let labels = (0..decomposition.len()).map(|j| format!("r{j}")).collect();
    let decomposition = decomposition.with_labels(labels)?;
    Ok(Refinement {
        decomposition,
        values_a: parents.iter().map(|&(i, _)| a.eigenvalues()[i]).collect(),
        values_b: parents.iter().map(|&(_, j)| b.eigenvalues()[j]).collect(),
        parent_a: parents.iter().map(|&(i, _)| i).collect(),
        parent_b: parents.into_iter().map(|(_, j)| j).collect(),
    })
}

/// Value pairs `(a_j, b_j)` read off the common refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalRelation {
    pub pairs: Vec<(f64, f64)>,
}

impl FunctionalRelation {
    /// True when no `a_j` is paired with two different `b_j`.
    pub fn is_function(&self) -> bool {
        self.pairs
            .iter()
            .all(|(a, b)| self.pairs.iter().all(|(a2, b2)| a != a2 || b == b2))
    }

    /// The map `a → b`, sorted by `a`, when the relation is a function.
    pub fn as_function(&self) -> Option<Vec<(f64, f64)>> {
        if !self.is_function() {
            return None;
        }
        let mut map: Vec<(f64, f64)> = Vec::new();
        for &(a, b) in &self.pairs {
            if !map.iter().any(|&(a2, _)| a2 == a) {
                map.push((a, b));
            }
        }
        map.sort_by(|x, y| x.0.total_cmp(&y.0));
        Some(map)
    }
}

/// Whether `B = f(A)` for some function `f`, decided on the common
/// refinement. Values are copied from the spectra, so equality is exact.
pub fn functional_relation(a: &Observable, b: &Observable) -> Result<FunctionalRelation> {
    let r = common_refinement(a, b)?;
    Ok(FunctionalRelation {
        pairs: r
            .values_a
            .iter()
            .copied()
            .zip(r.values_b.iter().copied())
            .collect(),
    })
}

/// `‖Σ_α a_α P_α − H‖_F`.
pub fn reconstruction_error(obs: &Observable, h: &ComplexMatrix) -> Result<f64> {
    frobenius_distance(&obs.matrix(), h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn sx() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[&[0.0, 0.5], &[0.5, 0.0]]).unwrap()
    }

    fn sz() -> ComplexMatrix {
        ComplexMatrix::diagonal(&[0.5, -0.5])
    }

    #[test]
    fn projector_rejects_non_idempotent() {
        assert!(Projector::new(ComplexMatrix::diagonal(&[0.5, 1.0])).is_err());
        assert!(Projector::new(
            ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 0.0]]).unwrap()
        )
        .is_err());
        let p = Projector::new(ComplexMatrix::diagonal(&[1.0, 0.0, 1.0])).unwrap();
        assert_eq!(p.rank(), 2);
    }

    #[test]
    fn decomposition_checks_completeness_and_orthogonality() {
        let p = Projector::diagonal(2, &[0]);
        assert!(Decomposition::new(vec![p.clone()], None).is_err());
        assert!(Decomposition::new(vec![p.clone(), p.clone()], None).is_err());
        let d = Decomposition::new(vec![p.clone(), p.complement()], None).unwrap();
        assert_eq!(d.labels(), ["a0", "a1"]);
        assert!(
            Decomposition::new(vec![Projector::zero(2), Projector::identity(2)], None).is_err()
        );
    }

    #[test]
    fn spectral_decompose_groups_degenerate_values() {
        let obs = spectral_decompose(&ComplexMatrix::diagonal(&[5.0, 5.0, 7.0])).unwrap();
        assert_eq!(obs.eigenvalues(), [5.0, 7.0]);
        assert!(obs
            .decomposition()
            .projector(0)
            .approx_eq(&Projector::diagonal(3, &[0, 1])));
        assert!(obs
            .decomposition()
            .projector(1)
            .approx_eq(&Projector::diagonal(3, &[2])));
    }

    #[test]
    fn spectral_decompose_spin_half_sx() {
        let obs = spectral_decompose(&sx()).unwrap();
        assert!((obs.eigenvalues()[0] + 0.5).abs() < 1e-15);
        assert!((obs.eigenvalues()[1] - 0.5).abs() < 1e-15);
        assert!(obs
            .decomposition()
            .projectors()
            .iter()
            .all(|p| p.rank() == 1));
        assert!(reconstruction_error(&obs, &sx()).unwrap() < 1e-12);
    }

    #[test]
    fn ambiguous_band_is_an_error() {
        let h = ComplexMatrix::diagonal(&[1.0, 1.0 + 5e-9]);
        assert!(matches!(
            spectral_decompose(&h),
            Err(Error::AmbiguousSpectrum { .. })
        ));
        let h = ComplexMatrix::diagonal(&[1.0, 1.0 + 1e-10]);
        assert_eq!(spectral_decompose(&h).unwrap().len(), 1);
        let h = ComplexMatrix::diagonal(&[1.0, 1.0 + 1e-7]);
        assert_eq!(spectral_decompose(&h).unwrap().len(), 2);
    }

    #[test]
    fn has_property_for_kets() {
        let p = Projector::diagonal(2, &[0]);
        let e1 = StateVector::basis(2, 0);
        assert!(e1.has_property(&p).unwrap());
        let plus = StateVector::from_real(&[1.0, 1.0])
            .unwrap()
            .normalized()
            .unwrap();
        assert!(!plus.has_property(&p).unwrap());
        let zero = StateVector::from_real(&[0.0, 0.0]).unwrap();
        assert!(zero.has_property(&p).is_err());
        assert!(StateVector::basis(3, 0).has_property(&p).is_err());
    }

    #[test]
    fn has_property_for_density_operator() {
        let rho = DensityOperator::new(ComplexMatrix::diagonal(&[0.3, 0.7, 0.0])).unwrap();
        // Pρ = ρ by direct multiplication: P zeroes only the third row, which is empty
        let p = Projector::diagonal(3, &[0, 1]);
        let prod = p.matrix() * rho.matrix();
        assert_eq!(&prod, rho.matrix());
        assert!(rho.has_property(&p).unwrap());
        assert!(!rho.has_property(&Projector::diagonal(3, &[0])).unwrap());
    }

    #[test]
    fn density_operator_validation() {
        assert!(DensityOperator::new(ComplexMatrix::diagonal(&[0.5, 0.6])).is_err());
        assert!(DensityOperator::new(ComplexMatrix::diagonal(&[1.5, -0.5])).is_err());
        let m = ComplexMatrix::from_rows(&[
            vec![c(0.5, 0.0), c(0.0, 0.5)],
            vec![c(0.0, -0.5), c(0.5, 0.0)],
        ])
        .unwrap();
        assert!(DensityOperator::new(m).is_ok());
    }

    #[test]
    fn compatibility_examples() {
        let a = spectral_decompose(&ComplexMatrix::diagonal(&[1.0, 2.0])).unwrap();
        let b = spectral_decompose(&ComplexMatrix::diagonal(&[3.0, 4.0])).unwrap();
        assert!(are_compatible(&a, &b).unwrap());
        let x = spectral_decompose(&sx()).unwrap();
        let z = spectral_decompose(&sz()).unwrap();
        assert!(!are_compatible(&x, &z).unwrap());
        let p = Projector::diagonal(2, &[0]);
        assert!(are_compatible(&p, &z).unwrap());
        assert!(!are_compatible(&p, &x).unwrap());
        let three = spectral_decompose(&ComplexMatrix::identity(3)).unwrap();
        assert!(are_compatible(&three, &a).is_err());
    }

    #[test]
    fn refinement_of_diagonal_pair() {
        let a = spectral_decompose(&ComplexMatrix::diagonal(&[1.0, 1.0, 2.0])).unwrap();
        let b = spectral_decompose(&ComplexMatrix::diagonal(&[3.0, 4.0, 4.0])).unwrap();
        let r = common_refinement(&a, &b).unwrap();
        assert_eq!(r.len(), 3);
        for j in 0..3 {
            assert!(r
                .decomposition()
                .projector(j)
                .approx_eq(&Projector::diagonal(3, &[j])));
        }
        assert_eq!(r.values_a(), [1.0, 1.0, 2.0]);
        assert_eq!(r.values_b(), [3.0, 4.0, 4.0]);
        assert_eq!(r.parent_a(), [0, 0, 1]);
        assert_eq!(r.parent_b(), [0, 1, 1]);
    }

    #[test]
    fn self_refinement_is_the_decomposition() {
        let a = spectral_decompose(&ComplexMatrix::diagonal(&[1.0, 1.0, 2.0])).unwrap();
        let r = common_refinement(&a, &a).unwrap();
        assert_eq!(r.len(), a.len());
        for (x, y) in r
            .decomposition()
            .projectors()
            .iter()
            .zip(a.decomposition().projectors())
        {
            assert!(x.approx_eq(y));
        }
    }

    #[test]
    fn refinement_of_incompatible_pair_names_the_pair() {
        let x = spectral_decompose(&sx()).unwrap();
        let z = spectral_decompose(&sz()).unwrap();
        match common_refinement(&x, &z) {
            Err(Error::Incompatible {
                first,
                second,
                commutator_norm,
            }) => {
                assert_eq!((first.as_str(), second.as_str()), ("a0", "a0"));
                assert!(commutator_norm > 0.1);
            }
            other => panic!("expected incompatibility, got {other:?}"),
        }
    }

    #[test]
    fn square_relation_is_a_function() {
        let a = spectral_decompose(&ComplexMatrix::diagonal(&[-1.0, 1.0, 2.0])).unwrap();
        let b = spectral_decompose(&ComplexMatrix::diagonal(&[1.0, 1.0, 4.0])).unwrap();
        let rel = functional_relation(&a, &b).unwrap();
        assert_eq!(
            rel.as_function().unwrap(),
            vec![(-1.0, 1.0), (1.0, 1.0), (2.0, 4.0)]
        );
    }

    #[test]
    fn split_degeneracy_is_not_a_function() {
        let a = spectral_decompose(&ComplexMatrix::diagonal(&[1.0, 1.0, 2.0])).unwrap();
        let b = spectral_decompose(&ComplexMatrix::diagonal(&[3.0, 4.0, 4.0])).unwrap();
        let rel = functional_relation(&a, &b).unwrap();
        assert!(!rel.is_function());
        assert!(rel.as_function().is_none());
    }

    #[test]
    fn express_as_sum_finds_members() {
        let d = Decomposition::standard_basis(3);
        assert_eq!(
            d.express_as_sum(&Projector::diagonal(3, &[0, 2])),
            Some(vec![0, 2])
        );
        let plus = StateVector::from_real(&[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(d.express_as_sum(&Projector::ray(&plus).unwrap()), None);
    }
}
