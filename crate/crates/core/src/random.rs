//! Seeded generators for test corpora and the CLI's generated scenarios.
//!
//! All generators take an explicit RNG so corpora are reproducible from a
//! single `u64` seed.

use rand::Rng;

use crate::linalg::{c, ComplexMatrix, StateVector, C64};
use crate::properties::{spectral_decompose, Decomposition, Observable, Projector};
use crate::Result;

fn gaussian_like(rng: &mut impl Rng) -> f64 {
    // sum of uniforms; shape is irrelevant, only genericity matters
    (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() * 0.5
}

pub fn random_complex(rng: &mut impl Rng) -> C64 {
    c(gaussian_like(rng), gaussian_like(rng))
}

pub fn random_state(rng: &mut impl Rng, dim: usize) -> StateVector {
    loop {
        let amps = (0..dim).map(|_| random_complex(rng)).collect();
        let v = StateVector::new(amps).expect("finite amplitudes");
        if v.norm() > 1e-3 {
            return v.normalized().expect("nonzero");
        }
    }
}

/// `(X + X†)/2` for a matrix of random entries.
pub fn random_hermitian(rng: &mut impl Rng, dim: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = random_complex(rng);
        }
    }
    m.hermitian_part()
}

/// Random orthonormal basis via modified Gram–Schmidt on random vectors.
pub fn random_basis(rng: &mut impl Rng, dim: usize) -> Vec<StateVector> {
    let mut basis: Vec<StateVector> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut amps: Vec<C64> = random_state(rng, dim).amplitudes().to_vec();
        for _ in 0..2 {
            for b in &basis {
                let overlap: C64 = b
                    .amplitudes()
                    .iter()
                    .zip(&amps)
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                for (a, x) in amps.iter_mut().zip(b.amplitudes()) {
                    *a -= overlap * x;
                }
            }
        }
        let v = StateVector::new(amps).expect("finite amplitudes");
        if v.norm() > 1e-6 {
            basis.push(v.normalized().expect("nonzero"));
        }
    }
    basis
}

/// Unitary whose columns are a random orthonormal basis.
pub fn random_unitary(rng: &mut impl Rng, dim: usize) -> ComplexMatrix {
    let basis = random_basis(rng, dim);
    let mut u = ComplexMatrix::zeros(dim);
    for (k, v) in basis.iter().enumerate() {
        for i in 0..dim {
            u[(i, k)] = v[i];
        }
    }
    u
}

/// Random composition of `dim` into `parts` positive block sizes.
pub fn random_block_sizes(rng: &mut impl Rng, dim: usize, parts: usize) -> Vec<usize> {
    assert!(parts >= 1 && parts <= dim, "need 1 ≤ parts ≤ dim");
    let mut sizes = vec![1; parts];
    for _ in parts..dim {
        let k = rng.gen_range(0..parts);
        sizes[k] += 1;
    }
    sizes
}

/// Decomposition whose projectors span consecutive blocks of `basis`.
pub fn decomposition_from_blocks(basis: &[StateVector], sizes: &[usize]) -> Result<Decomposition> {
    let dim = basis.len();
    let mut start = 0;
    let mut projectors = Vec::with_capacity(sizes.len());
    for &s in sizes {
        projectors.push(Projector::span(dim, &basis[start..start + s])?);
        start += s;
    }
    Decomposition::new(projectors, None)
}

/// Random decomposition of `C^dim` into `parts` blocks.
pub fn random_decomposition(rng: &mut impl Rng, dim: usize, parts: usize) -> Result<Decomposition> {
    let basis = random_basis(rng, dim);
    let sizes = random_block_sizes(rng, dim, parts);
    decomposition_from_blocks(&basis, &sizes)
}

/// Distinct values at least `spacing` apart, in random order.
pub fn distinct_values(rng: &mut impl Rng, count: usize, spacing: f64) -> Vec<f64> {
    let mut values: Vec<f64> = Vec::with_capacity(count);
    let mut next = rng.gen_range(-2.0..2.0);
    for _ in 0..count {
        values.push(next);
        next += spacing + rng.gen_range(0.0..1.0);
    }
    // shuffle so ascending order is not tied to basis order
    for i in (1..values.len()).rev() {
        let j = rng.gen_range(0..=i);
        values.swap(i, j);
    }
    values
}

/// Hermitian matrix `Σ_k v_k |e_k⟩⟨e_k|` for a basis and per-vector values.
pub fn hermitian_from_basis(basis: &[StateVector], values: &[f64]) -> ComplexMatrix {
    let dim = basis.len();
    let mut m = ComplexMatrix::zeros(dim);
    for (v, e) in values.iter().zip(basis) {
        m = &m + &ComplexMatrix::outer(e, e).scale_real(*v);
    }
    m
}

/// Random observable with a degenerate spectrum: `levels` distinct values
/// spread over a random basis.
pub fn random_observable(rng: &mut impl Rng, dim: usize, levels: usize) -> Result<Observable> {
    let basis = random_basis(rng, dim);
    let values = distinct_values(rng, levels, 0.5);
    let sizes = random_block_sizes(rng, dim, levels);
    let per_vector: Vec<f64> = sizes
        .iter()
        .zip(&values)
        .flat_map(|(&s, &v)| std::iter::repeat_n(v, s))
        .collect();
    spectral_decompose(&hermitian_from_basis(&basis, &per_vector))
}

/// Two commuting observables diagonal in one shared random basis, each with
/// (usually) degenerate spectra.
pub fn random_commuting_pair(rng: &mut impl Rng, dim: usize) -> Result<(Observable, Observable)> {
    let basis = random_basis(rng, dim);
    let levels_a = rng.gen_range(1..=dim);
    let levels_b = rng.gen_range(1..=dim);
    let a = values_over_basis(rng, &basis, levels_a);
    let b = values_over_basis(rng, &basis, levels_b);
    Ok((
        spectral_decompose(&hermitian_from_basis(&basis, &a))?,
        spectral_decompose(&hermitian_from_basis(&basis, &b))?,
    ))
}

/// Assigns each basis vector one of `levels` values, every value used.
fn values_over_basis(rng: &mut impl Rng, basis: &[StateVector], levels: usize) -> Vec<f64> {
    let values = distinct_values(rng, levels, 0.5);
    let mut per_vector: Vec<f64> = (0..basis.len()).map(|k| values[k % levels]).collect();
    for i in (1..per_vector.len()).rev() {
        let j = rng.gen_range(0..=i);
        per_vector.swap(i, j);
    }
    per_vector
}

/// A triple `(A, B, C)` with `[A,B] = [A,C] = 0` and `[B,C] ≠ 0`.
///
/// `A` has a degenerate eigenspace of dimension at least two; `B` and `C` act
/// inside it through two generic noncommuting Hermitian blocks and agree with
/// `A`'s eigenbasis elsewhere.
pub fn random_noncontextual_triple(
    rng: &mut impl Rng,
    dim: usize,
) -> Result<(Observable, Observable, Observable)> {
    assert!(dim >= 2, "need a degenerate eigenspace of dimension ≥ 2");
    let basis = random_basis(rng, dim);
    let deg = rng.gen_range(2..=dim);
    let rest = dim - deg;
    let levels = 1 + if rest > 0 { rng.gen_range(1..=rest) } else { 0 };
    let values = distinct_values(rng, levels, 0.5);
    let mut a_per_vector = vec![values[0]; deg];
    for k in 0..rest {
        a_per_vector.push(values[1 + k % (levels - 1)]);
    }
    let a = spectral_decompose(&hermitian_from_basis(&basis, &a_per_vector))?;

    let inside = &basis[..deg];
    let outside = &basis[deg..];
    let b = block_observable(rng, inside, outside, dim)?;
    let c = loop {
        let c = block_observable(rng, inside, outside, dim)?;
        if b.matrix().commutator(&c.matrix()).frobenius_norm() > 1e-3 {
            break c;
        }
    };
    Ok((a, b, c))
}

/// Observable that is a random nondegenerate Hermitian block on the span of
/// `inside` and diagonal (with fresh distinct values) on `outside`.
fn block_observable(
    rng: &mut impl Rng,
    inside: &[StateVector],
    outside: &[StateVector],
    dim: usize,
) -> Result<Observable> {
    let rotated = {
        let u = random_unitary(rng, inside.len());
        (0..inside.len())
            .map(|k| {
                let mut amps = vec![C64::new(0.0, 0.0); dim];
                for (j, e) in inside.iter().enumerate() {
                    for (a, x) in amps.iter_mut().zip(e.amplitudes()) {
                        *a += u[(j, k)] * x;
                    }
                }
                StateVector::new(amps).expect("finite")
            })
            .collect::<Vec<_>>()
    };
    let mut vecs: Vec<StateVector> = rotated;
    vecs.extend(outside.iter().cloned());
    let values = distinct_values(rng, dim, 0.5);
    spectral_decompose(&hermitian_from_basis(&vecs, &values))
}
