//! Reference arithmetic for tests: naive nested-`Vec` complex matrices,
//! written without the crate's `linalg` so results can be cross-checked.
#![allow(dead_code)]

use chsim::{ComplexMatrix, C64};

pub type Mat = Vec<Vec<C64>>;

pub fn to_mat(m: &ComplexMatrix) -> Mat {
    (0..m.dim()).map(|i| m.row(i).to_vec()).collect()
}

pub fn zeros(n: usize) -> Mat {
    vec![vec![C64::new(0.0, 0.0); n]; n]
}

pub fn eye(n: usize) -> Mat {
    let mut m = zeros(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = C64::new(1.0, 0.0);
    }
    m
}

pub fn mul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = zeros(n);
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect())
        .collect()
}

pub fn scale(a: &Mat, k: f64) -> Mat {
    a.iter()
        .map(|r| r.iter().map(|x| x * k).collect())
        .collect()
}

pub fn dagger(a: &Mat) -> Mat {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| a[j][i].conj()).collect())
        .collect()
}

pub fn trace(a: &Mat) -> C64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

pub fn norm(a: &Mat) -> f64 {
    a.iter().flatten().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dist(a: &Mat, b: &Mat) -> f64 {
    norm(&sub(a, b))
}

/// `(A ⊗ B)[(i·m + k), (j·m + l)] = A[i][j] · B[k][l]`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (n, m) = (a.len(), b.len());
    let mut out = zeros(n * m);
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

/// `|u⟩⟨u| / ⟨u|u⟩`.
pub fn ray(u: &[C64]) -> Mat {
    let n2: f64 = u.iter().map(|x| x.norm_sqr()).sum();
    u.iter()
        .map(|x| u.iter().map(|y| x * y.conj() / n2).collect())
        .collect()
}

/// `Tr(P ρ)` for `ρ = [ψ]`.
pub fn born(p: &Mat, psi: &[C64]) -> f64 {
    trace(&mul(p, &ray(psi))).re
}

pub fn real(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| C64::new(x, 0.0)).collect()
}

/// Chain operator `C_n U_n ⋯ C_1 U_1 Ψ₀` by explicit multiplication.
pub fn chain(initial: &Mat, steps: &[Mat], chosen: &[Mat]) -> Mat {
    let mut k = initial.clone();
    for (u, c) in steps.iter().zip(chosen) {
        k = mul(c, &mul(u, &k));
    }
    k
}
