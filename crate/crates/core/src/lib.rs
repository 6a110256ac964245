//! Hilbert-space quantum mechanics in the consistent-histories style.
//!
//! Quantum properties are projectors, sample spaces are projective
//! decompositions of the identity, and probabilities come from the Born rule
//! and its extension to histories of three or more times. On top of that the
//! crate provides a fully quantum measurement model (system plus apparatus,
//! evolved by a calibrated unitary), the decoherence functional for history
//! families, and an exhaustive search for noncontextual `{0,1}` valuations.
//!
//! | module | contents |
//! |---|---|
//! | [`linalg`] | dense complex matrices, Kronecker products, Jacobi eigensolver |
//! | [`properties`] | projectors, decompositions, observables, common refinement |
//! | [`frameworks`] | sample spaces, events, the single framework rule |
//! | [`measurement`] | pointer models, Born probabilities, joint measurement, noncontextuality |
//! | [`histories`] | chain operators, decoherence functional, consistency |
//! | [`valuation`] | shared-projector detection and valuation search |
//! | [`scenario`] | JSON scenario files and the batch runner behind the `chsim` binary |
//! | [`report`] | scenario reports, exit codes, canonical JSON |
//!
//! ```
//! use chsim::measurement::{build_pointer_model, born_probabilities};
//! use chsim::properties::{spectral_decompose, Projector};
//! use chsim::linalg::{ComplexMatrix, StateVector};
//!
//! let a = spectral_decompose(&ComplexMatrix::diagonal(&[1.0, 2.0])).unwrap();
//! let model = build_pointer_model(a.decomposition(), 3).unwrap();
//!
//! let psi = StateVector::from_real(&[1.0, 1.0]).unwrap();
//! let dist = born_probabilities(&model, &Projector::ray(&psi).unwrap()).unwrap();
//! assert!((dist.probability("pi1").unwrap() - 0.5).abs() < 1e-12);
//! assert!((dist.probability("pi2").unwrap() - 0.5).abs() < 1e-12);
//! ```

pub mod error;
pub mod frameworks;
pub mod histories;
pub mod linalg;
pub mod measurement;
pub mod properties;
pub mod random;
pub mod report;
pub mod scenario;
pub mod valuation;

pub use error::{Error, ErrorClass, Result};
pub use linalg::{ComplexMatrix, StateVector, C64};

/// Library-wide tolerances.
///
/// Type invariants always use these values; the CLI's `--tolerance` flag only
/// changes the pass/fail threshold printed in reports.
pub mod tol {
    /// `‖H − H†‖_F` accepted as Hermitian.
    pub const HERMITIAN: f64 = 1e-10;
    /// `‖P − P†‖_F` and `‖P² − P‖_F` accepted for a projector.
    pub const PROJECTOR: f64 = 1e-10;
    /// Identities between derived operators (completeness, orthogonality,
    /// reconstruction, commutation, calibration).
    pub const IDENTITY: f64 = 1e-9;
    /// Eigenvalues closer than this are one degenerate eigenvalue.
    pub const DEGENERACY_GAP: f64 = 1e-8;
    /// Eigenvalue separations at or below this are numerical noise.
    pub const SPECTRAL_NOISE: f64 = 1e-9;
    /// Smallest trace accepted as a nonzero pre-probability or condition.
    pub const NONZERO_WEIGHT: f64 = 1e-12;
}
