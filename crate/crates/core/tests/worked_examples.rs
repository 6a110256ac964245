use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chsim::histories::{history_probabilities, is_consistent, HistoryFamily};
use chsim::linalg::{ComplexMatrix, StateVector};
use chsim::measurement::{
    born_probabilities, build_pointer_model, build_pointer_model_with, verify_calibration,
    PointerOptions,
};
use chsim::properties::{Decomposition, Projector};
use chsim::random::random_basis;
use chsim::C64;

fn sz() -> Decomposition {
    Decomposition::standard_basis(2)
}

fn tilted(theta: f64) -> Projector {
    Projector::ray(&StateVector::from_real(&[theta.cos(), theta.sin()]).unwrap()).unwrap()
}

#[test]
fn tilted_spin_gives_cosine_squared_weights() {
    let model = build_pointer_model(&sz(), 3).unwrap();
    let dist = born_probabilities(&model, &tilted(PI / 6.0)).unwrap();
    assert!((dist.probability("pi1").unwrap() - 0.75).abs() < 1e-12);
    assert!((dist.probability("pi2").unwrap() - 0.25).abs() < 1e-12);
    assert!(dist.probability("pi0").unwrap().abs() < 1e-12);
}

#[test]
fn superposition_outcome_is_retrodicted() {
    let model = build_pointer_model(&sz(), 3).unwrap();
    let psi = tilted(PI / 4.0);
    let family = HistoryFamily::measurement_family(&model, &psi, &sz()).unwrap();
    assert!(is_consistent(&family).unwrap().consistent);
    let probs = history_probabilities(&family).unwrap();
    let mut seen = 0;
    for (h, p) in family.histories().zip(&probs.probabilities) {
        let (at_t1, pointer) = (h.choice[0], h.choice[1]);
        if pointer == model.pointer_for(at_t1) {
            assert!((p - 0.5).abs() < 1e-12, "{}", family.describe(&h));
            seen += 1;
        } else {
            assert!(p.abs() < 1e-12, "{}", family.describe(&h));
        }
    }
    assert_eq!(seen, 2);
}

#[test]
fn the_prepared_state_persists_until_the_measurement() {
    let model = build_pointer_model(&sz(), 3).unwrap();
    let psi = tilted(PI / 4.0);
    let at_t1 = Decomposition::binary(&psi, Some(("psi", "notpsi"))).unwrap();
    let family = HistoryFamily::measurement_family(&model, &psi, &at_t1).unwrap();
    assert!(is_consistent(&family).unwrap().consistent);
    let probs = history_probabilities(&family).unwrap();
    let psi_weight: f64 = family
        .histories()
        .zip(&probs.probabilities)
        .filter(|(h, _)| h.choice[0] == 0)
        .map(|(_, p)| p)
        .sum();
    assert!((psi_weight - 1.0).abs() < 1e-12);
}

/// `exp(iεH)` for a random H with spectrum in [-1, 1], built from its
/// eigenbasis.
fn small_unitary(seed: u64, dim: usize, eps: f64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = random_basis(&mut rng, dim);
    let mut w = ComplexMatrix::zeros(dim);
    for b in &basis {
        let phase = C64::from_polar(1.0, eps * rng.gen_range(-1.0..1.0));
        w = &w + &ComplexMatrix::outer(b, b).scale(phase);
    }
    w
}

#[test]
fn perturbed_dynamics_are_flagged_in_proportion() {
    let model = build_pointer_model(&sz(), 3).unwrap();
    assert!(verify_calibration(&model).passes());
    let w = small_unitary(7, model.total_dim(), 1e-3);
    let perturbed = model.with_unitary(&w * model.unitary()).unwrap();
    let v = verify_calibration(&perturbed).max_violation;
    assert!((1e-4..=1e-2).contains(&v), "violation {v}");
}

#[test]
fn identity_dynamics_never_move_the_pointer() {
    let model = build_pointer_model(&sz(), 3).unwrap();
    let idle = model
        .with_unitary(ComplexMatrix::identity(model.total_dim()))
        .unwrap();
    let report = verify_calibration(&idle);
    assert!(report.max_violation > 0.9, "{}", report.max_violation);
    assert!(!report.passes());
}

#[test]
fn ready_subspace_of_rank_two() {
    let opts = PointerOptions {
        ready_rank: 2,
        ..PointerOptions::default()
    };
    let model = build_pointer_model_with(&sz(), 8, &opts).unwrap();
    assert_eq!(model.ready().rank(), 2);
    assert!(verify_calibration(&model).passes());
    let dist = born_probabilities(&model, &tilted(PI / 6.0)).unwrap();
    assert!((dist.probability("pi1").unwrap() - 0.75).abs() < 1e-12);
    assert!((dist.total() - 1.0).abs() < 1e-12);
}

#[test]
fn diagonal_superposition_in_three_dimensions() {
    let measured = Decomposition::standard_basis(3);
    let model = build_pointer_model(&measured, 4).unwrap();
    let s = 1.0 / 3f64.sqrt();
    let psi = Projector::ray(&StateVector::from_real(&[s, s, s]).unwrap()).unwrap();
    let dist = born_probabilities(&model, &psi).unwrap();
    for label in ["pi1", "pi2", "pi3"] {
        assert!((dist.probability(label).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }
    let half =
        Projector::ray(&StateVector::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0]).unwrap())
            .unwrap();
    let dist = born_probabilities(&model, &half).unwrap();
    assert!(dist.probability("pi3").unwrap().abs() < 1e-12);
}
