mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chsim::histories::{
    chain_operator, decoherence_matrix, history_probabilities, is_consistent, HistoryFamily,
};
use chsim::linalg::{tensor_product, ComplexMatrix};
use chsim::measurement::{
    a_marginal, born_probabilities, build_joint_model, build_pointer_model,
    build_pointer_model_with, evolve_property, PointerOptions,
};
use chsim::properties::{
    common_refinement, functional_relation, spectral_decompose, DensityOperator, Projector,
    QuantumState,
};
use chsim::random::{
    hermitian_from_basis, random_basis, random_commuting_pair, random_complex,
    random_decomposition, random_state, random_unitary,
};
use chsim::report::{canonical_json, format_float, Report};
use chsim::valuation::{search_valuation, ValuationProblem};
use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(r: &mut ChaCha8Rng, dim: usize) -> ComplexMatrix {
    let data = (0..dim * dim).map(|_| random_complex(r)).collect();
    ComplexMatrix::from_entries(dim, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kronecker_matches_index_formula(seed: u64, da in 1usize..5, db in 1usize..5) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, da);
        let b = random_matrix(&mut r, db);
        let got = to_mat(&tensor_product(&a, &b).unwrap());
        prop_assert!(dist(&got, &kron(&to_mat(&a), &to_mat(&b))) < 1e-13);
    }

    #[test]
    fn kronecker_mixed_product(seed: u64, da in 1usize..4, db in 1usize..4) {
        let mut r = rng(seed);
        let (a, c) = (random_matrix(&mut r, da), random_matrix(&mut r, da));
        let (b, d) = (random_matrix(&mut r, db), random_matrix(&mut r, db));
        let lhs = &tensor_product(&a, &b).unwrap() * &tensor_product(&c, &d).unwrap();
        let rhs = tensor_product(&(&a * &c), &(&b * &d)).unwrap();
        prop_assert!((&lhs - &rhs).frobenius_norm() < 1e-12);
    }

    #[test]
    fn complement_is_orthogonal_and_completes(seed: u64, dim in 2usize..7) {
        let mut r = rng(seed);
        let p = Projector::ray(&random_state(&mut r, dim)).unwrap();
        let q = p.complement();
        let (pm, qm) = (to_mat(p.matrix()), to_mat(q.matrix()));
        prop_assert!(norm(&mul(&pm, &qm)) < 1e-12);
        prop_assert!(dist(&add(&pm, &qm), &eye(dim)) < 1e-12);
        prop_assert_eq!(q.rank(), dim - 1);
    }

    #[test]
    fn refinement_elements_are_parent_products(seed: u64, dim in 1usize..7) {
        let mut r = rng(seed);
        let (a, b) = random_commuting_pair(&mut r, dim).unwrap();
        let refinement = common_refinement(&a, &b).unwrap();
        let mut sum = zeros(dim);
        for (j, rj) in refinement.decomposition().projectors().iter().enumerate() {
            let p = to_mat(a.decomposition().projector(refinement.parent_a()[j]).matrix());
            let q = to_mat(b.decomposition().projector(refinement.parent_b()[j]).matrix());
            let m = to_mat(rj.matrix());
            prop_assert!(dist(&mul(&p, &q), &m) < 1e-9);
            sum = add(&sum, &m);
        }
        prop_assert!(dist(&sum, &eye(dim)) < 1e-9);
        prop_assert!(refinement.len() <= dim);
    }

    #[test]
    fn function_of_an_observable_is_functionally_related(seed: u64, dim in 2usize..7) {
        let mut r = rng(seed);
        let basis = random_basis(&mut r, dim);
        let values: Vec<f64> = (0..dim).map(|k| k as f64).collect();
        let squares: Vec<f64> = values.iter().map(|v| (v - 1.0) * (v - 1.0)).collect();
        let a = spectral_decompose(&hermitian_from_basis(&basis, &values)).unwrap();
        let b = spectral_decompose(&hermitian_from_basis(&basis, &squares)).unwrap();
        prop_assert!(functional_relation(&a, &b).unwrap().is_function());
        if dim > 2 {
            // the square loses information, so A is not a function of B
            prop_assert!(!functional_relation(&b, &a).unwrap().is_function());
        }
    }

    #[test]
    fn pointer_distribution_is_normalized_without_spurious_outcomes(
        seed: u64, dim in 1usize..6, extra in 0usize..3
    ) {
        let mut r = rng(seed);
        let parts = r.gen_range(1..=dim);
        let measured = random_decomposition(&mut r, dim, parts).unwrap();
        let model = build_pointer_model(&measured, parts + 1 + extra).unwrap();
        let psi = Projector::ray(&random_state(&mut r, dim)).unwrap();
        let dist = born_probabilities(&model, &psi).unwrap();
        prop_assert!((dist.total() - 1.0).abs() < 1e-12);
        prop_assert!(dist.probabilities()[0].abs() < 1e-12);
        prop_assert!(dist.probabilities().iter().all(|&p| p >= -1e-12));
    }

    #[test]
    fn evolution_preserves_rank(seed: u64, dim in 2usize..5, ready_rank in 1usize..3) {
        let mut r = rng(seed);
        let parts = r.gen_range(1..=dim);
        let measured = random_decomposition(&mut r, dim, parts).unwrap();
        let opts = PointerOptions { ready_rank, ..PointerOptions::default() };
        let model = build_pointer_model_with(&measured, ready_rank * (parts + 1), &opts).unwrap();
        let k = r.gen_range(0..parts);
        let p = measured.projector(k);
        let v = evolve_property(&model, p).unwrap();
        prop_assert_eq!(v.evolved.rank(), p.rank() * ready_rank);
        prop_assert!((v.matrix().trace().re - (p.rank() * ready_rank) as f64).abs() < 1e-9);
    }

    #[test]
    fn joint_model_restricts_to_single_model(seed: u64, dim in 2usize..6) {
        let mut r = rng(seed);
        let (a, b) = random_commuting_pair(&mut r, dim).unwrap();
        let joint = build_joint_model(&a, &b, dim + 1).unwrap();
        let single = build_pointer_model(a.decomposition(), a.len() + 1).unwrap();
        let psi = Projector::ray(&random_state(&mut r, dim)).unwrap();
        let marginal = a_marginal(&joint, &psi).unwrap();
        let direct = born_probabilities(&single, &psi).unwrap();
        for (k, p) in marginal.probabilities.iter().enumerate() {
            prop_assert!((p - direct.probabilities()[k + 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn two_time_families_reproduce_born_weights(seed: u64, dim in 2usize..6) {
        let mut r = rng(seed);
        let psi = random_state(&mut r, dim);
        let parts = r.gen_range(1..=dim);
        let d = random_decomposition(&mut r, dim, parts).unwrap();
        let u = random_unitary(&mut r, dim);
        let family = HistoryFamily::new(
            Projector::ray(&psi).unwrap(), vec![u.clone()], vec![d.clone()]
        ).unwrap();
        prop_assert!(is_consistent(&family).unwrap().consistent);
        let probs = history_probabilities(&family).unwrap();
        let evolved = u.apply(&psi);
        for (k, p) in d.projectors().iter().enumerate() {
            let want = born(&to_mat(p.matrix()), evolved.amplitudes());
            prop_assert!((probs.probabilities[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn decoherence_matrix_is_hermitian_and_normalized(
        seed: u64, dim in 2usize..5, rank in 1usize..3, times in 1usize..4
    ) {
        let mut r = rng(seed);
        let rank = rank.min(dim);
        let initial = Projector::span(dim, &random_basis(&mut r, dim)[..rank]).unwrap();
        let mut steps = Vec::new();
        let mut sets = Vec::new();
        for _ in 0..times {
            steps.push(random_unitary(&mut r, dim));
            let parts = r.gen_range(1..=dim);
            sets.push(random_decomposition(&mut r, dim, parts).unwrap());
        }
        let family = HistoryFamily::new(initial, steps, sets).unwrap();
        let d = decoherence_matrix(&family).unwrap();
        prop_assert!(d.hermitian_defect() < 1e-12);
        // Σ_{h,h'} D(h,h') = 1 always; the diagonal alone only when consistent
        let mut total = chsim::C64::new(0.0, 0.0);
        for i in 0..d.len() {
            for j in 0..d.len() {
                total += d.get(i, j);
            }
        }
        prop_assert!((total.re - 1.0).abs() < 1e-9 && total.im.abs() < 1e-9);
        if is_consistent(&family).unwrap().consistent {
            prop_assert!((d.diagonal().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn chain_operator_matches_explicit_product(seed: u64, dim in 2usize..5) {
        let mut r = rng(seed);
        let initial = Projector::ray(&random_state(&mut r, dim)).unwrap();
        let steps: Vec<ComplexMatrix> = (0..3).map(|_| random_unitary(&mut r, dim)).collect();
        let sets: Vec<_> = (0..3)
            .map(|_| {
                let parts = r.gen_range(1..=dim);
                random_decomposition(&mut r, dim, parts).unwrap()
            })
            .collect();
        let family = HistoryFamily::new(initial.clone(), steps.clone(), sets.clone()).unwrap();
        for h in family.histories() {
            let chosen: Vec<Mat> = h.choice.iter().zip(&sets)
                .map(|(&i, d)| to_mat(d.projector(i).matrix())).collect();
            let us: Vec<Mat> = steps.iter().map(to_mat).collect();
            let want = chain(&to_mat(initial.matrix()), &us, &chosen);
            let got = to_mat(&chain_operator(&family, &h).unwrap());
            prop_assert!(dist(&got, &want) < 1e-12);
        }
    }

    #[test]
    fn mixed_states_give_normalized_probabilities(seed: u64, dim in 2usize..6) {
        let mut r = rng(seed);
        let k = r.gen_range(1..=dim);
        let support = Projector::span(dim, &random_basis(&mut r, dim)[..k]).unwrap();
        let rho = DensityOperator::uniform_on(&support).unwrap();
        let parts = r.gen_range(1..=dim);
        let d = random_decomposition(&mut r, dim, parts).unwrap();
        let total: f64 = d.projectors().iter().map(|p| rho.probability(p).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn acyclic_context_graphs_admit_valuations(seed: u64, contexts in 1usize..10) {
        let mut r = rng(seed);
        // grow a forest: each new context shares at most one identifier and
        // owns at least one
        let mut next = 0usize;
        let mut ctxs: Vec<Vec<usize>> = Vec::new();
        for _ in 0..contexts {
            let size = r.gen_range(1..=4);
            let mut ctx = Vec::new();
            if next > 0 && r.gen_bool(0.7) {
                ctx.push(r.gen_range(0..next));
            }
            // every context owns at least one identifier
            loop {
                ctx.push(next);
                next += 1;
                if ctx.len() >= size {
                    break;
                }
            }
            ctxs.push(ctx);
        }
        let names = (0..next).map(|i| format!("v{i}")).collect();
        let problem = ValuationProblem::from_contexts(names, ctxs).unwrap();
        prop_assert!(problem.is_acyclic());
        let found = search_valuation(&problem).unwrap();
        prop_assert!(found.valuation().is_some_and(|v| v.satisfies(&problem)));
    }

    #[test]
    fn float_format_round_trips(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL) {
        let text = format_float(x);
        let back: f64 = text.parse().unwrap();
        prop_assert_eq!(format_float(back), text.clone());
        prop_assert!((back - x).abs() <= 5e-12 * x.abs(), "{} vs {}", x, text);
    }

    #[test]
    fn report_json_round_trips(values in prop::collection::vec(-1e6f64..1e6, 0..8), count: u32) {
        let mut report = Report::new("prop");
        for (i, v) in values.iter().enumerate() {
            report.metric(format!("m{i}"), *v);
            report.metric(format!("tiny{i}"), v * 1e-14);
        }
        report.metric("count", count as usize);
        let json = report.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(canonical_json(&parsed), json.clone());
        let back: Report = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back.to_json(), json);
    }
}
