mod common;

use common::*;
use foodweb::certificates::{
    bilateral_estimates, persistence_certificate, rho, sandwich_bounds, CertificateOptions,
};
use foodweb::fixpoint::{
    equilibria_for_subset, find_fixed_points, iterate_period_two, SearchOptions, ITERATION_TOL,
    MAX_ITER,
};
use foodweb::operators::{f_map, positive_part, sup_dist, v_map, x_map, SOLVER_TOL};
use proptest::prelude::*;
use rand::Rng;

fn model_seed() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..=4, 1usize..=4, any::<u64>())
}

fn build(m: usize, n: usize, seed: u64) -> (foodweb::FoodwebModel, rand_chacha::ChaCha8Rng) {
    let mut r = rng(seed);
    let model = random_model(&mut r, m, n);
    (model, r)
}

fn meet(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).collect()
}

fn join(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x.max(*y)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn phi_is_monotone((m, n, seed) in model_seed()) {
        let (model, mut r) = build(m, n, seed);
        let (a, b) = random_ordered_pair(&mut r, &model);
        for j in 0..n {
            prop_assert!(model.phi(j, &a).unwrap() <= model.phi(j, &b).unwrap());
        }
    }

    #[test]
    fn phi_is_lipschitz((m, n, seed) in model_seed()) {
        let (model, mut r) = build(m, n, seed);
        let u = random_box_point(&mut r, &model);
        let w = random_box_point(&mut r, &model);
        for j in 0..n {
            let diff = (model.phi(j, &u).unwrap() - model.phi(j, &w).unwrap()).abs();
            prop_assert!(diff <= model.lipschitz(j) * sup_dist(&u, &w) + 1e-15);
        }
    }

    #[test]
    fn phi_vanishes_exactly_on_the_boundary((m, n, seed) in model_seed()) {
        let (model, mut r) = build(m, n, seed);
        let mut v: Vec<f64> = model.supply().iter().map(|&s| r.gen_range(0.01 * s..=s)).collect();
        for j in 0..n {
            prop_assert!(model.phi(j, &v).unwrap() > 0.0);
        }
        let i = r.gen_range(0..m);
        v[i] = 0.0;
        for j in 0..n {
            prop_assert_eq!(model.phi(j, &v).unwrap(), 0.0);
        }
    }

    #[test]
    fn v_of_zero_is_supply((m, n, seed) in model_seed()) {
        let (model, _) = build(m, n, seed);
        let v0 = v_map(&model, &vec![0.0; m]).unwrap();
        prop_assert!(sup_dist(&v0, model.supply()) <= SOLVER_TOL);
    }

    #[test]
    fn v_maps_into_the_box((m, n, seed) in model_seed()) {
        let (model, mut r) = build(m, n, seed);
        let w = random_box_point(&mut r, &model);
        let v = v_map(&model, &w).unwrap();
        for (vi, si) in v.iter().zip(model.supply()) {
            prop_assert!(*vi > 0.0 && *vi <= *si);
        }
    }

    #[test]
    fn v_is_antitone((m, n, seed) in model_seed()) {
        let (model, mut r) = build(m, n, seed);
        let (a, b) = random_ordered_pair(&mut r, &model);
        let va = v_map(&model, &a).unwrap();
        let vb = v_map(&model, &b).unwrap();
        prop_assert!(le_within(&vb, &va, 2.0 * SOLVER_TOL));
    }

    #[test]
    fn v_is_sandwiched_by_f((m, n, seed) in model_seed()) {
        let (model, mut r) = build(m, n, seed);
        let w = random_box_point(&mut r, &model);
        let vw = v_map(&model, &w).unwrap();
        let lower = positive_part(&f_map(&model, &join(&w, &vw)));
        let upper = f_map(&model, &meet(&w, &vw));
        prop_assert!(le_within(&lower, &vw, 1e-10));
        prop_assert!(le_within(&vw, &upper, 1e-10));
    }

    #[test]
    fn swapped_sandwich_fails_at_zero((m, n, seed) in model_seed()) {
        // V(0) = S, so F(0 v S) = F(S) >= S would contradict survivability
        let (model, _) = build(m, n, seed);
        let zero = vec![0.0; m];
        let v0 = v_map(&model, &zero).unwrap();
        let upper = f_map(&model, &join(&zero, &v0));
        prop_assert!(!le_within(&v0, &upper, 1e-10));
    }

    #[test]
    fn iterates_interlace_and_bracket((m, n, seed) in model_seed()) {
        let (model, _) = build(m, n, seed);
        let p2 = iterate_period_two(&model, ITERATION_TOL, MAX_ITER).unwrap();
        let it = &p2.iterates;
        let tol = 2.0 * SOLVER_TOL;
        prop_assert_eq!(&it[1], &model.supply().to_vec());
        for k in 0..it.len().saturating_sub(2) {
            if k % 2 == 0 {
                prop_assert!(le_within(&it[k], &it[k + 2], tol));
                prop_assert!(le_within(&it[k], &it[k + 1], tol));
            } else {
                prop_assert!(le_within(&it[k + 2], &it[k], tol));
            }
        }
        prop_assert!(le_within(&p2.check0, &p2.hat0, tol));
        let vs = v_map(&model, model.supply()).unwrap();
        let vvs = v_map(&model, &vs).unwrap();
        prop_assert!(le_within(&vs, &p2.check0, tol));
        prop_assert!(le_within(&p2.hat0, &vvs, tol));
    }

    #[test]
    fn bounds_box_is_invariant((m, n, seed) in model_seed()) {
        let (model, mut r) = build(m, n, seed);
        let p2 = iterate_period_two(&model, ITERATION_TOL, MAX_ITER).unwrap();
        let w = random_point(&mut r, &p2.check0, &p2.hat0);
        let v = v_map(&model, &w).unwrap();
        prop_assert!(le_within(&p2.check0, &v, 1e-9));
        prop_assert!(le_within(&v, &p2.hat0, 1e-9));
    }

    #[test]
    fn rho_is_homogeneous((m, n, seed) in model_seed(), s in 0.01f64..100.0) {
        let (model, _) = build(m, n, seed);
        let base = rho(&model).unwrap().value;
        let scaled = rho(&model.with_gamma_scaled(s).unwrap()).unwrap().value;
        prop_assert!((scaled * s - base).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn sandwich_contains_bilateral_box((m, n, seed) in model_seed()) {
        let (model, _) = build(m, n, seed);
        let sw = sandwich_bounds(&model).unwrap();
        let bl = bilateral_estimates(&model, &CertificateOptions::default()).unwrap();
        let tol = 1e-9;
        prop_assert!(le_within(&sw.v_lo, &bl.v_lo, tol));
        prop_assert!(le_within(&bl.v_lo, &bl.v_hi, tol));
        prop_assert!(le_within(&bl.v_hi, &sw.v_hi, tol));
        prop_assert!(le_within(&sw.x_lo, &bl.x_lo, tol));
        prop_assert!(le_within(&bl.x_hi, &sw.x_hi, tol));
    }

    #[test]
    fn certified_models_have_no_gap((m, n, seed) in model_seed(), target in 0.05f64..0.99) {
        let (model, _) = build(m.min(3), n, seed);
        let model = with_rho(&model, target);
        let r = rho(&model).unwrap();
        prop_assume!(r.holds());
        let p2 = iterate_period_two(&model, ITERATION_TOL, MAX_ITER).unwrap();
        prop_assert!(p2.converged);
        prop_assert!(p2.gap < 1e-8, "gap {} at rho {}", p2.gap, r.value);
    }

    #[test]
    fn persistence_gives_positive_lower_bounds((m, n, seed) in model_seed()) {
        let (model, _) = build(m, n, seed);
        let model = with_rho(&model, 0.05);
        let cert = persistence_certificate(&model, &CertificateOptions::default()).unwrap();
        prop_assert!(cert.delta > 0.0);
        prop_assert!(cert.rho0 > 0.0 && cert.rho0 <= 1.0);
        if cert.persistent {
            let lb = cert.species_lower_bounds.unwrap();
            prop_assert!(lb.iter().all(|&x| x > 0.0), "{:?}", lb);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fixed_points_lie_in_the_bounds_box((m, n, seed) in (1usize..=3, 1usize..=3, any::<u64>())) {
        let (model, _) = build(m, n, seed);
        let p2 = iterate_period_two(&model, ITERATION_TOL, MAX_ITER).unwrap();
        let opts = SearchOptions { n_starts: 16, ..Default::default() };
        let records = find_fixed_points(&model, &vec![0.0; m], model.supply(), &opts);
        prop_assert!(!records.is_empty());
        for rec in &records {
            prop_assert!(rec.residual <= opts.tol);
            prop_assert!(le_within(&p2.check0, &rec.v, 1e-8));
            prop_assert!(le_within(&rec.v, &p2.hat0, 1e-8));
            // fixed points of F are fixed points of V
            let v = v_map(&model, &rec.v).unwrap();
            prop_assert!(sup_dist(&v, &rec.v) < 1e-8);
            prop_assert_eq!(&rec.x, &x_map(&model, &rec.v));
        }
    }

    #[test]
    fn fixed_points_of_v_solve_f((m, n, seed) in model_seed()) {
        let (model, _) = build(m, n, seed);
        let p2 = iterate_period_two(&model, ITERATION_TOL, MAX_ITER).unwrap();
        prop_assume!(p2.gap < 1e-9);
        let fv = f_map(&model, &p2.check0);
        prop_assert!(sup_dist(&fv, &p2.check0) < 1e-8);
    }

    #[test]
    fn subset_support_is_coherent((m, n, seed) in (1usize..=3, 1usize..=3, any::<u64>()), mask in 0u32..8) {
        let (model, _) = build(m, n, seed);
        let subset: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let opts = SearchOptions { n_starts: 8, ..Default::default() };
        let records = equilibria_for_subset(&model, &subset, &opts).unwrap();
        prop_assert!(!records.is_empty());
        for rec in &records {
            let labels: Vec<usize> = subset.iter().map(|j| j + 1).collect();
            prop_assert!(rec.support.iter().all(|j| labels.contains(j)));
            prop_assert_eq!(rec.support.is_empty(), subset.is_empty());
            for j in 0..n {
                if !subset.contains(&j) {
                    prop_assert_eq!(rec.x[j], 0.0);
                }
            }
        }
    }
}
