mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rigoletto_core::manifold::{
    airm_gradient, dist_airm, dist_logeuclid, karcher_mean, mean_airm, mean_logeuclid, tangent_map, tangent_unmap,
    transport_to_mean, MeanOptions, Metric,
};
use rigoletto_core::spd::{
    matrix_exp, matrix_log, matrix_power, nearest_spd, shrink_covariance, sym_eig, SpdMatrix, SymmetricMatrix,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn eigendecomposition_is_orthogonal_and_reconstructs(seed in any::<u64>(), n in 2usize..=16) {
        let s = random_symmetric(&mut rng(seed), n, 1.0);
        let e = sym_eig(&s).unwrap();
        let v = &e.vectors;
        prop_assert!((v * v.transpose() - DMatrix::identity(n, n)).norm() <= 1e-10);
        let back = v * DMatrix::from_diagonal(&e.values) * v.transpose();
        prop_assert!(rel_diff(&back, s.as_matrix()) <= 1e-10);
        prop_assert!(e.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn metric_axioms(seed in any::<u64>(), n in 2usize..=8) {
        let mut r = rng(seed);
        let (a, b, c) = (random_spd(&mut r, n, 0.6), random_spd(&mut r, n, 0.6), random_spd(&mut r, n, 0.6));
        for d in [dist_airm, dist_logeuclid] {
            let dab = d(&a, &b).unwrap();
            prop_assert!(dab >= 0.0);
            prop_assert!(d(&a, &a).unwrap() < 1e-9);
            prop_assert_eq!(dab < 1e-9, (a.as_matrix() - b.as_matrix()).norm() < 1e-9);
            prop_assert!((dab - d(&b, &a).unwrap()).abs() <= 1e-10);
            prop_assert!(d(&a, &c).unwrap() <= dab + d(&b, &c).unwrap() + 1e-9);
        }
    }

    #[test]
    fn airm_is_congruence_and_inversion_invariant(seed in any::<u64>(), n in 2usize..=8) {
        let mut r = rng(seed);
        let (a, b) = (random_spd(&mut r, n, 0.6), random_spd(&mut r, n, 0.6));
        let w = random_orthogonal(&mut r, n) * random_spd(&mut r, n, 0.4).as_matrix();
        let d = dist_airm(&a, &b).unwrap();
        prop_assert!((dist_airm(&congruence(&w, &a), &congruence(&w, &b)).unwrap() - d).abs() <= 1e-8);
        let (ai, bi) = (matrix_power(&a, -1.0).unwrap(), matrix_power(&b, -1.0).unwrap());
        prop_assert!((dist_airm(&ai, &bi).unwrap() - d).abs() <= 1e-8);
    }

    #[test]
    fn log_euclid_is_rotation_invariant(seed in any::<u64>(), n in 2usize..=8) {
        let mut r = rng(seed);
        let (a, b) = (random_spd(&mut r, n, 0.6), random_spd(&mut r, n, 0.6));
        let q = random_orthogonal(&mut r, n);
        let d = dist_logeuclid(&a, &b).unwrap();
        prop_assert!((dist_logeuclid(&congruence(&q, &a), &congruence(&q, &b)).unwrap() - d).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exp_inverts_log_up_to_condition_1e6(seed in any::<u64>(), n in 2usize..=10, log_cond in 0.0f64..13.8) {
        let mut r = rng(seed);
        let q = random_orthogonal(&mut r, n);
        let eigs: Vec<f64> = (0..n).map(|i| (log_cond * i as f64 / (n - 1) as f64 - log_cond / 2.0).exp()).collect();
        let a = spd_of(&q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigs)) * q.transpose());
        let back = matrix_exp(&matrix_log(&a)).unwrap();
        prop_assert!(rel_diff(back.as_matrix(), a.as_matrix()) <= 1e-10);
    }

    #[test]
    fn nearest_spd_is_idempotent(seed in any::<u64>(), n in 2usize..=10) {
        let s = random_symmetric(&mut rng(seed), n, 1.0);
        let once = nearest_spd(&s, 1e-6).unwrap();
        let twice = nearest_spd(once.symmetric(), 1e-6).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.eigen().min() >= 1e-6);
    }

    #[test]
    fn shrinkage_preserves_trace(seed in any::<u64>(), n in 2usize..=10, gamma in 0.0f64..=1.0) {
        let x = gaussian(&mut rng(seed), n, 3 * n);
        let c = SymmetricMatrix::from_symmetric_part(&x * x.transpose()).unwrap();
        let out = shrink_covariance(&c, gamma).unwrap();
        prop_assert!((out.trace() - c.trace()).abs() <= 1e-12 * c.trace());
    }

    #[test]
    fn airm_mean_meets_gradient_postcondition(seed in any::<u64>(), n in 2usize..=8, k in 2usize..=15) {
        let mut r = rng(seed);
        let set: Vec<SpdMatrix> = (0..k).map(|_| random_spd(&mut r, n, 0.5)).collect();
        let m = mean_airm(&set, MeanOptions::default()).unwrap();
        prop_assert!(airm_gradient(&m, &set).unwrap().1 <= 1e-8);
    }

    #[test]
    fn means_agree_on_commuting_sets(seed in any::<u64>(), n in 2usize..=8, k in 1usize..=10) {
        let mut r = rng(seed);
        let q = random_orthogonal(&mut r, n);
        let set: Vec<SpdMatrix> = (0..k)
            .map(|_| {
                let d = DMatrix::from_diagonal(&random_spd(&mut r, n, 0.7).eigen().values);
                spd_of(&q * d * q.transpose())
            })
            .collect();
        let le = karcher_mean(&set, Metric::LogEuclidean).unwrap();
        let airm = karcher_mean(&set, Metric::Airm).unwrap();
        prop_assert!((le.as_matrix() - airm.as_matrix()).norm() <= 1e-8 * le.as_matrix().norm().max(1.0));
    }

    #[test]
    fn transport_carries_test_mean_onto_train_mean(seed in any::<u64>(), n in 2usize..=6) {
        let mut r = rng(seed);
        let set: Vec<SpdMatrix> = (0..8).map(|_| random_spd(&mut r, n, 0.5)).collect();
        let target = random_spd(&mut r, n, 0.8);
        let mean = karcher_mean(&set, Metric::Airm).unwrap();
        let moved = transport_to_mean(&set, &target, &mean).unwrap();
        let moved_mean = karcher_mean(&moved, Metric::Airm).unwrap();
        prop_assert!(dist_airm(&moved_mean, &target).unwrap() <= 1e-7);
    }

    #[test]
    fn tangent_map_is_an_isometry_at_the_base(seed in any::<u64>(), n in 2usize..=6) {
        let mut r = rng(seed);
        let (x, m) = (random_spd(&mut r, n, 0.6), random_spd(&mut r, n, 0.6));
        let t = tangent_map(&x, &m).unwrap();
        prop_assert!((t.coords().norm() - dist_airm(&x, &m).unwrap()).abs() <= 1e-9);
        let back = tangent_unmap(&t, &m).unwrap();
        prop_assert!(rel_diff(back.as_matrix(), x.as_matrix()) <= 1e-9);
    }
}

#[test]
fn log_euclid_mean_avoids_swelling() {
    let a = SpdMatrix::from_diagonal(&[4.0, 0.25]).unwrap();
    let b = SpdMatrix::from_diagonal(&[0.25, 4.0]).unwrap();
    let euclid = (a.as_matrix() + b.as_matrix()) / 2.0;
    assert!(euclid.determinant() > a.determinant().max(b.determinant()));
    assert!((mean_logeuclid(&[a, b]).unwrap().determinant() - 1.0).abs() <= 1e-12);
}

#[test]
fn two_matrix_airm_mean_is_the_geodesic_midpoint() {
    let mut r = rng(11);
    for _ in 0..50 {
        let (a, b) = (random_spd(&mut r, 4, 0.8), random_spd(&mut r, 4, 0.8));
        let m = karcher_mean(&[a.clone(), b.clone()], Metric::Airm).unwrap();
        let half = dist_airm(&a, &b).unwrap() / 2.0;
        assert!((dist_airm(&a, &m).unwrap() - half).abs() <= 1e-6);
        assert!((dist_airm(&b, &m).unwrap() - half).abs() <= 1e-6);
    }
}
