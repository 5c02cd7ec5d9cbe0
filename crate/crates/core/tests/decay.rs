use num_complex::Complex64;
use pointlab_core::decay::{
    conjugation_diagnostic, convolution_decay, free_green_cell_bounds, inverse_decay_check, max_conjugation_diagnostic,
    mu_star, random_decaying_matrix, s0, s1, verify_offdiag_decay,
};
use pointlab_core::gamma_green::EnergyPoint;
use pointlab_core::lattice::{LatticeWindow, SiteNorm};
use pointlab_core::numerics::{lu_factor, operator_norm, ComplexMatrix, QuadratureSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_sum(a: f64, p: i32, reach: i64) -> f64 {
    let mut s = 0.0;
    for x in -reach..=reach {
        for y in -reach..=reach {
            for z in -reach..=reach {
                let r = ((x * x + y * y + z * z) as f64).sqrt();
                s += r.powi(p) * (-a * r).exp();
            }
        }
    }
    s
}

#[test]
fn lattice_sums_match_brute_force() {
    for a in [0.5, 1.0, 2.0] {
        let reach = (80.0 / a) as i64;
        let (b0, b1) = (brute_sum(a, 0, reach), brute_sum(a, 1, reach));
        assert!((s0(3, a, SiteNorm::Euclidean) - b0).abs() < 1e-9 * b0, "S0({a})");
        assert!((s1(3, a, SiteNorm::Euclidean) - b1).abs() < 1e-9 * b1, "S1({a})");
    }
}

#[test]
fn l1_sums_match_brute_force() {
    let a = 0.7f64;
    let mut b0 = 0.0;
    let mut b1 = 0.0;
    for x in -120i64..=120 {
        for y in -120i64..=120 {
            let r = (x.abs() + y.abs()) as f64;
            b0 += (-a * r).exp();
            b1 += r * (-a * r).exp();
        }
    }
    assert!((s0(2, a, SiteNorm::L1) - b0).abs() < 1e-12 * b0);
    assert!((s1(2, a, SiteNorm::L1) - b1).abs() < 1e-12 * b1);
}

proptest! {
    #[test]
    fn mu_star_is_capped_and_monotone(rho in 0.01..100.0f64, gamma in 0.05..5.0f64, c0 in 0.01..10.0f64, f in 1.01..4.0f64) {
        let mu = mu_star(rho, gamma, c0, 3, SiteNorm::Euclidean).unwrap();
        prop_assert!(mu > 0.0 && mu <= 0.5 * gamma);
        prop_assert!(mu_star(rho * f, gamma, c0, 3, SiteNorm::Euclidean).unwrap() <= mu);
        prop_assert!(mu_star(rho, gamma, c0 * f, 3, SiteNorm::Euclidean).unwrap() <= mu);
        prop_assert!(mu_star(rho, gamma * f, c0, 3, SiteNorm::Euclidean).unwrap() >= mu);
    }
}

#[test]
fn mu_star_rejects_nonpositive_inputs() {
    assert!(mu_star(0.0, 1.0, 1.0, 3, SiteNorm::Euclidean).is_err());
    assert!(mu_star(1.0, -1.0, 1.0, 3, SiteNorm::Euclidean).is_err());
    assert!(mu_star(1.0, 1.0, 1.0, 4, SiteNorm::Euclidean).is_err());
}

// I + t·(nearest-neighbour hopping) on a cube.
fn hopping(l: usize, t: f64) -> (ComplexMatrix, Vec<[i64; 3]>) {
    let sites = LatticeWindow::cube(l).unwrap().sites();
    let a = ComplexMatrix::from_fn(sites.len(), sites.len(), |i, j| {
        let d = SiteNorm::L1.distance(&sites[i], &sites[j]);
        Complex64::new(
            if i == j {
                1.0
            } else if d == 1.0 {
                t
            } else {
                0.0
            },
            0.0,
        )
    });
    (a, sites)
}

#[test]
fn neumann_series_bounds_the_hopping_inverse() {
    let t = 0.01;
    let (a, sites) = hopping(3, t);
    let inv = lu_factor(&a).unwrap().inverse();
    let q = 6.0 * t;
    for i in 0..sites.len() {
        for j in 0..sites.len() {
            let d = SiteNorm::L1.distance(&sites[i], &sites[j]) as i32;
            assert!(inv[(i, j)].norm() <= q.powi(d) / (1.0 - q) * (1.0 + 1e-12));
        }
    }

    let (c0, gamma) = (t * 1f64.exp(), 1.0);
    assert!(verify_offdiag_decay(&a, &sites, c0, gamma, SiteNorm::L1).unwrap());
    let rho = 1.0 / (1.0 - q);
    assert!(operator_norm(&inv) <= rho);
    let mu = mu_star(rho, gamma, c0, 3, SiteNorm::L1).unwrap();
    let report = inverse_decay_check(&a, &sites, rho, mu, SiteNorm::L1).unwrap();
    assert!(report.pass, "worst ratio {}", report.worst_ratio);
    assert!(max_conjugation_diagnostic(&a, &sites, mu, rho, SiteNorm::L1).unwrap() <= 0.5);
}

#[test]
fn diagonal_matrices_have_no_off_diagonal_inverse() {
    let sites = LatticeWindow::new(4, 1).unwrap().sites();
    let a = ComplexMatrix::from_diagonal(&(0..sites.len()).map(|i| Complex64::new(1.0 + i as f64, 0.5)).collect::<Vec<_>>());
    let report = inverse_decay_check(&a, &sites, 1.0, 0.5, SiteNorm::Euclidean).unwrap();
    assert!(report.rows.iter().filter(|r| r.distance > 0.0).all(|r| r.magnitude == 0.0));
    assert_eq!(conjugation_diagnostic(&a, &sites, 3, 0.5, 1.0, SiteNorm::Euclidean).unwrap(), 0.0);
}

#[test]
fn understated_rho_is_rejected() {
    let (a, sites) = hopping(1, 0.1);
    assert!(inverse_decay_check(&a, &sites, 0.5, 0.1, SiteNorm::L1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synthetic_inverses_obey_the_certificate(seed in 0u64..100_000, dim in 1usize..4, gamma in 0.5..2.0f64) {
        let l = [0, 12, 3, 2][dim];
        let sites = LatticeWindow::new(l, dim).unwrap().sites();
        let c0 = 0.3 / s0(dim, gamma, SiteNorm::Euclidean);
        let a = random_decaying_matrix(&sites, c0, gamma, SiteNorm::Euclidean, seed);
        prop_assert!(verify_offdiag_decay(&a, &sites, c0, gamma, SiteNorm::Euclidean).unwrap());
        let rho = operator_norm(&lu_factor(&a).unwrap().inverse()) * (1.0 + 1e-12);
        let mu = mu_star(rho, gamma, c0, dim, SiteNorm::Euclidean).unwrap();
        let report = inverse_decay_check(&a, &sites, rho, mu, SiteNorm::Euclidean).unwrap();
        prop_assert!(report.pass, "worst ratio {}", report.worst_ratio);
        prop_assert!(max_conjugation_diagnostic(&a, &sites, mu, rho, SiteNorm::Euclidean).unwrap() <= 0.5);
    }
}

#[test]
fn conjugation_grows_with_the_rate() {
    let sites = LatticeWindow::new(2, 2).unwrap().sites();
    let a = random_decaying_matrix(&sites, 0.2, 1.0, SiteNorm::Euclidean, 3);
    let values: Vec<f64> = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
        .iter()
        .map(|&mu| conjugation_diagnostic(&a, &sites, 12, mu, 1.0, SiteNorm::Euclidean).unwrap())
        .collect();
    assert_eq!(values[0], 0.0);
    assert!(values.windows(2).all(|w| w[1] > w[0]), "{values:?}");
}

fn random_bounded(rng: &mut ChaCha8Rng, sites: &[[i64; 3]], c: f64, gamma: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(sites.len(), sites.len(), |i, j| {
        let bound = c * (-gamma * SiteNorm::Euclidean.distance(&sites[i], &sites[j])).exp();
        Complex64::from_polar(bound * rng.random::<f64>(), rng.random_range(0.0..std::f64::consts::TAU))
    })
}

#[test]
fn double_sum_bound_on_extremal_and_random_arrays() {
    let sites = LatticeWindow::cube(2).unwrap().sites();
    let (c, gamma) = (1.5, 0.8);
    let exact = ComplexMatrix::from_fn(sites.len(), sites.len(), |i, j| {
        Complex64::new(c * (-gamma * SiteNorm::Euclidean.distance(&sites[i], &sites[j])).exp(), 0.0)
    });
    let r = convolution_decay(&exact, &exact, c, gamma, &sites, 3, SiteNorm::Euclidean).unwrap();
    assert!(r.pass);
    assert!((r.c_tilde_derived - 2.0 * c * c * s0(3, 0.4, SiteNorm::Euclidean)).abs() < 1e-12 * r.c_tilde_derived);

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let a = random_bounded(&mut rng, &sites, c, gamma);
        let b = random_bounded(&mut rng, &sites, c, gamma);
        assert!(convolution_decay(&a, &b, c, gamma, &sites, 3, SiteNorm::Euclidean).unwrap().pass);
    }

    let id = ComplexMatrix::identity(sites.len()).scale(Complex64::new(c, 0.0));
    let r = convolution_decay(&id, &id, c, gamma, &sites, 3, SiteNorm::Euclidean).unwrap();
    assert!((r.max_ratio - c * c).abs() < 1e-14);

    let too_big = exact.scale(Complex64::new(1.01, 0.0));
    assert!(convolution_decay(&too_big, &exact, c, gamma, &sites, 3, SiteNorm::Euclidean).is_err());
}

#[test]
fn free_cell_bounds_at_distance_three() {
    let z = EnergyPoint::new(1.0, 1.0).unwrap();
    let spec = QuadratureSpec::with_tolerance(1e-6);
    for n in [[3, 0, 0], [0, -3, 0], [2, 2, 1]] {
        let r = free_green_cell_bounds(&n, &[0, 0, 0], &z, 500, &spec).unwrap();
        assert!(r.pointwise, "{n:?}: {} {}", r.worst_pointwise_ratio, r.worst_pointwise_ratio_second);
        assert!(r.averaged, "{n:?}: {} vs {}", r.averaged_value, r.averaged_bound);
        assert!(r.averaged_value > 0.0);
    }
}
