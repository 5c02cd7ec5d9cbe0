use std::f64::consts::PI;

use approx::assert_relative_eq;
use num_complex::Complex64;
use pointlab_core::numerics::{
    fit_exponential_decay, hermitian_eigenvalues, integrate, lu_solve, operator_norm, principal_sqrt, ComplexMatrix,
    Domain, QuadratureSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

// Gram-Schmidt on random columns.
fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    while cols.len() < n {
        let mut v: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        for c in &cols {
            let p: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= p * ci;
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    ComplexMatrix::from_fn(n, n, |i, j| cols[j][i])
}

fn power_norm(a: &ComplexMatrix) -> f64 {
    let aha = a.adjoint().matmul(a).unwrap();
    let n = a.cols();
    let mut v = vec![Complex64::new(1.0, 0.3); n];
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let w = aha.mul_vec(&v).unwrap();
        let norm = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        lambda = norm / v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    lambda.sqrt()
}

proptest! {
    #[test]
    fn sqrt_squares_back_with_nonnegative_imaginary_part(re in -1e3..1e3f64, im in -1e3..1e3f64) {
        let z = Complex64::new(re, im);
        let w = principal_sqrt(z);
        prop_assert!(w.im >= 0.0);
        prop_assert!((w * w - z).norm() <= 1e-12 * (1.0 + z.norm()));
    }

    #[test]
    fn lu_recovers_constructed_solutions(n in 1usize..9, k in 1usize..4, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = random_matrix(&mut rng, n, n);
        for i in 0..n {
            a[(i, i)] += Complex64::new(2.0 * n as f64, 0.0);
        }
        let x = random_matrix(&mut rng, n, k);
        let b = a.matmul(&x).unwrap();
        let solved = lu_solve(&a, &b).unwrap();
        prop_assert!(solved.sub(&x).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn eigenvalues_of_unitarily_rotated_diagonal(n in 1usize..8, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lambda: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let u = random_unitary(&mut rng, n);
        let d = ComplexMatrix::from_diagonal(&lambda.iter().map(|&l| Complex64::new(l, 0.0)).collect::<Vec<_>>());
        let a = u.matmul(&d).unwrap().matmul(&u.adjoint()).unwrap();
        let mut got = hermitian_eigenvalues(&a).unwrap();
        lambda.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (g, l) in got.iter().zip(&lambda) {
            prop_assert!((g - l).abs() < 1e-10);
        }
    }
}

#[test]
fn operator_norm_agrees_with_power_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (rows, cols) in [(1, 1), (3, 3), (5, 2), (2, 6), (8, 8)] {
        let a = random_matrix(&mut rng, rows, cols);
        assert_relative_eq!(operator_norm(&a), power_norm(&a), max_relative = 1e-6);
    }
}

#[test]
fn operator_norm_of_scaled_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = random_unitary(&mut rng, 6).scale(Complex64::new(0.0, 2.5));
    assert_relative_eq!(operator_norm(&u), 2.5, max_relative = 1e-12);
}

#[test]
fn arctangent_integral() {
    let spec = QuadratureSpec::with_tolerance(1e-13);
    let r = integrate(
        |x| Complex64::new(1.0 / (1.0 + x[0] * x[0]), 0.0),
        &Domain::Box { lo: vec![0.0], hi: vec![1.0] },
        &spec,
    )
    .unwrap();
    assert!((r.value.re - PI / 4.0).abs() < 1e-12);
    assert!(r.error <= 1e-13);
}

#[test]
fn ball_volume_and_box_moment() {
    let spec = QuadratureSpec::with_tolerance(1e-10);
    let ball = Domain::Ball {
        center: vec![0.3, -1.0, 2.0],
        radius: 0.7,
    };
    let v = integrate(|_| Complex64::new(1.0, 0.0), &ball, &spec).unwrap();
    assert_relative_eq!(v.value.re, 4.0 * PI * 0.343 / 3.0, max_relative = 1e-10);

    let cube = Domain::Box {
        lo: vec![0.0; 3],
        hi: vec![1.0; 3],
    };
    let m = integrate(|x| Complex64::new(x[0] * x[1] * x[1], x[2].powi(3)), &cube, &spec).unwrap();
    assert_relative_eq!(m.value.re, 1.0 / 6.0, max_relative = 1e-12);
    assert_relative_eq!(m.value.im, 0.25, max_relative = 1e-12);
}

#[test]
fn half_line_integral_with_tail() {
    let spec = QuadratureSpec {
        truncation_radius: Some(40.0),
        tolerance: 1e-10,
        ..QuadratureSpec::default()
    };
    let tail = |r: f64| (-r).exp();
    let r = integrate(
        |x| Complex64::new((-x[0]).exp(), 0.0),
        &Domain::HalfLine { start: 0.0, tail: &tail },
        &spec,
    )
    .unwrap();
    assert!((r.value.re - 1.0).abs() < 1e-10);
}

proptest! {
    #[test]
    fn exact_exponentials_are_recovered(log_a in -5.0..5.0f64, rate in 0.01..3.0f64, n in 3usize..12) {
        let pairs: Vec<(f64, f64)> = (1..=n).map(|d| (d as f64, (log_a - rate * d as f64).exp())).collect();
        let fit = fit_exponential_decay(&pairs).unwrap();
        prop_assert!((fit.rate - rate).abs() < 1e-9);
        prop_assert!((fit.log_amplitude - log_a).abs() < 1e-8);
        prop_assert!(fit.r_squared > 1.0 - 1e-12);
        prop_assert_eq!(fit.samples, n);
    }
}
