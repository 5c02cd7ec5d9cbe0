use std::f64::consts::PI;

use num_complex::Complex64;
use pointlab_core::disorder::{sample, DisorderConfig, DisorderSpec};
use pointlab_core::gamma_green::{
    assemble_gamma, boundary_condition_residual, c_num, cell_averaged_green, combes_thomas_fit, free_green,
    CtFitSpec, EnergyPoint,
};
use pointlab_core::lattice::{distance, site_point, LatticeWindow, Point3};
use pointlab_core::numerics::{gauss_legendre, lu_solve, ComplexMatrix, QuadratureSpec};
use proptest::prelude::*;

const PI2: f64 = PI * PI;

fn g0(r: f64, w: Complex64) -> Complex64 {
    (Complex64::i() * w * r).exp() / (4.0 * PI * r)
}

fn random_config(l: usize, seed: u64) -> DisorderConfig {
    sample(&DisorderSpec::uniform(1.0, 2.0).unwrap(), LatticeWindow::cube(l).unwrap(), seed)
}

#[test]
fn free_kernel_reference_values() {
    // √(1 + 1e-12 i) ≈ 1, so G₀ at unit distance is e^{i}/(4π).
    let z = EnergyPoint::from_z(Complex64::new(1.0, 1e-12)).unwrap();
    let g = free_green(&[0.1, 0.2, 0.3], &[1.1, 0.2, 0.3], &z).unwrap();
    assert!((g - Complex64::new(0.042_995_9, 0.066_962_1)).norm() < 1e-7);

    // z = i: √i = (1 + i)/√2 and |G₀| = e^{-1/√2}/(4π).
    let z = EnergyPoint::new(0.0, 1.0).unwrap();
    let g = free_green(&[0.5, 0.5, 0.5], &[0.5, 1.5, 0.5], &z).unwrap();
    assert!((g.norm() - (-0.5f64.sqrt()).exp() / (4.0 * PI)).abs() < 1e-14);
    assert!((g.norm() - 0.039_237_2).abs() < 1e-7);
}

#[test]
fn coincident_and_lattice_points_are_rejected() {
    let z = EnergyPoint::new(1.0, 1.0).unwrap();
    assert!(free_green(&[0.3; 3], &[0.3; 3], &z).is_err());
    let sys = assemble_gamma(&random_config(1, 0), z).unwrap();
    assert!(sys.green(&[1.0, 0.0, 0.0], &[0.5; 3]).is_err());
}

#[test]
fn single_site_matches_closed_form() {
    let w = LatticeWindow::cube(1).unwrap();
    let mut omega = vec![0.0; w.count()];
    let center = w.index_of(&[0, 0, 0]).unwrap();
    omega[center] = -1.3;
    let cfg = DisorderConfig::from_omega(w, omega).unwrap();
    let z = EnergyPoint::new(1.5 * PI2, 0.7).unwrap();
    let sys = assemble_gamma(&cfg, z).unwrap();
    let sw = z.sqrt_z();
    let (x, y): (Point3, Point3) = ([0.4, -0.3, 0.2], [-0.6, 0.45, 0.9]);
    let o = [0.0; 3];
    let denom = Complex64::new(1.0 / -1.3, 0.0) - Complex64::i() * sw / (4.0 * PI);
    let expected = g0(distance(&x, &y), sw) + g0(distance(&x, &o), sw) * g0(distance(&o, &y), sw) / denom;
    let got = sys.green(&x, &y).unwrap();
    assert!((got - expected).norm() < 1e-13 * expected.norm());
}

#[test]
fn deactivating_a_site_equals_deleting_its_row_and_column() {
    let cfg = random_config(1, 4);
    let z = EnergyPoint::new(2.0 * PI2, 0.5).unwrap();
    let j = cfg.window().index_of(&[1, 0, -1]).unwrap();
    let sys = assemble_gamma(&cfg.deactivated(j), z).unwrap();
    assert_eq!(sys.dim(), cfg.active_count() - 1);

    // Literal assembly on the remaining sites.
    let sw = z.sqrt_z();
    let keep: Vec<usize> = cfg.active_indices().into_iter().filter(|&i| i != j).collect();
    let pts: Vec<Point3> = keep.iter().map(|&i| site_point(&cfg.window().site(i))).collect();
    let n = pts.len();
    let gamma = ComplexMatrix::from_fn(n, n, |a, b| {
        if a == b {
            Complex64::new(1.0 / cfg.omega()[keep[a]], 0.0) - Complex64::i() * sw / (4.0 * PI)
        } else {
            -g0(distance(&pts[a], &pts[b]), sw)
        }
    });
    let (x, y): (Point3, Point3) = ([0.3, 0.25, -0.4], [-0.45, 0.1, 0.35]);
    let gy = ComplexMatrix::from_fn(n, 1, |a, _| g0(distance(&pts[a], &y), sw));
    let c = lu_solve(&gamma, &gy).unwrap();
    let expected = g0(distance(&x, &y), sw)
        + (0..n).map(|a| g0(distance(&x, &pts[a]), sw) * c[(a, 0)]).sum::<Complex64>();
    let got = sys.green(&x, &y).unwrap();
    assert!((got - expected).norm() < 1e-12 * expected.norm());
}

#[test]
fn empty_configuration_reduces_to_free_kernel() {
    let z = EnergyPoint::new(PI2, 1.0).unwrap();
    let sys = assemble_gamma(&DisorderConfig::empty(LatticeWindow::cube(2).unwrap()), z).unwrap();
    let (x, y) = ([0.2, 0.3, 0.4], [1.7, -0.2, 0.1]);
    assert_eq!(sys.interaction_term(&x, &y).unwrap(), Complex64::new(0.0, 0.0));
    assert_eq!(sys.green(&x, &y).unwrap(), free_green(&x, &y, &z).unwrap());
}

#[test]
fn green_is_symmetric_and_real_on_conjugation() {
    let cfg = random_config(1, 6);
    let z = EnergyPoint::new(1.7 * PI2, 0.4).unwrap();
    let sys = assemble_gamma(&cfg, z).unwrap();
    let lower = assemble_gamma(&cfg, z.conj()).unwrap();
    assert!(sys.symmetry_defect() < 1e-14);
    let pts: [Point3; 3] = [[0.3, 0.2, 0.1], [-0.7, 0.45, 0.6], [1.2, -0.35, -0.8]];
    for x in &pts {
        for y in &pts {
            if x == y {
                continue;
            }
            let gxy = sys.green(x, y).unwrap();
            assert!((gxy - sys.green(y, x).unwrap()).norm() < 1e-12 * gxy.norm());
            assert!((lower.green(x, y).unwrap() - gxy.conj()).norm() < 1e-12 * gxy.norm());
        }
    }
}

#[test]
fn green_is_holomorphic_in_z() {
    let cfg = random_config(1, 8);
    let (e, kappa, h) = (1.5 * PI2, 0.6, 1e-4);
    let (x, y) = ([0.35, -0.2, 0.15], [-0.4, 0.3, 0.55]);
    let at = |e: f64, k: f64| assemble_gamma(&cfg, EnergyPoint::new(e, k).unwrap()).unwrap().green(&x, &y).unwrap();
    let de = (at(e + h, kappa) - at(e - h, kappa)) / (2.0 * h);
    let dk = (at(e, kappa + h) - at(e, kappa - h)) / (2.0 * h);
    let residual = (dk - Complex64::i() * de).norm() / de.norm();
    assert!(residual < 1e-5, "Cauchy-Riemann residual {residual}");
}

#[test]
fn active_sites_satisfy_the_coupling_condition() {
    let cfg = random_config(1, 10);
    let z = EnergyPoint::new(1.5 * PI2, 1.0).unwrap();
    let sys = assemble_gamma(&cfg, z).unwrap();
    for site in [[0, 0, 0], [1, -1, 0], [-1, 1, 1]] {
        let r = boundary_condition_residual(&sys, &site, &[0.45, 0.3, -0.35], 1e-3).unwrap();
        assert!(r < 1e-6, "site {site:?}: residual {r}");
    }
    let off = cfg.deactivated(cfg.window().index_of(&[0, 0, 0]).unwrap());
    let sys = assemble_gamma(&off, z).unwrap();
    assert!(boundary_condition_residual(&sys, &[0, 0, 0], &[0.45, 0.3, -0.35], 1e-3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dissipativity_and_inverse_bound(
        seed in 0u64..10_000,
        e in (PI2 + 0.5)..(4.0 * PI2),
        kappa in 0.1..2.0f64,
        p0 in prop::sample::select(vec![0.0, 0.3]),
    ) {
        let spec = DisorderSpec::new(1.0, 2.0, Default::default(), p0).unwrap();
        let cfg = sample(&spec, LatticeWindow::cube(1).unwrap(), seed);
        prop_assume!(cfg.active_count() > 0);
        let sys = assemble_gamma(&cfg, EnergyPoint::new(e, kappa).unwrap()).unwrap();
        let lam = sys.lambda_min();
        prop_assert!(lam >= c_num(e, kappa) * kappa);
        prop_assert!(sys.dissipativity_certificate().pass);
        prop_assert!(sys.inverse_norm() * lam <= 1.0 + 1e-10);
        prop_assert!((sys.inverse_norm() - sys.inverse_norm_dense()).abs() <= 1e-8 * sys.inverse_norm());
    }
}

// Tensor Gauss-Legendre over both cells, each split into 2³ sub-cubes so the
// site singularities sit on sub-cube corners.
fn tensor_cell_points(center: &Point3, order: usize) -> (Vec<Point3>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let mut axis = Vec::new();
    for half in [-0.25, 0.25] {
        for (xi, wi) in x.iter().zip(&w) {
            axis.push((half + 0.25 * xi, 0.25 * wi));
        }
    }
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    for &(a, wa) in &axis {
        for &(b, wb) in &axis {
            for &(c, wc) in &axis {
                pts.push([center[0] + a, center[1] + b, center[2] + c]);
                wts.push(wa * wb * wc);
            }
        }
    }
    (pts, wts)
}

fn tensor_cell_average(sys: &pointlab_core::gamma_green::GammaSystem, m: &Point3, n: &Point3, order: usize) -> f64 {
    let (xs, wx) = tensor_cell_points(m, order);
    let (ys, wy) = tensor_cell_points(n, order);
    let block = sys.green_block(&xs, &ys).unwrap();
    (0..xs.len())
        .map(|a| wx[a] * (0..ys.len()).map(|b| wy[b] * block[(a, b)].norm()).sum::<f64>())
        .sum()
}

#[test]
fn cell_average_matches_tensor_quadrature() {
    let z = EnergyPoint::new(1.0, 1.0).unwrap();
    let spec = QuadratureSpec {
        order: 6,
        ..QuadratureSpec::with_tolerance(1e-5)
    };

    let free = assemble_gamma(&DisorderConfig::empty(LatticeWindow::cube(2).unwrap()), z).unwrap();
    let (avg, err) = cell_averaged_green(&[0, 0, 0], &[2, 0, 0], &free, &spec).unwrap();
    let oracle = tensor_cell_average(&free, &[0.0; 3], &[2.0, 0.0, 0.0], 6);
    assert!(err <= 1e-5);
    assert!((avg - oracle).abs() < 1e-4 * oracle, "{avg} vs {oracle}");

    let sys = assemble_gamma(&random_config(2, 3), z).unwrap();
    let (avg, _) = cell_averaged_green(&[0, 0, 0], &[1, 1, 0], &sys, &spec).unwrap();
    let oracle = tensor_cell_average(&sys, &[0.0; 3], &[1.0, 1.0, 0.0], 6);
    assert!((avg - oracle).abs() < 0.01 * oracle, "{avg} vs {oracle}");
}

#[test]
fn free_combes_thomas_fit_decays_at_tau() {
    let z = EnergyPoint::new(1.5 * PI2, 1.0).unwrap();
    let free = assemble_gamma(&DisorderConfig::empty(LatticeWindow::cube(3).unwrap()), z).unwrap();
    let spec = CtFitSpec {
        min_distance: 2,
        max_distance: 6,
        offsets: vec![[0, 0]],
        order: 3,
        ..CtFitSpec::default()
    };
    let report = combes_thomas_fit(&free, &spec).unwrap();
    assert!(report.fit.rate > 0.8 * report.tau, "rate {} vs τ {}", report.fit.rate, report.tau);
    assert!(report.points.windows(2).all(|p| p[1].value < p[0].value));
}
