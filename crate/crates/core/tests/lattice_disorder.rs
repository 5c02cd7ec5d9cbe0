use pointlab_core::disorder::{constant_config, sample, DensityShape, DisorderConfig, DisorderSpec};
use pointlab_core::lattice::{dist_to_lattice, LatticeWindow};
use proptest::prelude::*;

proptest! {
    #[test]
    fn window_index_round_trip(l in 1usize..6, dim in 1usize..4, raw in 0usize..100_000) {
        let w = LatticeWindow::new(l, dim).unwrap();
        let i = raw % w.count();
        let s = w.site(i);
        prop_assert_eq!(w.index_of(&s), Some(i));
        prop_assert!(s[dim..].iter().all(|&c| c == 0));
        prop_assert!(w.depth(&s) >= 0);
    }

    #[test]
    fn distance_to_lattice_matches_neighbour_search(x in -20.0..20.0f64, y in -20.0..20.0f64, z in -20.0..20.0f64) {
        let p = [x, y, z];
        let mut best = f64::INFINITY;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let q = [x.floor() + dx as f64, y.floor() + dy as f64, z.floor() + dz as f64];
                    let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
                    best = best.min(d);
                }
            }
        }
        prop_assert!((dist_to_lattice(&p) - best).abs() < 1e-12);
        prop_assert!(dist_to_lattice(&p) <= 3f64.sqrt() / 2.0 + 1e-12);
    }
}

#[test]
fn outside_sites_have_no_index() {
    let w = LatticeWindow::new(2, 2).unwrap();
    assert_eq!(w.index_of(&[3, 0, 0]), None);
    assert_eq!(w.index_of(&[0, 0, 1]), None);
    assert_eq!(w.count(), 25);
    assert!(LatticeWindow::new(0, 3).is_err());
    assert!(LatticeWindow::new(1, 4).is_err());
}

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

#[test]
fn uniform_couplings_have_uniform_moments() {
    let w = LatticeWindow::cube(10).unwrap();
    let cfg = sample(&DisorderSpec::uniform(1.0, 2.0).unwrap(), w, 11);
    let (mean, var) = moments(cfg.omega());
    assert!((mean + 1.5).abs() < 0.01, "mean {mean}");
    assert!((var - 1.0 / 12.0).abs() < 0.004, "variance {var}");
    assert!(cfg.omega().iter().all(|&o| (-2.0..=-1.0).contains(&o)));
    assert_eq!(cfg.active_count(), w.count());
}

#[test]
fn bump_couplings_have_bump_moments() {
    // (1 - ξ²)² on [-1, 1] has variance 1/7; rescaled by the half-width 0.5.
    let w = LatticeWindow::cube(10).unwrap();
    let spec = DisorderSpec::new(1.0, 2.0, DensityShape::TruncatedBump, 0.0).unwrap();
    let cfg = sample(&spec, w, 12);
    let (mean, var) = moments(cfg.omega());
    assert!((mean + 1.5).abs() < 0.01, "mean {mean}");
    assert!((var - 0.25 / 7.0).abs() < 0.003, "variance {var}");
}

#[test]
fn vacancy_fraction_follows_p0() {
    let w = LatticeWindow::cube(10).unwrap();
    let spec = DisorderSpec::new(1.0, 2.0, DensityShape::Uniform, 0.3).unwrap();
    let cfg = sample(&spec, w, 13);
    assert!((cfg.active_fraction() - 0.7).abs() < 0.02, "{}", cfg.active_fraction());
}

#[test]
fn sampling_is_reproducible_per_seed() {
    let w = LatticeWindow::cube(3).unwrap();
    let spec = DisorderSpec::new(0.5, 3.0, DensityShape::Uniform, 0.2).unwrap();
    assert_eq!(sample(&spec, w, 5), sample(&spec, w, 5));
    assert_ne!(sample(&spec, w, 5).omega(), sample(&spec, w, 6).omega());
}

#[test]
fn invalid_supports_are_rejected() {
    assert!(DisorderSpec::uniform(2.0, 1.0).is_err());
    assert!(DisorderSpec::uniform(0.0, 1.0).is_err());
    assert!(DisorderSpec::new(1.0, 2.0, DensityShape::Uniform, 1.0).is_err());
    assert!(constant_config(LatticeWindow::cube(1).unwrap(), 0.0).is_err());
}

#[test]
fn json_round_trip_and_deactivation() {
    let w = LatticeWindow::cube(2).unwrap();
    let cfg = sample(&DisorderSpec::uniform(1.0, 2.0).unwrap(), w, 9);
    let back = DisorderConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back, cfg);
    let off = cfg.deactivated(4);
    assert_eq!(off.active_count(), cfg.active_count() - 1);
    assert!(!off.active_indices().contains(&4));
}
