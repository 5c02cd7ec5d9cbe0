use std::f64::consts::PI;

use num_complex::Complex64;
use pointlab_core::decay::{
    convolution_decay, free_green_cell_bounds, inverse_decay_report, max_conjugation_diagnostic, mu_star,
    random_decaying_matrix, verify_offdiag_decay,
};
use pointlab_core::disorder::{sample, DensityShape, DisorderConfig, DisorderSpec};
use pointlab_core::eigenmodes::{
    admissible_radius, commutator_norms, fd_residual, overlap_ball, overlap_lower_bound, weighted_mode_norm,
    weighted_norm_bound, GeneralizedMode, ModeProfile, WeightedNormSpec,
};
use pointlab_core::gamma_green::{
    combes_thomas_fit, CtFitSpec, EnergyPoint, GammaSystem, KernelConvention,
};
use pointlab_core::lattice::{LatticeWindow, Point3, SiteNorm};
use pointlab_core::numerics::{operator_norm, ComplexMatrix, QuadratureSpec};
use pointlab_core::transport::{
    deloc_chain, moment_resolvent, moment_time_avg, projector_tail_bounds, DelocSpec, ProjectorReport, ProxySystem, CHAIN_SLACK,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::*;
use crate::manifest::{csv_bytes, Assertion};
use crate::{CliError, Outcome};

type Result<T> = std::result::Result<T, CliError>;

const PI2: f64 = PI * PI;

pub(crate) fn dispatch(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::GammaCheck(a) => gamma_check(a),
        Command::InverseDecay(a) => inverse_decay(a),
        Command::CtFit(a) => ct_fit(a),
        Command::EigenmodeBounds(a) => eigenmode_bounds(a),
        Command::TransportIdentity(a) => transport_identity(a),
        Command::ProjectorBounds(a) => projector_bounds(a),
        Command::DelocLowerbound(a) => deloc_lowerbound(a),
        Command::ConvolutionCheck(a) => convolution_check(a),
    }
}

fn disorder_spec(d: &DisorderArg) -> Result<DisorderSpec> {
    Ok(DisorderSpec::new(d.a, d.b, DensityShape::Uniform, d.p0)?)
}

fn json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

// ---------------------------------------------------------------- gamma-check

#[derive(Serialize)]
struct CertRow {
    #[serde(rename = "E")]
    e: f64,
    kappa: f64,
    #[serde(rename = "L")]
    l: usize,
    seed: u64,
    p0: f64,
    active: usize,
    lambda_min: f64,
    c_num: f64,
    inverse_norm: f64,
    pass: bool,
    inverse_pass: bool,
}

const INVERSE_SLACK: f64 = 1e-10;

fn certificate(e: f64, kappa: f64, l: usize, seed: u64, d: &DisorderArg) -> Result<CertRow> {
    let config = sample(&disorder_spec(d)?, LatticeWindow::cube(l)?, seed);
    let system = GammaSystem::assemble(&config, EnergyPoint::new(e, kappa)?, KernelConvention::Unconjugated)?;
    let cert = system.dissipativity_certificate();
    let inverse_norm = operator_norm(&system.inverse());
    Ok(CertRow {
        e,
        kappa,
        l,
        seed,
        p0: d.p0,
        active: system.dim(),
        lambda_min: cert.lambda_min,
        c_num: cert.c_num,
        inverse_norm,
        pass: cert.pass,
        inverse_pass: inverse_norm * cert.lambda_min <= 1.0 + INVERSE_SLACK,
    })
}

fn gamma_check(a: &GammaCheckArgs) -> Result<Outcome> {
    let rows = if a.batch == 0 {
        vec![certificate(a.energy.resolve(2.0 * PI2), a.kappa, a.l, a.seed, &a.disorder)?]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let draws: Vec<(f64, f64, usize, u64, f64)> = (0..a.batch)
            .map(|_| {
                let e = rng.random_range(PI2 + 0.5..4.0 * PI2);
                let kappa = rng.random_range(0.1..=2.0);
                let l = [2, 3, 4][rng.random_range(0..3)];
                let p0 = [0.0, 0.3][rng.random_range(0..2)];
                (e, kappa, l, rng.random(), p0)
            })
            .collect();
        draws
            .iter()
            .map(|&(e, kappa, l, seed, p0)| {
                let d = DisorderArg { p0, ..a.disorder.clone() };
                certificate(e, kappa, l, seed, &d)
            })
            .collect::<Result<Vec<_>>>()?
    };
    let dissipativity = rows
        .iter()
        .map(|r| r.lambda_min / (r.c_num * r.kappa))
        .fold(f64::INFINITY, f64::min);
    let inverse = rows.iter().map(|r| r.inverse_norm * r.lambda_min).fold(0.0, f64::max);
    Ok(Outcome {
        assertions: vec![
            Assertion::with_pass("dissipativity", rows.iter().all(|r| r.pass), dissipativity, 1.0),
            Assertion::with_pass(
                "inverse_bound",
                rows.iter().all(|r| r.inverse_pass),
                inverse,
                1.0 + INVERSE_SLACK,
            ),
        ],
        report: if a.batch == 0 { json(&rows[0])? } else { json(&rows)? },
        csv: (a.batch > 0).then(|| csv_bytes(&rows)).transpose()?,
        budget_exhausted: false,
    })
}

// -------------------------------------------------------------- inverse-decay

#[derive(Serialize)]
struct InverseRow {
    kind: &'static str,
    dim: usize,
    index: usize,
    seed: u64,
    c0: f64,
    gamma: f64,
    rho: f64,
    mu: f64,
    offdiag_ok: bool,
    worst_ratio: f64,
    conjugation: f64,
    pass: bool,
}

#[allow(clippy::too_many_arguments)]
fn decay_row(
    kind: &'static str,
    dim: usize,
    index: usize,
    seed: u64,
    a: &ComplexMatrix,
    inv: &ComplexMatrix,
    sites: &[[i64; 3]],
    (c0, gamma, rho): (f64, f64, f64),
) -> Result<InverseRow> {
    let norm = SiteNorm::Euclidean;
    let mu = mu_star(rho, gamma, c0, dim, norm)?;
    let offdiag_ok = verify_offdiag_decay(a, sites, c0, gamma, norm)?;
    let report = inverse_decay_report(inv, sites, rho, mu, norm)?;
    let conjugation = max_conjugation_diagnostic(a, sites, mu, rho, norm)?;
    Ok(InverseRow {
        kind,
        dim,
        index,
        seed,
        c0,
        gamma,
        rho,
        mu,
        offdiag_ok,
        worst_ratio: report.worst_ratio,
        conjugation,
        pass: offdiag_ok && report.pass && conjugation <= 0.5,
    })
}

fn inverse_decay(a: &InverseDecayArgs) -> Result<Outcome> {
    let z = EnergyPoint::new(a.energy.resolve(1.5 * PI2), a.kappa)?;
    let spec = disorder_spec(&a.disorder)?;
    let window = LatticeWindow::cube(a.l)?;
    let mut rows = Vec::new();
    for i in 0..a.systems {
        let seed = a.seed + i as u64;
        let config = sample(&spec, window, seed);
        let system = GammaSystem::assemble(&config, z, KernelConvention::Unconjugated)?;
        // ‖Γ⁻¹‖ ≤ 1/λ_min(−Im Γ).
        let rho = 1.0 / system.lambda_min();
        let c0 = 1.0 / (4.0 * PI);
        rows.push(decay_row(
            "gamma",
            3,
            i,
            seed,
            system.matrix(),
            &system.inverse(),
            system.sites(),
            (c0, z.tau(), rho),
        )?);
    }
    for (dim, half) in [(1usize, 40usize), (2, 5), (3, 2)] {
        let sites = LatticeWindow::new(half, dim)?.sites();
        let synthetic: Vec<InverseRow> = (0..a.synthetic)
            .into_par_iter()
            .map(|i| {
                let seed = a.seed.wrapping_mul(1_000_003).wrapping_add((dim * 100_000 + i) as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let c0 = rng.random_range(0.05..0.5);
                let gamma = rng.random_range(0.5..2.0);
                let m = random_decaying_matrix(&sites, c0, gamma, SiteNorm::Euclidean, rng.random());
                let inv = pointlab_core::numerics::lu_factor(&m)?.inverse();
                let rho = operator_norm(&inv) * (1.0 + 1e-9);
                decay_row("synthetic", dim, i, seed, &m, &inv, &sites, (c0, gamma, rho))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(synthetic);
    }
    let mut assertions = Vec::new();
    let groups = [
        ("gamma", "gamma", None),
        ("synthetic_d1", "synthetic", Some(1)),
        ("synthetic_d2", "synthetic", Some(2)),
        ("synthetic_d3", "synthetic", Some(3)),
    ];
    for (label, kind, dim) in groups {
        let g: Vec<&InverseRow> = rows
            .iter()
            .filter(|r| r.kind == kind && dim.is_none_or(|d| r.dim == d))
            .collect();
        if g.is_empty() {
            continue;
        }
        let worst = g.iter().map(|r| r.worst_ratio).fold(0.0, f64::max);
        let conj = g.iter().map(|r| r.conjugation).fold(0.0, f64::max);
        assertions.push(Assertion::with_pass(
            format!("inverse_decay_{label}"),
            g.iter().all(|r| r.offdiag_ok && r.worst_ratio <= 1.0),
            worst,
            1.0,
        ));
        assertions.push(Assertion::at_most(format!("conjugation_{label}"), conj, 0.5));
    }
    Ok(Outcome {
        assertions,
        report: json(&rows)?,
        csv: Some(csv_bytes(&rows)?),
        budget_exhausted: false,
    })
}

// --------------------------------------------------------------------- ct-fit

#[derive(Serialize)]
struct CtRow {
    #[serde(rename = "E")]
    e: f64,
    distance: f64,
    value: f64,
    min: f64,
    max: f64,
}

fn ct_fit(a: &CtFitArgs) -> Result<Outcome> {
    let energies = a.energies.resolve(&[1.5 * PI2, 2.0 * PI2]);
    let config = sample(&disorder_spec(&a.disorder)?, LatticeWindow::cube(a.l)?, a.seed);
    let spec = CtFitSpec {
        min_distance: a.min_distance,
        max_distance: a.max_distance,
        order: a.order,
        ..CtFitSpec::default()
    };
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    let mut assertions = Vec::new();
    for &e in &energies {
        let system = GammaSystem::assemble(&config, EnergyPoint::new(e, a.kappa)?, KernelConvention::Unconjugated)?;
        let r = combes_thomas_fit(&system, &spec)?;
        for p in &r.points {
            rows.push(CtRow {
                e,
                distance: p.distance,
                value: p.value,
                min: p.min,
                max: p.max,
            });
        }
        assertions.push(Assertion::at_least(format!("r_squared[E={e:.4}]"), r.fit.r_squared, spec.min_r_squared));
        assertions.push(Assertion::with_pass(
            format!("rate[E={e:.4}]"),
            r.fit.rate > 0.0 && r.fit.rate >= r.rate_floor,
            r.fit.rate,
            r.rate_floor,
        ));
        reports.push(r);
    }
    Ok(Outcome {
        assertions,
        report: json(&reports)?,
        csv: Some(csv_bytes(&rows)?),
        budget_exhausted: false,
    })
}

// ----------------------------------------------------------- eigenmode-bounds

#[derive(Serialize)]
struct DriftRow {
    eps: f64,
    #[serde(rename = "L")]
    l: f64,
    a1: f64,
    a2: f64,
    a0: f64,
    psi_l_norm_sq: f64,
    relative_error: f64,
}

#[derive(Serialize)]
struct EpsReport {
    eps: f64,
    lattice_max_abs: f64,
    origin_error: f64,
    fd_residual_h: f64,
    fd_residual_h2: f64,
    fd_order: f64,
    commutator_drift: f64,
    t_e: f64,
    overlap: f64,
    overlap_bound: f64,
    weighted: Vec<pointlab_core::eigenmodes::WeightedNorm>,
}

// (x₁/L, x₂/L, x₃) inside the transition layer of the cutoff
const FD_POINTS: [[f64; 3]; 6] = [
    [1.37, 0.41, 0.3],
    [0.62, 1.55, -1.1],
    [1.21, 1.74, 0.7],
    [-1.43, 0.88, 0.3],
    [0.35, -1.62, -0.45],
    [-1.18, -1.27, 1.9],
];

fn eigenmode_bounds(a: &EigenmodeArgs) -> Result<Outcome> {
    let quad = QuadratureSpec {
        panels: 4,
        order: 16,
        tolerance: 1e-6,
        truncation_radius: None,
    };
    let mut reports = Vec::new();
    let mut drift_rows = Vec::new();
    for &eps in &a.eps {
        let uniform = GeneralizedMode::new(ModeProfile::uniform(eps)?);
        let bump = GeneralizedMode::new(ModeProfile::bump(eps)?);
        let r = a.lattice_radius;
        let mut lattice_max_abs = 0.0f64;
        for i in -r..=r {
            for j in -r..=r {
                for k in -r..=r {
                    let x = [i as f64, j as f64, k as f64];
                    lattice_max_abs = lattice_max_abs.max(uniform.psi_e(&x).norm()).max(bump.psi_e(&x).norm());
                }
            }
        }
        let origin_error = (uniform.profile().psi0(0.0, 0.0) - 1.0)
            .norm()
            .max((bump.profile().psi0(0.0, 0.0) - 1.0).norm());

        let fd_mode = bump.clone().with_cutoff(a.fd_cutoff)?;
        let pts: Vec<Point3> = FD_POINTS
            .iter()
            .map(|p| [p[0] * a.fd_cutoff, p[1] * a.fd_cutoff, p[2]])
            .collect();
        let r1 = fd_residual(&fd_mode, &pts, a.h)?;
        let r2 = fd_residual(&fd_mode, &pts, 0.5 * a.h)?;

        let norms = a
            .l
            .iter()
            .map(|&l| commutator_norms(&bump.clone().with_cutoff(l)?, &quad).map_err(CliError::from))
            .collect::<Result<Vec<_>>>()?;
        let a0s: Vec<f64> = norms.iter().map(|n| n.a0).collect();
        let hi = a0s.iter().copied().fold(0.0, f64::max);
        let lo = a0s.iter().copied().fold(f64::INFINITY, f64::min);
        for n in &norms {
            drift_rows.push(DriftRow {
                eps,
                l: n.l,
                a1: n.a1,
                a2: n.a2,
                a0: n.a0,
                psi_l_norm_sq: n.psi_l_norm_sq,
                relative_error: n.relative_error,
            });
        }

        let t_e = admissible_radius(eps)?;
        let overlap = overlap_ball(t_e, &uniform)?.norm();
        let weighted = if a.skip_weighted {
            Vec::new()
        } else {
            a.q.iter()
                .map(|&q| weighted_mode_norm(q, &uniform, &WeightedNormSpec::default()).map_err(CliError::from))
                .collect::<Result<Vec<_>>>()?
        };
        reports.push(EpsReport {
            eps,
            lattice_max_abs,
            origin_error,
            fd_residual_h: r1,
            fd_residual_h2: r2,
            fd_order: (r1 / r2).log2(),
            commutator_drift: if a0s.is_empty() { 0.0 } else { (hi - lo) / hi },
            t_e,
            overlap,
            overlap_bound: overlap_lower_bound(t_e),
            weighted,
        });
    }
    let max = |f: &dyn Fn(&EpsReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    let min = |f: &dyn Fn(&EpsReport) -> f64| reports.iter().map(f).fold(f64::INFINITY, f64::min);
    let mut assertions = vec![
        Assertion::at_most("psi_e_vanishes_on_lattice", max(&|r| r.lattice_max_abs), 1e-14),
        Assertion::at_most("psi0_origin", max(&|r| r.origin_error), 1e-10),
        Assertion::at_least("fd_order", min(&|r| r.fd_order), 1.9),
        Assertion::at_most("commutator_drift", max(&|r| r.commutator_drift), 0.10),
        Assertion::at_least("overlap_lower_bound", min(&|r| r.overlap / r.overlap_bound), 1.0),
    ];
    if !a.skip_weighted {
        let worst = reports
            .iter()
            .flat_map(|r| r.weighted.iter().map(|w| w.total / weighted_norm_bound(w.q)))
            .fold(0.0, f64::max);
        assertions.push(Assertion::at_most("weighted_norm", worst, 1.0));
    }
    Ok(Outcome {
        assertions,
        report: json(&reports)?,
        csv: Some(csv_bytes(&drift_rows)?),
        budget_exhausted: false,
    })
}

// --------------------------------------------------------- transport-identity

#[derive(Serialize)]
struct TransportRow {
    trial: usize,
    #[serde(rename = "T")]
    t: f64,
    time_avg: f64,
    resolvent: f64,
    rel_err: f64,
}

fn transport_identity(a: &TransportArgs) -> Result<Outcome> {
    let rows: Vec<Vec<TransportRow>> = (0..a.trials)
        .into_par_iter()
        .map(|i| {
            let proxy = ProxySystem::random(a.n, a.seed.wrapping_add(i as u64))?;
            a.t.iter()
                .map(|&t| {
                    let time_avg = moment_time_avg(&proxy, t)?;
                    let resolvent = moment_resolvent(&proxy, t)?;
                    Ok(TransportRow {
                        trial: i,
                        t,
                        time_avg,
                        resolvent,
                        rel_err: (time_avg - resolvent).abs() / time_avg.abs(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<TransportRow> = rows.into_iter().flatten().collect();
    let worst = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    Ok(Outcome {
        assertions: vec![Assertion::at_most("max_relative_error", worst, a.tolerance)],
        report: serde_json::json!({
            "n": a.n,
            "trials": a.trials,
            "T": a.t,
            "max_relative_error": worst,
        }),
        csv: Some(csv_bytes(&rows)?),
        budget_exhausted: false,
    })
}

// ----------------------------------------------------------- projector-bounds

#[derive(Serialize)]
struct ProjectorRow {
    trial: usize,
    #[serde(rename = "E")]
    e: f64,
    delta: f64,
    eps: f64,
    a: f64,
    projected_norm: f64,
    projected_bound: f64,
    resolvent_norm: f64,
    resolvent_bound: f64,
    projected_pass: bool,
    resolvent_pass: bool,
}

impl ProjectorRow {
    fn new(trial: usize, r: ProjectorReport) -> Self {
        Self {
            trial,
            e: r.e,
            delta: r.delta,
            eps: r.eps,
            a: r.a,
            projected_norm: r.projected_norm,
            projected_bound: r.projected_bound,
            resolvent_norm: r.resolvent_norm,
            resolvent_bound: r.resolvent_bound,
            projected_pass: r.projected_pass,
            resolvent_pass: r.resolvent_pass,
        }
    }
}

fn projector_bounds(a: &ProjectorArgs) -> Result<Outcome> {
    let rows: Vec<ProjectorRow> = (0..a.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_mul(0x9E37_79B9).wrapping_add(i as u64));
            let proxy = ProxySystem::random(a.n, rng.random())?;
            let eig = proxy.eigen()?;
            let (lo, hi) = (eig.values[0], eig.values[a.n - 1]);
            let e = rng.random_range(lo - 0.5..hi + 0.5);
            let delta = rng.random_range(0.05..1.5);
            let eps = rng.random_range(0.01..2.0);
            Ok(ProjectorRow::new(i, projector_tail_bounds(&proxy, e, delta, eps)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let ratio = |num: fn(&ProjectorRow) -> f64, den: fn(&ProjectorRow) -> f64| {
        rows.iter()
            .map(|r| if den(r) > 0.0 { num(r) / den(r) } else { 0.0 })
            .fold(0.0, f64::max)
    };
    let p1 = rows.iter().filter(|r| r.projected_pass).count();
    let p2 = rows.iter().filter(|r| r.resolvent_pass).count();
    Ok(Outcome {
        assertions: vec![
            Assertion::with_pass(
                "projected_tail",
                p1 == rows.len(),
                ratio(|r| r.projected_norm, |r| r.projected_bound),
                1.0,
            ),
            Assertion::with_pass(
                "resolvent_tail",
                p2 == rows.len(),
                ratio(|r| r.resolvent_norm, |r| r.resolvent_bound),
                1.0,
            ),
        ],
        report: serde_json::json!({
            "n": a.n,
            "trials": a.trials,
            "projected_pass": p1,
            "resolvent_pass": p2,
        }),
        csv: Some(csv_bytes(&rows)?),
        budget_exhausted: false,
    })
}

// ----------------------------------------------------------- deloc-lowerbound

#[derive(Serialize)]
struct DelocCsvRow {
    #[serde(rename = "T")]
    t: f64,
    #[serde(rename = "N")]
    n: f64,
    #[serde(rename = "M_lower")]
    m_lower: f64,
    exponent_running: Option<f64>,
}

fn deloc_lowerbound(a: &DelocArgs) -> Result<Outcome> {
    let [i_minus, i_plus] = a.interval[..] else {
        return Err(CliError::Usage(format!("--I needs two values, got {}", a.interval.len())));
    };
    let window = LatticeWindow::cube(a.l)?;
    let config = if a.free {
        DisorderConfig::empty(window)
    } else {
        sample(&disorder_spec(&a.disorder)?, window, a.seed)
    };
    let spec = DelocSpec {
        t_grid: a.t.clone(),
        energy_nodes: a.energy_nodes,
        l_candidates: a.cutoffs.clone(),
        budget_seconds: a.budget,
        ..DelocSpec::default()
    };
    let report = deloc_chain(&config, (i_minus, i_plus), a.q, &spec)?;
    let margin = report
        .cells
        .iter()
        .map(|c| (c.chain_lhs - c.chain_rhs) / c.overlap)
        .fold(f64::INFINITY, f64::min);
    let rows: Vec<DelocCsvRow> = report
        .rows
        .iter()
        .map(|r| DelocCsvRow {
            t: r.t,
            n: r.n_min,
            m_lower: r.m_lower,
            exponent_running: r.exponent_running,
        })
        .collect();
    Ok(Outcome {
        assertions: vec![
            Assertion::with_pass("chain", report.chain_pass, margin, -CHAIN_SLACK),
            Assertion::at_least("moment_exponent", report.exponent.unwrap_or(f64::NAN), 0.8),
        ],
        report: json(&report)?,
        csv: Some(csv_bytes(&rows)?),
        budget_exhausted: !report.complete,
    })
}

// ---------------------------------------------------------- convolution-check

#[derive(Serialize)]
struct CellRow {
    #[serde(rename = "E")]
    e: f64,
    n1: i64,
    n2: i64,
    n3: i64,
    worst_pointwise_ratio: f64,
    worst_pointwise_ratio_second: f64,
    averaged_value: f64,
    averaged_bound: f64,
    pointwise: bool,
    averaged: bool,
}

fn random_bounded_array(sites: &[[i64; 3]], c: f64, gamma: f64, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sites.len();
    ComplexMatrix::from_fn(n, n, |i, j| {
        let r = rng.random_range(0.0..1.0);
        let theta = rng.random_range(0.0..2.0 * PI);
        Complex64::from_polar(r * c * (-gamma * SiteNorm::Euclidean.distance(&sites[i], &sites[j])).exp(), theta)
    })
}

fn convolution_check(a: &ConvolutionArgs) -> Result<Outcome> {
    let sites = LatticeWindow::cube(a.l)?.sites();
    let norm = SiteNorm::Euclidean;
    let exact = ComplexMatrix::from_fn(sites.len(), sites.len(), |i, j| {
        Complex64::new(a.c * (-a.gamma * norm.distance(&sites[i], &sites[j])).exp(), 0.0)
    });
    let mut conv = vec![convolution_decay(&exact, &exact, a.c, a.gamma, &sites, 3, norm)?];
    for t in 0..a.trials {
        let x = random_bounded_array(&sites, a.c, a.gamma, a.seed.wrapping_add(2 * t as u64));
        let y = random_bounded_array(&sites, a.c, a.gamma, a.seed.wrapping_add(2 * t as u64 + 1));
        conv.push(convolution_decay(&x, &y, a.c, a.gamma, &sites, 3, norm)?);
    }

    let r = a.cell_radius as i64;
    let mut cells = Vec::new();
    for &e in &a.cell_e {
        let z = EnergyPoint::new(e, a.kappa)?;
        let mut targets = Vec::new();
        for i in -r..=r {
            for j in -r..=r {
                for k in -r..=r {
                    if (i, j, k) != (0, 0, 0) {
                        targets.push([i, j, k]);
                    }
                }
            }
        }
        let quad = QuadratureSpec::with_tolerance(1e-6);
        let rows = targets
            .par_iter()
            .map(|n| {
                let rep = free_green_cell_bounds(n, &[0, 0, 0], &z, a.samples, &quad)?;
                Ok(CellRow {
                    e,
                    n1: n[0],
                    n2: n[1],
                    n3: n[2],
                    worst_pointwise_ratio: rep.worst_pointwise_ratio,
                    worst_pointwise_ratio_second: rep.worst_pointwise_ratio_second,
                    averaged_value: rep.averaged_value,
                    averaged_bound: rep.averaged_bound,
                    pointwise: rep.pointwise,
                    averaged: rep.averaged,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        cells.extend(rows);
    }
    let conv_ratio = conv.iter().map(|c| c.max_ratio / c.c_tilde_derived).fold(0.0, f64::max);
    let pointwise = cells
        .iter()
        .map(|c| c.worst_pointwise_ratio.max(c.worst_pointwise_ratio_second))
        .fold(0.0, f64::max);
    let averaged = cells.iter().map(|c| c.averaged_value / c.averaged_bound).fold(0.0, f64::max);
    Ok(Outcome {
        assertions: vec![
            Assertion::with_pass("double_sum_derived", conv.iter().all(|c| c.pass), conv_ratio, 1.0),
            Assertion::with_pass("cell_pointwise", cells.iter().all(|c| c.pointwise), pointwise, 1.0),
            Assertion::with_pass("cell_averaged", cells.iter().all(|c| c.averaged), averaged, 1.0),
        ],
        report: serde_json::json!({ "convolution": conv }),
        csv: Some(csv_bytes(&cells)?),
        budget_exhausted: false,
    })
}
