//! End-to-end acceptance runs through the `pointlab` command layer.
//!
//! Each criterion writes one `criterion N [PASS|FAIL] ...` line straight to
//! stdout (bypassing the test harness capture) before asserting.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use pointlab_cli::{run, RunManifest, EXIT_OK};
use tempfile::TempDir;

struct Run {
    code: i32,
    manifest: RunManifest,
    _dir: TempDir,
}

impl Run {
    fn assertion(&self, name: &str) -> &pointlab_cli::Assertion {
        self.manifest
            .assertions
            .iter()
            .find(|a| a.name == name)
            .unwrap_or_else(|| panic!("{} has no assertion {name}", self.manifest.cmd))
    }

    fn all_pass(&self) -> bool {
        self.code == EXIT_OK && self.manifest.assertions.iter().all(|a| a.pass)
    }

    fn summary(&self) -> String {
        self.manifest
            .assertions
            .iter()
            .map(|a| format!("{}={:.4e}{}", a.name, a.value, if a.pass { "" } else { "(!)" }))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn read_manifest(dir: &Path, cmd: &str) -> RunManifest {
    let text = std::fs::read_to_string(dir.join(format!("{cmd}.manifest.json"))).expect("manifest written");
    serde_json::from_str(&text).expect("manifest parses")
}

fn pointlab(args: &[&str]) -> Run {
    let dir = TempDir::new().expect("temp dir");
    let mut argv = vec!["pointlab".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--out".into());
    argv.push(dir.path().display().to_string());
    let code = run(argv);
    let manifest = read_manifest(dir.path(), args[0]);
    Run {
        code,
        manifest,
        _dir: dir,
    }
}

fn report(n: u32, title: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let tag = if pass { "PASS" } else { "FAIL" };
    writeln!(out, "criterion {n:>2} [{tag}] {title}: {detail}").expect("stdout");
}

fn gamma_batch() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| pointlab(&["gamma-check", "--batch", "50", "--seed", "1"]))
}

#[test]
fn criterion_01_gamma_dissipativity() {
    let r = gamma_batch();
    let a = r.assertion("dissipativity");
    let pass = a.pass && r.manifest.duration_s < 120.0;
    report(
        1,
        "Γ dissipativity over 50 configurations",
        pass,
        &format!("min λ_min/(c_num κ) = {:.4}, {:.1} s (< 120 s)", a.value, r.manifest.duration_s),
    );
    assert!(pass);
}

#[test]
fn criterion_02_inverse_bound() {
    let r = gamma_batch();
    let a = r.assertion("inverse_bound");
    report(
        2,
        "‖Γ⁻¹‖ ≤ 1/λ_min(−Im Γ) on the same configurations",
        a.pass,
        &format!("max ‖Γ⁻¹‖·λ_min = {:.6} (≤ 1 + 1e-10)", a.value),
    );
    assert!(a.pass);
}

#[test]
fn criterion_03_inverse_decay() {
    let r = pointlab(&["inverse-decay", "--systems", "20", "--synthetic", "100", "--L", "4"]);
    let pass = r.all_pass();
    report(3, "certified decay of Γ⁻¹ and synthetic inverses at μ*", pass, &r.summary());
    assert!(pass);
}

#[test]
fn criterion_04_combes_thomas_fit() {
    let r = pointlab(&["ct-fit", "--L", "4", "--kappa", "1"]);
    let pass = r.all_pass() && r.manifest.duration_s < 600.0;
    report(
        4,
        "Combes-Thomas fits at E = 1.5π², 2π² (r² ≥ 0.98, rate ≥ 0.8 min(τ, μ*))",
        pass,
        &format!("{}, {:.1} s (< 600 s)", r.summary(), r.manifest.duration_s),
    );
    assert!(pass);
}

#[test]
fn criterion_05_transport_identity() {
    let r = pointlab(&["transport-identity", "--n", "10", "--trials", "100", "--T", "0.5,5,50"]);
    let pass = r.all_pass();
    report(5, "time average vs resolvent side on 100 proxies × 3 T", pass, &r.summary());
    assert!(pass);
}

#[test]
fn criterion_06_projector_bounds() {
    let r = pointlab(&["projector-bounds", "--trials", "1000"]);
    let pass = r.all_pass();
    report(6, "projector tail bounds in 1000 trials", pass, &r.summary());
    assert!(pass);
}

#[test]
fn criterion_07_generalized_modes() {
    let r = pointlab(&["eigenmode-bounds"]);
    let pass = r.all_pass();
    report(7, "generalized-mode suite", pass, &r.summary());
    assert!(pass);
}

#[test]
fn criterion_08_double_sum_and_cell_bounds() {
    let r = pointlab(&["convolution-check", "--L", "4"]);
    let pass = r.all_pass();
    report(8, "double-sum bound and free cell bounds (L = 4)", pass, &r.summary());
    assert!(pass);
}

#[test]
fn criterion_09_delocalization() {
    let free = pointlab(&["deloc-lowerbound", "--free", "--q", "4", "--T", "2,4,8"]);
    let random = pointlab(&["deloc-lowerbound", "--seed", "7", "--q", "4", "--T", "2,4,8"]);
    let seconds = free.manifest.duration_s + random.manifest.duration_s;
    let pass = free.all_pass() && random.all_pass() && seconds <= 1800.0;
    report(
        9,
        "delocalization chain and moment growth (free, random)",
        pass,
        &format!("free: {}; random: {}; {seconds:.1} s (≤ 1800 s)", free.summary(), random.summary()),
    );
    assert!(pass);
}

fn strip_duration(text: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(text).expect("manifest json");
    v.as_object_mut().expect("object").remove("duration_s");
    v.to_string()
}

#[test]
fn criterion_10_determinism() {
    let runs: [&[&str]; 8] = [
        &["gamma-check", "--batch", "4", "--seed", "5"],
        &["inverse-decay", "--systems", "2", "--synthetic", "4", "--L", "2"],
        &["ct-fit", "--L", "2", "--min-distance", "1", "--max-distance", "3", "--order", "3"],
        &["eigenmode-bounds", "--L", "5,10", "--q", "4"],
        &["transport-identity", "--trials", "12"],
        &["projector-bounds", "--trials", "60"],
        &["deloc-lowerbound", "--free", "--T", "2,4", "--energy-nodes", "2", "--cutoffs", "2"],
        &["convolution-check", "--L", "2", "--trials", "1", "--cell-radius", "1"],
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for args in runs {
        let cmd = args[0];
        let first = TempDir::new().expect("temp dir");
        let mut argv: Vec<String> = ["pointlab"].iter().chain(args).map(|s| s.to_string()).collect();
        argv.extend(["--workers", "1", "--out"].map(String::from));
        argv.push(first.path().display().to_string());
        run(argv);
        // Re-run from the manifest alone with a different worker count.
        let second = TempDir::new().expect("temp dir");
        let manifest_path = first.path().join(format!("{cmd}.manifest.json"));
        let code = run([
            "pointlab".to_string(),
            cmd.to_string(),
            "--config".into(),
            manifest_path.display().to_string(),
            "--workers".into(),
            "8".into(),
            "--out".into(),
            second.path().display().to_string(),
        ]);
        assert!(code == 0 || code == 2, "{cmd} re-run failed with exit code {code}");
        let m = read_manifest(first.path(), cmd);
        for name in m.files.iter().cloned().chain([format!("{cmd}.manifest.json")]) {
            let a = std::fs::read_to_string(first.path().join(&name)).expect("first output");
            let b = std::fs::read_to_string(second.path().join(&name)).expect("second output");
            let same = if name.ends_with(".manifest.json") {
                strip_duration(&a) == strip_duration(&b)
            } else {
                a == b
            };
            files += 1;
            if !same {
                mismatches.push(name);
            }
        }
    }
    let pass = mismatches.is_empty();
    report(
        10,
        "manifest re-runs byte-identical across 1 and 8 workers",
        pass,
        &format!("{files} files compared, mismatches: {mismatches:?}"),
    );
    assert!(pass);
}
