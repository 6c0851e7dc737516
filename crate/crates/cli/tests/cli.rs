use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use manakov_cli::commands::{run, Command};
use manakov_cli::config::{ModeRecord, PotentialSpec, RunConfig};
use manakov_core::floquet::{char_data, discriminant_centered};
use manakov_core::linalg::c;
use proptest::prelude::*;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&configs().join(name)).unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

/// Data rows of a written CSV as string cells (digest and header skipped).
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_sha256="));
    lines.next().unwrap();
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn verify_on_zero_is_trivial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load("zero.toml", dir.path());
    let out = run(&cfg, Command::Verify).unwrap();
    assert_eq!(out.exit_code(), 0);
    assert!(out.report.contains("trivial"));
    assert!(!out.report.contains("FAIL"));
    for r in rows(&dir.path().join("identities.csv")) {
        assert_eq!(r[7], "1");
    }
}

#[test]
fn spectrum_gaps_match_a_sign_scan() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("single_mode.toml", dir.path());
    cfg.n_range = "-1:3".into();
    let out = run(&cfg, Command::Spectrum).unwrap();
    assert_eq!(out.exit_code(), 0, "{}", out.report);
    let gaps: Vec<(f64, f64)> =
        rows(&dir.path().join("gaps.csv")).iter().map(|r| (f(&r[2]), f(&r[3]))).collect();
    assert!(gaps.iter().any(|g| g.1 > g.0), "no open gap");
    // Independent oracle: the sign of 𝔇 on a fine grid over the discs.
    let v = cfg.potential.resolve().unwrap().v;
    let (a, b) = (-std::f64::consts::PI - 0.6, 3.0 * std::f64::consts::PI + 0.6);
    let n = 1500;
    for i in 0..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        let d = discriminant_centered(&char_data(&v, c(x, 0.0)).unwrap()).re;
        let inside = gaps.iter().any(|g| g.0 < x && x < g.1);
        let near_edge = gaps.iter().any(|g| (x - g.0).abs() < 1e-6 || (x - g.1).abs() < 1e-6);
        if near_edge {
            continue;
        }
        assert_eq!(d < 0.0, inside, "x = {x}, D = {d}");
    }
}

#[test]
fn traces_table_compares_routes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load("single_mode.toml", dir.path());
    let out = run(&cfg, Command::Traces).unwrap();
    assert_eq!(out.exit_code(), 0);
    let t = rows(&dir.path().join("traces.csv"));
    let names: Vec<&str> = t.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["two_thirds_H", "gap_sum", "asymptotic_fit", "tilted_fit"]);
    // Gap sum and asymptotic fit agree within their combined error bars.
    let (gs, fit) = (&t[1], &t[2]);
    for m in 0..3 {
        let diff = (f(&gs[1 + m]) - f(&fit[1 + m])).abs();
        let bar = f(&gs[4 + m]) + f(&fit[4 + m]);
        assert!(diff <= bar, "Q{m}: {diff} > {bar}");
    }
    assert_eq!(rows(&dir.path().join("bounds.csv")).len(), 2);
}

#[test]
fn outputs_are_byte_identical_across_thread_counts() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut a = load("single_mode.toml", d1.path());
    a.n_range = "1:4".into();
    a.threads = 1;
    let mut b = a.clone();
    b.out = d2.path().to_path_buf();
    b.threads = 4;
    for cmd in [Command::Spectrum, Command::Scan, Command::Monodromy] {
        let fa = run(&a, cmd).unwrap().files;
        let fb = run(&b, cmd).unwrap().files;
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
    }
}

#[test]
fn every_output_carries_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load("zero.toml", dir.path());
    let digest = cfg.digest().unwrap();
    let out = run(&cfg, Command::Monodromy).unwrap();
    for p in &out.files {
        assert!(fs::read_to_string(p).unwrap().contains(&digest), "{}", p.display());
    }
}

#[test]
fn zs_check_passes_on_preset() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("zs.toml", dir.path());
    cfg.n_range = "-3:3".into();
    let out = run(&cfg, Command::ZsCheck).unwrap();
    assert_eq!(out.exit_code(), 0, "{}", out.report);
    // The scalar gap estimate is reported, never counted as a failure.
    assert!(out.report.contains("lower_slack"));
}

#[test]
fn shipped_potential_file_round_trips() {
    let p = configs().join("potentials/single_mode.toml");
    let text = fs::read_to_string(&p).unwrap();
    let spec = PotentialSpec::load(&p).unwrap();
    assert_eq!(spec.to_text().unwrap(), text);
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("copy.toml");
    spec.save(&q).unwrap();
    assert_eq!(fs::read_to_string(&q).unwrap(), text);
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_manakov");
    let dir = tempfile::tempdir().unwrap();
    let ok = Proc::new(exe)
        .args(["verify", "--config"])
        .arg(configs().join("zero.toml"))
        .arg("--out")
        .arg(dir.path())
        .args(["--n-range", "-2:2", "--threads", "2", "--tol-scale", "1.5"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("failures: 0"));
    let bad = Proc::new(exe)
        .args(["zs-check", "--config"])
        .arg(configs().join("zero.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let range = Proc::new(exe)
        .args(["verify", "--config"])
        .arg(configs().join("zero.toml"))
        .args(["--n-range", "3:1"])
        .output()
        .unwrap();
    assert_eq!(range.status.code(), Some(1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_spec_round_trips(
        modes in prop::collection::vec((-8i64..=8, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 0..6),
        k_max in prop::option::of(8u32..20),
    ) {
        let spec = PotentialSpec {
            k_max,
            modes: modes
                .into_iter()
                .map(|(k, a, b, cc, d)| ModeRecord { k, v1_re: a, v1_im: b, v2_re: cc, v2_im: d })
                .collect(),
            ..Default::default()
        };
        let text = spec.to_text().unwrap();
        let back = PotentialSpec::parse(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(back.to_text().unwrap(), text);
    }
}
