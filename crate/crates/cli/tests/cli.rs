//! End-to-end tests of the `nv2d` binary: artifact layout, header
//! embedding, validation errors, golden verification, and byte-level
//! determinism across worker counts.

use std::fs;
use std::path::{Path, PathBuf};

use assert_cmd::Command;
use predicates::prelude::*;
use tempfile::TempDir;

fn nv2d() -> Command {
    Command::cargo_bin("nv2d").unwrap()
}

const CORR_CONFIG: &str = r#"
schema_version = 1

[system]
field_tesla = 0.18

[[system.nuclei]]
species = "13C"
position_nm = [0.35, 0.0, 0.8]

[experiment]
kind = "corr"
n_pulses = 32
sweep = { start = 2.5e-7, stop = 1.28e-4, n = 512 }

[output]
dir = "OUTDIR"
"#;

const COSY_CONFIG: &str = r#"
schema_version = 1

[system]
field_tesla = 0.18

[[system.nuclei]]
species = "13C"
position_nm = [0.35, 0.0, 0.8]

[[system.nuclei]]
species = "13C"
position_nm = [0.35, 0.0, 0.9544]

[experiment]
kind = "cosy2d"
n_pulses = 8
mixing_pulses = 8
sweep = { start = 4e-6, stop = 1e-4, n = 12 }

[processing]
threshold_rel = 0.05

[output]
dir = "OUTDIR"
"#;

fn write_config(dir: &Path, name: &str, template: &str, outdir: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, template.replace("OUTDIR", outdir)).unwrap();
    path
}

/// The single run directory under `base`.
fn run_dir(base: &Path) -> PathBuf {
    let mut entries: Vec<_> = fs::read_dir(base)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(entries.len(), 1, "expected exactly one run directory");
    entries.pop().unwrap()
}

#[test]
fn schema_prints_template() {
    nv2d()
        .arg("schema")
        .assert()
        .success()
        .stdout(predicate::str::contains("schema_version = 1"))
        .stdout(predicate::str::contains("[experiment]"));
}

#[test]
fn run_writes_artifacts_with_headers() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "corr.toml", CORR_CONFIG, "out");
    nv2d().arg("run").arg(&config).current_dir(tmp.path()).assert().success();
    let dir = run_dir(&tmp.path().join("out"));
    for name in ["config.toml", "system.toml", "signal.txt", "spectrum.txt", "peaks.txt",
                 "timing.txt", "report.json", "walltime.txt"] {
        assert!(dir.join(name).exists(), "missing {name}");
    }
    // every text artifact opens with the config hash and schema version
    let peaks = fs::read_to_string(dir.join("peaks.txt")).unwrap();
    let first = peaks.lines().next().unwrap();
    assert!(first.starts_with("# config_hash="), "header line: {first}");
    assert!(first.contains("schema_version=1"));
    let hash = first.split('=').nth(1).unwrap().split(' ').next().unwrap().to_string();
    for name in ["system.toml", "signal.txt", "spectrum.txt", "timing.txt", "walltime.txt"] {
        let text = fs::read_to_string(dir.join(name)).unwrap();
        assert!(
            text.starts_with(&format!("# config_hash={hash}")),
            "{name} missing the hash header"
        );
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config_hash"], serde_json::json!(hash));
    assert_eq!(report["schema_version"], serde_json::json!(1));
    // the two conditional nuclear lines of a single coupled nucleus
    assert_eq!(report["n_diagonal"], serde_json::json!(2));
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let bad = CORR_CONFIG.replace("[output]", "typo_key = 1\n[output]");
    let config = write_config(tmp.path(), "bad.toml", &bad, "out");
    nv2d()
        .arg("run")
        .arg(&config)
        .current_dir(tmp.path())
        .assert()
        .code(2)
        .stderr(predicate::str::contains("typo_key"));
}

#[test]
fn missing_experiment_field_names_the_key() {
    let tmp = TempDir::new().unwrap();
    let bad = COSY_CONFIG.replace("mixing_pulses = 8\n", "");
    let config = write_config(tmp.path(), "bad.toml", &bad, "out");
    nv2d()
        .arg("run")
        .arg(&config)
        .current_dir(tmp.path())
        .assert()
        .code(2)
        .stderr(predicate::str::contains("experiment.mixing_pulses"));
}

#[test]
fn wrong_schema_version_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let bad = CORR_CONFIG.replace("schema_version = 1", "schema_version = 99");
    let config = write_config(tmp.path(), "bad.toml", &bad, "out");
    nv2d()
        .arg("run")
        .arg(&config)
        .current_dir(tmp.path())
        .assert()
        .code(2)
        .stderr(predicate::str::contains("schema_version"));
}

#[test]
fn ddscan_reports_the_dip() {
    let tmp = TempDir::new().unwrap();
    let dd = CORR_CONFIG
        .replace("kind = \"corr\"", "kind = \"ddscan\"")
        .replace(
            "sweep = { start = 2.5e-7, stop = 1.28e-4, n = 512 }",
            "sweep = { start = 2.4e-7, stop = 2.8e-7, n = 80 }",
        );
    let config = write_config(tmp.path(), "dd.toml", &dd, "out");
    nv2d().arg("run").arg(&config).current_dir(tmp.path()).assert().success();
    let dir = run_dir(&tmp.path().join("out"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let dip = report["dip_spacing_s"].as_f64().unwrap();
    // tau = 1 / (2 (omega_L - A_par / 2)) for the 13C at 0.87 nm in 0.18 T;
    // at 16 pulses the dip sits within ~1% of the asymptotic position
    let expected = 2.5639e-7;
    assert!(
        (dip - expected).abs() < 0.03e-7,
        "dip at {dip:.4e}, expected near {expected:.4e}"
    );
}

#[test]
fn peak_tables_and_reports_are_identical_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let c1 = write_config(tmp.path(), "a.toml", COSY_CONFIG, "out1");
    let c2 = write_config(tmp.path(), "b.toml", COSY_CONFIG, "out2");
    nv2d()
        .arg("run")
        .arg(&c1)
        .current_dir(tmp.path())
        .env("NV2D_MAX_THREADS", "1")
        .assert()
        .success();
    nv2d()
        .arg("run")
        .arg(&c2)
        .current_dir(tmp.path())
        .env("NV2D_MAX_THREADS", "4")
        .assert()
        .success();
    let d1 = run_dir(&tmp.path().join("out1"));
    let d2 = run_dir(&tmp.path().join("out2"));
    for name in ["peaks.txt", "spectrum.txt", "signal.txt"] {
        let a = fs::read(d1.join(name)).unwrap();
        let b = fs::read(d2.join(name)).unwrap();
        // the config hash differs only through the output directory name;
        // compare everything after the header line
        let strip = |v: &[u8]| v.splitn(2, |&c| c == b'\n').nth(1).unwrap().to_vec();
        assert_eq!(strip(&a), strip(&b), "{name} differs across worker counts");
    }
    let strip_hash = |p: &Path| {
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        let mut v = v;
        v["config_hash"] = serde_json::json!("");
        v
    };
    assert_eq!(
        strip_hash(&d1.join("report.json")),
        strip_hash(&d2.join("report.json")),
        "report differs across worker counts"
    );
}

#[test]
fn bad_thread_env_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "corr.toml", CORR_CONFIG, "out");
    nv2d()
        .arg("run")
        .arg(&config)
        .current_dir(tmp.path())
        .env("NV2D_MAX_THREADS", "zero")
        .assert()
        .code(2)
        .stderr(predicate::str::contains("NV2D_MAX_THREADS"));
}

#[test]
fn geometry_run_writes_conformations() {
    let tmp = TempDir::new().unwrap();
    // four 13C vertices with all six dipolar strengths given explicitly;
    // strengths correspond to distances of a few angstroms
    let config_text = r#"
schema_version = 1

[system]
field_tesla = 0.18

[[system.nuclei]]
species = "13C"
position_nm = [0.35, 0.0, 0.8]

[[system.nuclei]]
species = "13C"
position_nm = [0.35, 0.0, 0.9544]

[[system.nuclei]]
species = "13C"
position_nm = [0.45, 0.1, 0.87]

[[system.nuclei]]
species = "13C"
position_nm = [0.25, 0.1, 0.87]

[experiment]
kind = "corr"
n_pulses = 32
sweep = { start = 2.5e-7, stop = 1.28e-4, n = 512 }

[geometry]
enabled = true
couplings = [
  { i = 0, j = 1, strength_hz = 3130.0, sigma_hz = 30.0 },
  { i = 0, j = 2, strength_hz = 2430.0, sigma_hz = 30.0 },
  { i = 0, j = 3, strength_hz = 2430.0, sigma_hz = 30.0 },
  { i = 1, j = 2, strength_hz = 2430.0, sigma_hz = 30.0 },
  { i = 1, j = 3, strength_hz = 2430.0, sigma_hz = 30.0 },
  { i = 2, j = 3, strength_hz = 1450.0, sigma_hz = 30.0 },
]

[output]
dir = "out"
"#;
    let config = tmp.path().join("geom.toml");
    fs::write(&config, config_text).unwrap();
    nv2d().arg("run").arg(&config).current_dir(tmp.path()).assert().success();
    let dir = run_dir(&tmp.path().join("out"));
    let xyz = fs::read_to_string(dir.join("conformations.xyz")).unwrap();
    assert!(xyz.starts_with("4\n"), "xyz frame should have 4 atoms");
    assert!(xyz.contains("config_hash="));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert!(report["geometry"]["n_conformations"].as_u64().unwrap() >= 1);
}

#[test]
fn verify_accepts_matching_golden_and_rejects_shifted_one() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "case.toml", CORR_CONFIG, "out");
    nv2d().arg("run").arg(&config).current_dir(tmp.path()).assert().success();
    let peaks = run_dir(&tmp.path().join("out")).join("peaks.txt");
    let golden = tmp.path().join("case.golden.peaks.txt");
    fs::copy(&peaks, &golden).unwrap();

    nv2d()
        .arg("verify")
        .arg(tmp.path())
        .current_dir(tmp.path())
        .assert()
        .success()
        .stdout(predicate::str::contains("case: PASS"));

    // inflate the first golden amplitude by 50%: must fail and name the peak
    let text = fs::read_to_string(&golden).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| !l.starts_with('#')).unwrap();
    let mut cols: Vec<String> = lines[row].split('\t').map(String::from).collect();
    let amp: f64 = cols[2].parse().unwrap();
    cols[2] = format!("{:.17e}", amp * 1.5);
    lines[row] = cols.join("\t");
    fs::write(&golden, lines.join("\n") + "\n").unwrap();

    nv2d()
        .arg("verify")
        .arg(tmp.path())
        .current_dir(tmp.path())
        .assert()
        .code(1)
        .stdout(predicate::str::contains("case: FAIL"))
        .stdout(predicate::str::contains("amplitude off"));
}

#[test]
fn bundled_configs_match_their_goldens() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../golden");
    nv2d()
        .arg("verify")
        .arg(&configs)
        .assert()
        .success()
        .stdout(predicate::str::contains("coupled_pair: PASS"))
        .stdout(predicate::str::contains("isolated_spins: PASS"));
}

#[test]
fn cross_peak_assertion_failure_is_nonzero() {
    let tmp = TempDir::new().unwrap();
    // an uncoupled pair cannot satisfy expect_cross_peaks = "present"
    let bad = COSY_CONFIG.replace(
        "[experiment]",
        "[[system.pair_couplings]]\ni = 0\nj = 1\nj_zz_hz = 0.0\n\n[experiment]\nexpect_cross_peaks = \"present\"",
    );
    let config = write_config(tmp.path(), "bad.toml", &bad, "out");
    nv2d()
        .arg("run")
        .arg(&config)
        .current_dir(tmp.path())
        .assert()
        .code(1)
        .stderr(predicate::str::contains("cross-peak check failed"));
}
