use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dualcert::bounds::cohen_bound;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dualcert"));
    c.env_remove("DUALCERT_SEED");
    c
}

fn worker_script() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scripts/eval_worker.py")
        .to_string_lossy()
        .into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn result_json(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap()
}

/// CSV rows without the leading `#` banner.
fn csv_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

const CONSTANT_ONE: &str = r#"{
    "family": {"kind": "gaussian", "dimension": 2, "sigma": 1.0},
    "threat": {"norm": "l2", "radius": 0.5},
    "classifier": {"synthetic": {"kind": "constant", "label": 1}},
    "n1": 1000, "n2": 100000, "alpha": 0.002, "seed": 7
}"#;

#[test]
fn certify_constant_classifier() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CONSTANT_ONE);
    let out = dir.path().join("out");
    let o = run(&["certify", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(out.join("result.json")).unwrap();
    let v = result_json(&out);
    let c = &v["result"]["certificates"][0];
    assert_eq!(c["certified"], true);
    assert_eq!(v["engine_version"], dualcert::ENGINE_VERSION);
    assert_eq!(v["config"]["seed"], 7);
    assert_eq!(v["config"]["lambda_count"], 200);
    // all 1000 draws succeed: p0 = (α/2)^{1/1000}
    let p0 = c["p0_lower"].as_f64().unwrap();
    assert!((p0 - 0.001f64.powf(1e-3)).abs() < 1e-9, "{p0}");
    let bound = c["bound"].as_f64().unwrap();
    let oracle = cohen_bound(p0, 1.0, 0.5).unwrap().value;
    assert!(bound <= oracle && bound > oracle - 0.05, "{bound} vs {oracle}");
    let rows = csv_rows(&out.join("summary.csv"));
    assert_eq!(rows[0], "input_id,p0_lower,radius,bound,certified");
    assert!(rows[1].starts_with("x0,") && rows[1].ends_with(",true"));
    assert!(std::fs::read_to_string(out.join("summary.csv")).unwrap().starts_with("# dualcert "));
    assert_eq!(csv_rows(&out.join("trace.csv")).len(), 201);

    let o = run(&["certify", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(first, std::fs::read(out.join("result.json")).unwrap());
}

#[test]
fn closed_form_radius() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = run(&["radius", "--closed-form", "cohen", "--p0", "0.5", "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = result_json(&out);
    assert_eq!(v["result"]["radius"], 0.0);
    assert_eq!(v["result"]["certified"], false);
    let o = run(&["radius", "--closed-form", "teng", "--p0", "0.9", "--scale", "2", "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let r = result_json(&out)["result"]["radius"].as_f64().unwrap();
    assert!((r + 2.0 * 0.2f64.ln()).abs() < 1e-12);
    let o = run(&["radius", "--closed-form", "bilateral", "--p0", "0.9", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bisection_radius_with_input_file() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = write_config(dir.path(), "x.txt", "0 0\n0.5, 0.5\n");
    let cfg = write_config(
        dir.path(),
        "c.json",
        &format!(
            r#"{{"family": {{"kind": "gaussian", "dimension": 2, "sigma": 0.5}},
               "threat": {{"norm": "l2", "radius": 2.0}},
               "classifier": {{"synthetic": {{"kind": "ball_indicator", "norm": "l2", "center": [0, 0], "radius": 1.5}}}},
               "inputs_file": {:?}, "n1": 5000, "n2": 20000, "radius_iterations": 8}}"#,
            inputs.to_str().unwrap()
        ),
    );
    let out = dir.path().join("o");
    let o = run(&["radius", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = result_json(&out);
    let reps = v["result"]["reports"].as_array().unwrap();
    assert_eq!(reps.len(), 2);
    let (r0, r1) = (reps[0]["radius"].as_f64().unwrap(), reps[1]["radius"].as_f64().unwrap());
    // the off-center input sits closer to the decision boundary
    assert!(r0 > r1 && r1 > 0.0, "{r0} {r1}");
    assert!(r0 < 1.5);
    assert_eq!(csv_rows(&out.join("probes.csv")).len(), 1 + 16);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_k = write_config(
        dir.path(),
        "k.json",
        r#"{"family": {"kind": "l2_power_tail", "dimension": 3, "k": 2.5, "sigma": 1.0}}"#,
    );
    let o = run(&["certify", "-c", bad_k.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("k < d - 1"), "{msg}");

    let unknown = write_config(dir.path(), "u.json", r#"{"famliy": {}}"#);
    let o = run(&["certify", "-c", unknown.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));

    // missing classifier
    let cfg = write_config(
        dir.path(),
        "m.json",
        r#"{"family": {"kind": "gaussian", "dimension": 2, "sigma": 1.0}, "threat": {"norm": "l2", "radius": 0.5}}"#,
    );
    let o = run(&["certify", "-c", cfg.to_str().unwrap(), "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    // unsupported (family, threat) pair
    let cfg = write_config(
        dir.path(),
        "p.json",
        r#"{"family": {"kind": "laplacian", "dimension": 2, "b": 1.0}, "threat": {"norm": "l2", "radius": 0.5},
            "classifier": {"synthetic": {"kind": "constant", "label": 1}}, "n1": 10, "n2": 10}"#,
    );
    let o = run(&["certify", "-c", cfg.to_str().unwrap(), "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unsupported"));
}

#[test]
fn transport_and_sampler_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let script = worker_script();
    let cfg = write_config(
        dir.path(),
        "h.json",
        &format!(
            r#"{{"family": {{"kind": "gaussian", "dimension": 2, "sigma": 1.0}}, "threat": {{"norm": "l2", "radius": 0.5}},
               "classifier": {{"external": {{"command": ["python3", {script:?}, "--misbehave", "hang"], "timeout_ms": 300}}}},
               "n1": 100, "n2": 100}}"#
        ),
    );
    let o = run(&["certify", "-c", cfg.to_str().unwrap(), "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"family": {"kind": "mixed_norm", "dimension": 400, "k": 380, "sigma": 1.0}}"#,
    );
    let o = run(&["sample", "-c", cfg.to_str().unwrap(), "--n", "10", "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn external_worker_matches_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let script = worker_script();
    let base = r#""family": {"kind": "l2_power_tail", "dimension": 3, "k": 1.0, "sigma": 0.6},
                  "threat": {"norm": "l2", "radius": 0.3}, "n1": 4000, "n2": 20000, "seed": 5,
                  "inputs": [{"id": "a", "x": [0.1, 0.0, -0.2]}]"#;
    let ext = write_config(
        dir.path(),
        "e.json",
        &format!(r#"{{{base}, "classifier": {{"external": {{"command": ["python3", {script:?}, "--radius", "1.2"]}}}}}}"#),
    );
    let syn = write_config(
        dir.path(),
        "s.json",
        &format!(
            r#"{{{base}, "classifier": {{"synthetic": {{"kind": "ball_indicator", "norm": "l2", "center": [0, 0, 0], "radius": 1.2}}}}}}"#
        ),
    );
    let (oe, os) = (dir.path().join("e"), dir.path().join("s"));
    assert!(run(&["certify", "-c", ext.to_str().unwrap(), "-o", oe.to_str().unwrap()]).status.success());
    assert!(run(&["certify", "-c", syn.to_str().unwrap(), "-o", os.to_str().unwrap()]).status.success());
    assert_eq!(result_json(&oe)["result"], result_json(&os)["result"]);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"family": {"kind": "mixed_norm", "dimension": 3, "k": 1.5, "sigma": 0.8},
            "threat": {"norm": "linf", "radius": 0.1},
            "classifier": {"synthetic": {"kind": "halfspace", "w": [1, 1, 0], "c": -0.5}},
            "n1": 20000, "n2": 30000, "pilot_n1": 500, "pilot_n2": 2000}"#,
    );
    let mut docs = Vec::new();
    for w in ["1", "3"] {
        let out = dir.path().join(format!("w{w}"));
        let o = run(&["certify", "-c", cfg.to_str().unwrap(), "--workers", w, "-o", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        docs.push(result_json(&out)["result"].clone());
    }
    assert_eq!(docs[0], docs[1]);
    assert!(docs[0]["certificates"][0]["pilot"]["lambda_hat"].as_f64().unwrap() > 0.0);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"family": {"kind": "gaussian", "dimension": 2, "sigma": 1.0}}"#);
    let sample = |env: Option<&str>, flag: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut c = bin();
        c.args(["sample", "-c", cfg.to_str().unwrap(), "--n", "3", "-o", out.to_str().unwrap()]);
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        if let Some(e) = env {
            c.env("DUALCERT_SEED", e);
        }
        assert!(c.output().unwrap().status.success());
        let v = result_json(&out);
        (v["config"]["seed"].as_u64().unwrap(), csv_rows(&out.join("samples.csv")))
    };
    let (s0, a) = sample(None, None, "a");
    let (s1, b) = sample(Some("31"), None, "b");
    let (s2, c) = sample(Some("31"), Some("4"), "c");
    assert_eq!((s0, s1, s2), (0, 31, 4));
    assert_ne!(a, b);
    assert_ne!(b, c);
    let o = bin().args(["sample", "-c", cfg.to_str().unwrap()]).env("DUALCERT_SEED", "x").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn small_pareto_verify_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.json",
        r#"{"pareto": {"dim": 3, "ks": [0, 1], "scales": [0.2, 0.5, 1.0], "n": 4000}}"#,
    );
    let out = dir.path().join("p");
    let o = run(&["pareto", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&out.join("pareto.csv")).len(), 1 + 18);
    // two families against the first, at accuracy floors 0 and 0.5
    assert_eq!(csv_rows(&out.join("summary.csv")).len(), 1 + 4);
    assert_eq!(result_json(&out)["result"]["report"]["threat"]["norm"], "linf");

    let cfg = write_config(
        dir.path(),
        "v.json",
        r#"{"verify": {"experiments": ["oracle_chain", "moments", "coverage"], "n_mc": 100000,
                       "cp_replicates": 2000, "hoeffding_n": 2000, "hoeffding_replicates": 50}}"#,
    );
    let out = dir.path().join("v");
    let o = run(&["verify", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("summary.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows[1..].iter().all(|r| r.split(',').nth(1) == Some("true")), "{rows:?}");
    for f in ["oracle_chain.csv", "moments.csv", "coverage.csv"] {
        assert!(out.join(f).exists());
    }

    let cfg = write_config(dir.path(), "b.json", r#"{"bench": {"n": 5000, "repeats": 2}, "lambda_count": 20}"#);
    let out = dir.path().join("b");
    let o = run(&["bench", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(out.join("result.json")).unwrap();
    assert_eq!(csv_rows(&out.join("bench.csv")).len(), 1 + 8);
    assert!(run(&["bench", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]).status.success());
    assert_eq!(first, std::fs::read(out.join("result.json")).unwrap());
}
