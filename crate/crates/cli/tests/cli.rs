use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mstruct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mstruct"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn diag_map(label: &str, diag: &[f64]) -> String {
    let d = diag.len();
    let mut entries = Vec::new();
    for i in 0..d {
        for j in 0..d {
            let v = if i == j { diag[i] } else { 0.0 };
            entries.push(format!("[{v},0]"));
        }
    }
    format!(
        r#"{{"schema":"spacemap/v1","domain":"{label}","codomain":"{label}","rows":{d},"cols":{d},"matrix":[{}]}}"#,
        entries.join(",")
    )
}

#[test]
fn space_build_and_show_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c2.json");
    let o = mstruct(&["space", "build", "--standard", "column:2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = mstruct(&["space", "show", "--space", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["result"]["p"], 2);
    assert_eq!(v["result"]["q"], 1);
    assert_eq!(v["result"]["d"], 2);
    assert_eq!(v["schema"], "report/v1");
    assert!(v["config"]["seed"].is_u64());
}

#[test]
fn classify_rejects_summand_of_summand_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.json");
    assert_eq!(code(&mstruct(&["space", "build", "--standard", "wedge", "--out", x.to_str().unwrap()])), 0);
    let e = write(dir.path(), "e.json", &diag_map("X_wedge", &[1.0, 0.0, 0.0]));
    let o = mstruct(&["proj", "classify", "--space", x.to_str().unwrap(), "--map", &e, "--hint", "[1,1,2]"]);
    assert_eq!(code(&o), 1);
    let v = stdout_json(&o);
    assert_eq!(v["result"]["left_m"], "no");
    let h = &v["result"]["hints"][0];
    assert!((h["norm"].as_f64().unwrap() - 5f64.sqrt()).abs() < 1e-8);
    assert!((h["image_norm"].as_f64().unwrap() - 4.5f64.sqrt()).abs() < 1e-8);

    let p = write(dir.path(), "p.json", &diag_map("X_wedge", &[1.0, 1.0, 0.0]));
    let o = mstruct(&["proj", "classify", "--space", x.to_str().unwrap(), "--map", &p]);
    assert_eq!(code(&o), 0);
}

#[test]
fn schema_errors_carry_a_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"schema":"opspace/v1","label":"B","p":2,"q":1,"basis":[[[1,0],[0,"x"]]],"shilov_flag":true}"#,
    );
    let o = mstruct(&["space", "show", "--space", &bad]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/basis/0/1/1"), "{err}");

    let o = mstruct(&["--set", "no_such_key=1", "paperlab", "list"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no_such_key"));
}

#[test]
fn unknown_flags_are_rejected() {
    let o = mstruct(&["paperlab", "list", "--frobnicate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn paperlab_run_passes_and_is_deterministic() {
    let a = mstruct(&["paperlab", "run", "EX-IVB4"]);
    assert_eq!(code(&a), 0);
    let b = mstruct(&["paperlab", "run", "EX-IVB4"]);
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert_eq!(v["passed"], 1);
    assert!(v["cases"][0]["assertions"][0]["margin"].is_number());

    let o = mstruct(&["paperlab", "run", "NOPE"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_and_seed_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.txt", "# quick\nmultistarts = 4\nlevel_cap = 3\n");
    let o = mstruct(&["--config", &cfg, "--seed", "7", "space", "show", "--standard", "diag:2"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["config"]["multistarts"], 4);
    assert_eq!(v["config"]["level_cap"], 3);
    assert_eq!(v["config"]["seed"], 7);
}

#[test]
fn report_render_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("r.json");
    let o = mstruct(&["paperlab", "run", "CLASS-2DIM", "--out", r.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = mstruct(&["report", "render", "--file", r.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("PASS CLASS-2DIM"), "{text}");
}

#[test]
fn norm_eval_and_cbnorm_transpose() {
    let o = mstruct(&["norm", "eval", "--standard", "column:2", "--coords", "[3,4]"]);
    assert_eq!(code(&o), 0);
    assert!((stdout_json(&o)["result"]["norm"].as_f64().unwrap() - 5.0).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let mut entries = vec!["[0,0]"; 16];
    for (r, cc) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        entries[r * 4 + cc] = "[1,0]";
    }
    let t = write(
        dir.path(),
        "t.json",
        &format!(
            r#"{{"schema":"spacemap/v1","domain":"M_2x2","codomain":"M_2x2","rows":4,"cols":4,"matrix":[{}]}}"#,
            entries.join(",")
        ),
    );
    let o = mstruct(&["cbnorm", "--standard", "full:2x2", "--map", &t]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    let lb = v["result"]["lower"].as_f64().unwrap();
    let ub = v["result"]["upper"]["value"].as_f64().unwrap();
    assert!(lb > 2.0 - 1e-4 && ub < 2.0 + 1e-4, "{lb} {ub}");
}

#[test]
fn column_detect_on_c2() {
    let o = mstruct(&["proj", "column-detect", "--standard", "column:2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["result"]["n"], 2);
}
