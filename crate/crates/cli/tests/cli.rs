use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ajb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ajb"))
        .current_dir(dir)
        .env("AJB_THREADS", "2")
        .args(args)
        .output()
        .expect("run ajb")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ajb(dir, args);
    assert!(
        out.status.success(),
        "ajb {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_split(dir: &Path) {
    ok(
        dir,
        &[
            "synth", "--base", "600", "--queries", "10", "--train", "400", "--ambient", "16", "--intrinsic", "3",
            "--features", "6", "--seed", "2", "--out-dir", "d",
        ],
    );
}

fn train_args<'a>(out: &'a str, method: &'a str) -> Vec<&'a str> {
    vec![
        "train", "--input", "d/train.fvecs", "--bits", "6", "--epochs", "1", "--batch", "200", "--seed", "5",
        "--method", method, "--out", out,
    ]
}

#[test]
fn training_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_split(d);
    ok(d, &train_args("a.ajb", "auto-jacobin"));
    ok(d, &train_args("b.ajb", "auto-jacobin"));
    assert_eq!(std::fs::read(d.join("a.ajb")).unwrap(), std::fs::read(d.join("b.ajb")).unwrap());
    assert_eq!(
        std::fs::read(d.join("a.ajb.trace.csv")).unwrap(),
        std::fs::read(d.join("b.ajb.trace.csv")).unwrap()
    );
    let trace = std::fs::read_to_string(d.join("a.ajb.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("a.ajb.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["flags"]["bits"], 6);
}

#[test]
fn lsh_skips_training() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_split(d);
    ok(d, &train_args("lsh.ajb", "lsh"));
    let trace = std::fs::read_to_string(d.join("lsh.ajb.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1);
    ok(d, &["encode", "--model", "lsh.ajb", "--input", "d/queries.fvecs", "--out", "q.ajbc"]);
    // magic + bits + count + one byte per 6-bit code
    assert_eq!(std::fs::metadata(d.join("q.ajbc")).unwrap().len(), 4 + 4 + 8 + 10);
}

#[test]
fn self_retrieval_reaches_full_recall() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_split(d);
    ok(d, &train_args("m.ajb", "autobin"));
    let table = ok(
        d,
        &[
            "eval", "--model", "m.ajb", "--base", "d/train.fvecs", "--queries", "d/train.fvecs", "--k", "1,5",
            "--max-retrieve", "400", "--out", "r/self",
        ],
    );
    assert!(table.contains("m-Recall"));
    for k in [1, 5] {
        let text = std::fs::read_to_string(d.join(format!("r/self.k{k}.csv"))).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 402);
        assert_eq!(lines[400], "400,1");
    }
    let cached: Vec<_> = std::fs::read_dir(d.join("d"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".k5.ajbg"))
        .collect();
    assert_eq!(cached.len(), 1);
    // second run reads the cache and gives the same numbers
    let again = ok(
        d,
        &[
            "eval", "--model", "m.ajb", "--base", "d/train.fvecs", "--queries", "d/train.fvecs", "--k", "1,5",
            "--max-retrieve", "400", "--out", "r/self2",
        ],
    );
    assert_eq!(table, again);
}

#[test]
fn eval_rejects_oversized_budget() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_split(d);
    ok(d, &train_args("m.ajb", "lsh"));
    let out = ajb(
        d,
        &["eval", "--model", "m.ajb", "--base", "d/base.fvecs", "--queries", "d/queries.fvecs", "--out", "r/x"],
    );
    assert!(!out.status.success());
    assert!(!d.join("r/x.summary.csv").exists());
}

#[test]
fn two_methods_plot_together() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_split(d);
    for m in ["lsh", "auto-jacobin"] {
        ok(d, &train_args(&format!("{m}.ajb"), m));
        ok(
            d,
            &[
                "eval", "--model", &format!("{m}.ajb"), "--base", "d/base.fvecs", "--queries", "d/queries.fvecs",
                "--k", "10", "--max-retrieve", "300", "--out", &format!("r/{m}"),
            ],
        );
    }
    ok(d, &["plot", "r/lsh.k10.csv", "r/auto-jacobin.k10.csv", "--out", "cmp.svg"]);
    ok(d, &["plot", "r/lsh.k10.csv", "r/auto-jacobin.k10.csv", "--out", "cmp2.svg"]);
    let svg = std::fs::read_to_string(d.join("cmp.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains(">lsh.k10<") && svg.contains(">auto-jacobin.k10<"));
    assert_eq!(svg, std::fs::read_to_string(d.join("cmp2.svg")).unwrap());
    assert!(d.join("cmp.svg.manifest.json").exists());
}

#[test]
fn plot_two_point_series() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("s.csv"), "i,recall\n1,0.25\n2,0.75\n").unwrap();
    ok(d, &["plot", "s.csv", "--out", "s.svg"]);
    let svg = std::fs::read_to_string(d.join("s.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    let start = svg.find("points=\"").unwrap() + 8;
    let pts = &svg[start..start + svg[start..].find('"').unwrap()];
    assert_eq!(pts.split(' ').count(), 2);
}

#[test]
fn plot_rejects_empty_csv() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("empty.csv"), "").unwrap();
    std::fs::write(d.join("header.csv"), "i,recall\n").unwrap();
    for f in ["empty.csv", "header.csv"] {
        let out = ajb(d, &["plot", f, "--out", "bad.svg"]);
        assert!(!out.status.success());
        assert!(!d.join("bad.svg").exists());
    }
}

#[test]
fn gradcheck_exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let text = ok(d, &["gradcheck"]);
    assert!(text.contains("PASS"));
    assert!(text.lines().any(|l| l.starts_with("jacobian")));
    let text = ok(d, &["gradcheck", "--method", "cautobin", "--out", "g.txt"]);
    assert!(text.lines().any(|l| l.starts_with("contractive")));
    assert!(d.join("g.txt.manifest.json").exists());
    let out = ajb(d, &["gradcheck", "--inject-fault", "1e-3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    assert!(!ajb(d, &["gradcheck", "--method", "lsh"]).status.success());
}

#[test]
fn toy_writes_summary() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["toy", "--seed", "1", "--out-dir", "t"]);
    let summary = std::fs::read_to_string(d.join("t/summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "stage,distinct_codes,distinct_codes_no_bias,mean_abs_y");
    assert!(lines[1].starts_with("init,") && lines[2].starts_with("trained,"));
    assert_eq!(std::fs::read_to_string(d.join("t/hidden.csv")).unwrap().lines().count(), 1001);
    assert!(d.join("t/toy.manifest.json").exists());
}

#[test]
fn config_file_defaults_and_overrides() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_split(d);
    std::fs::write(d.join("run.cfg"), "# shared\nbits=4\nepochs=1\nbatch=400\nmethod=autobin\nseed=9\n").unwrap();
    ok(d, &["train", "--config", "run.cfg", "--input", "d/train.fvecs", "--out", "c.ajb", "--bits", "5"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("c.ajb.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["flags"]["bits"], 5);
    assert_eq!(manifest["flags"]["batch"], 400);
    assert_eq!(manifest["flags"]["method"], "autobin");
    assert_eq!(manifest["config"], "run.cfg");
}

#[test]
fn convert_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    small_split(d);
    ok(d, &["convert", "--input", "d/queries.fvecs", "--output", "q.txt"]);
    ok(d, &["convert", "--input", "q.txt", "--output", "q.fvecs"]);
    assert_eq!(std::fs::read(d.join("d/queries.fvecs")).unwrap(), std::fs::read(d.join("q.fvecs")).unwrap());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = ajb(d, &["train", "--input", "missing.fvecs", "--bits", "4", "--out", "m.ajb"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.fvecs"));
    assert!(!d.join("m.ajb").exists());
}
