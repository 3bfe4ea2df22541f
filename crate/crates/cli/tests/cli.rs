use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gmspp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmspp")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn spp(dir: &Path, name: &str, width: usize, items: &[(usize, usize)]) -> String {
    let mut text = format!("{}\n{}\n", items.len(), width);
    for (k, (w, h)) in items.iter().enumerate() {
        text += &format!("{} {} {}\n", k + 1, w, h);
    }
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn generated(dir: &Path, items: &[(usize, usize)], width: usize, m: &str, scheme: &str) -> Vec<String> {
    let input = spp(dir, "tiny.txt", width, items);
    let out = dir.join("inst");
    let o = gmspp(&["generate", &input, "--out", out.to_str().unwrap(), "--m", m, "--schemes", scheme]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&gmspp(&["--help"])), 0);
    assert_eq!(code(&gmspp(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&gmspp(&[])), 1);
    assert_eq!(code(&gmspp(&["solve"])), 1);
    assert_eq!(code(&gmspp(&["solve", "x.json", "--method", "nope"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let files = generated(dir.path(), &[(2, 1)], 4, "2", "prop");
    assert_eq!(code(&gmspp(&["solve", &files[0], "--time-limit", "0"])), 1);
}

#[test]
fn missing_file_exits_two() {
    assert_eq!(code(&gmspp(&["solve", "/nonexistent/instance.json"])), 2);
}

#[test]
fn oracle_guard_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let files = generated(dir.path(), &[(1, 1); 8], 5, "2", "prop");
    assert_eq!(code(&gmspp(&["solve", &files[0], "--method", "oracle"])), 3);
}

#[test]
fn bendm_matches_oracle_and_writes_solution() {
    let dir = tempfile::tempdir().unwrap();
    let files = generated(dir.path(), &[(3, 2), (3, 2), (2, 3)], 6, "2,3", "prop,disecon");
    assert_eq!(files.len(), 4);
    for f in &files {
        let oracle = gmspp(&["solve", f, "--method", "oracle"]);
        assert_eq!(code(&oracle), 0);
        let sol = dir.path().join("sol.json");
        let bendm = gmspp(&["solve", f, "--method", "bendm", "--solution", sol.to_str().unwrap()]);
        assert_eq!(code(&bendm), 0, "{}", String::from_utf8_lossy(&bendm.stderr));
        let (a, b) = (stdout_json(&oracle), stdout_json(&bendm));
        assert_eq!(a["objective"], b["objective"], "{f}");
        let text = fs::read_to_string(&sol).unwrap();
        assert!(text.ends_with('\n'));
        let s: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(s["objective"], b["objective"]);
    }
}

#[test]
fn bench_writes_rows_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path(), &[(3, 2), (2, 2), (4, 1)], 5, "2", "prop,econ");
    let csv = dir.path().join("out.csv");
    let o = gmspp(&[
        "bench",
        dir.path().join("inst").to_str().unwrap(),
        "--methods",
        "bigm,bendm",
        "--out",
        csv.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("instance,"));
    // Both methods agree per instance.
    let obj = |r: &str| r.split(',').nth(4).unwrap().to_string();
    assert_eq!(obj(rows[1]), obj(rows[2]));
    assert_eq!(obj(rows[3]), obj(rows[4]));
    assert!(dir.path().join("out.cuts.csv").exists());

    let plots = dir.path().join("plots");
    let p = gmspp(&["plot", csv.to_str().unwrap(), "--out-dir", plots.to_str().unwrap()]);
    assert_eq!(code(&p), 0);
    for f in ["obj.svg", "lb.svg", "gap.svg"] {
        assert!(fs::read_to_string(plots.join(f)).unwrap().starts_with("<svg"));
    }
}

#[test]
fn ycheck_reports_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pl.json");
    let placement = r#"{"W":4,"H":3,"items":[{"j":0,"p":0,"w":3,"h":2},{"j":1,"p":1,"w":3,"h":1}]}"#;
    fs::write(&p, placement).unwrap();
    let o = gmspp(&["ycheck", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["verdict"], "feasible");
    assert_eq!(v["witness"].as_array().unwrap().len(), 2);

    fs::write(&p, placement.replace("\"H\":3", "\"H\":2")).unwrap();
    for extra in [&[][..], &["--oracle"][..], &["--prune-mask", "0", "--no-preprocessing"][..]] {
        let mut args = vec!["ycheck", p.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = gmspp(&args);
        assert_eq!(code(&o), 0);
        assert_eq!(stdout_json(&o)["verdict"], "infeasible");
    }
}

#[test]
fn export_and_lpbound() {
    let dir = tempfile::tempdir().unwrap();
    let files = generated(dir.path(), &[(3, 2), (2, 3)], 5, "2", "prop");
    for f in ["bigm", "bigm-le", "master"] {
        let o = gmspp(&["export", &files[0], "--formulation", f]);
        assert_eq!(code(&o), 0);
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(text.starts_with("NAME") && text.trim_end().ends_with("ENDATA"), "{f}");
    }
    let o = gmspp(&["lpbound", &files[0]]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert!(v["lp_pc"].is_string());
    assert!(v["lp_bigm"].is_number() || v["lp_bigm"].is_string());
}
