use std::path::Path;
use std::process::Command;

fn lfrb(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lfrb")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let o = lfrb(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn tiny_system(dir: &Path) -> String {
    let sys = dir.join("sys");
    ok(&["gen", "--shape", "6,6,6", "--shells", "1,1", "--electrodes", "6", "--sources", "8", "--out", sys.to_str().unwrap()]);
    sys.to_str().unwrap().to_string()
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(lfrb(&["nonsense"]).status.code(), Some(2));
    assert_eq!(lfrb(&["select", "--out", out]).status.code(), Some(2));
    assert_eq!(lfrb(&["select", "--system", "/nonexistent", "--out", out]).status.code(), Some(4));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "eps_abs = \"x\"\n").unwrap();
    assert_eq!(lfrb(&["select", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));
    let sys = tiny_system(dir.path());
    assert_eq!(lfrb(&["exact", "--system", &sys, "--sigma", "1,0,1", "--out", out]).status.code(), Some(2));
    assert_eq!(lfrb(&["exact", "--system", &sys, "--sigma", "1,1e-300,1", "--out", out]).status.code(), Some(3));
}

#[test]
fn snapshot_rerun_reproduces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let sys = tiny_system(dir.path());
    let a = dir.path().join("a");
    ok(&["select", "--system", &sys, "--max-supports", "6", "--out", a.to_str().unwrap()]);
    let b = dir.path().join("b");
    ok(&["select", "--config", a.join("run.toml").to_str().unwrap(), "--jobs", "2", "--out", b.to_str().unwrap()]);
    for f in ["basis.toml", "trace.csv", "select.json", "gram_hi.lfrb", "run.toml"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(b.join("timing.json")).unwrap()).unwrap();
    assert_eq!(t["jobs"], 2);
}

#[test]
fn snapshot_of_another_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sys = tiny_system(dir.path());
    let snap = Path::new(&sys).join("run.toml");
    let o = lfrb(&["select", "--config", snap.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimate_recovers_the_simulated_point() {
    let dir = tempfile::tempdir().unwrap();
    let sys = tiny_system(dir.path());
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    ok(&["simulate", "--system", &sys, "--sigma", "1.25,0.0031622776601683794,1", "--source", "2", "--out", &p("sim")]);
    ok(&["estimate", "--system", &sys, "--data", &(p("sim") + "/data.lfrb"), "--axis", "0.5:2:7:linear",
        "--axis", "1e-4:1e-1:7:log", "--axis", "1:1:1:linear", "--out", &p("est")]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("est") + "/estimate.json").unwrap()).unwrap();
    assert_eq!(v["argmin_index"], 3 + 7 * 3);
    assert!(std::fs::read_to_string(p("est") + "/map.csv").unwrap().lines().count() == 50);
}
