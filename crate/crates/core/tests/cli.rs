use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manifold-walk"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn walk_writes_one_row_per_recorded_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["walk", "--manifold", "torus", "--eps", "0.2", "--steps", "1000", "--record-every", "10", "--out", "t.csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1000 / 10 + 1 + 1);
    assert_eq!(lines[0], "i,t,chart,c1,c2,x1,x2,x3");
    let last: Vec<&str> = lines.last().unwrap().split(',').collect();
    assert_eq!(last[0], "1000");
    assert_eq!(last[1].parse::<f64>().unwrap(), 0.2 * 0.2 * 1000.0);

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("t.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "walk");
    assert_eq!(meta["config"]["epsilon"], 0.2);
    assert_eq!(meta["result"]["restarts"].as_array().map(Vec::len), Some(0));
}

#[test]
fn genus_two_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("g2.conf"),
        "# genus-two surface\n\
         manifold = implicit {\n  dim_ambient = 3,\n  f = [\"(x^2 (1 - x^2) - y^2)^2 + z^2 - 0.01\"]\n}\n\
         retraction = piret\neps = 0.1\nsteps = 100000\n",
    )
    .unwrap();
    // a flag overrides the file
    let o = run(dir.path(), &["walk", "--config", "g2.conf", "--steps", "2000", "--out", "g2.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("g2.csv")).unwrap();
    assert_eq!(text.lines().count(), 2002);
    for line in text.lines().skip(1) {
        let f: Vec<f64> = line.split(',').skip(5).map(|s| s.parse().unwrap()).collect();
        let (x, y, z) = (f[0], f[1], f[2]);
        let r = ((x * x * (1.0 - x * x) - y * y).powi(2) + z * z - 0.01).abs();
        assert!(r < 1e-3, "{line}");
    }
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["walk", "--manifold", "sphere", "--eps", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epsilon must be positive"), "{}", stderr(&o));

    for args in [
        &["frobnicate"][..],
        &["walk", "--manifold", "klein-bottle"],
        &["walk", "--config", "missing.conf"],
        &["walk", "--manifold", "sphere", "--retraction", "sideways"],
        &["walk", "--manifold", "genus2", "--retraction", "exact"],
    ] {
        let o = run(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn validate_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["validate", "order", "--manifold", "sphere", "--trials", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("order.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    let slope = report["statistic"].as_f64().unwrap();
    assert!((slope - 3.0).abs() < 0.3, "{slope}");
}

#[test]
fn covertime_prints_the_step_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["covertime", "--manifold", "sphere:dim=3", "--size", "1", "--delta", "0.1", "--eps", "0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).trim().ends_with(": 1100 steps"));
}

#[test]
fn reruns_are_byte_identical() {
    let args = ["ensemble", "--manifold", "ellipsoid", "--walkers", "20", "--steps", "30", "--seed", "9", "--out", "e.csv"];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(a.path(), &args).status.success());
    assert!(run(b.path(), &args).status.success());
    for name in ["e.csv", "e.csv.meta.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn list_manifolds_names_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["list-manifolds"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["sphere", "torus", "genus2", "flat-torus"] {
        assert!(text.contains(name), "{text}");
    }
}
