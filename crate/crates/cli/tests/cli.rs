use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sticky-wage"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn params_check_reports_constants() {
    let o = run(&["params-check", path(&scenario("base.toml"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["command"], "params-check");
    assert!(v["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
    let r = &v["result"];
    assert!((r["kappa"][0].as_f64().unwrap() - 0.2).abs() < 1e-12);
    assert!(r["g_inf"].as_f64().unwrap() > 0.0);
}

#[test]
fn assumption_failures_exit_with_two() {
    for name in ["heavy_kernel.toml", "signed_minimum.toml"] {
        let cmd = if name == "heavy_kernel.toml" { "params-check" } else { "robust" };
        let o = run(&[cmd, path(&scenario(name))]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains("assumption violated"));
    }
}

#[test]
fn bad_input_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["params-check", path(&dir.path().join("missing.toml"))]).status.code(), Some(4));
    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "[market]\nr = \"high\"\n").unwrap();
    assert_eq!(run(&["params-check", path(&broken)]).status.code(), Some(4));
    let base = scenario("base.toml");
    assert_eq!(run(&["sweep", path(&base), "--parameter", "nope", "--from", "0", "--to", "1"]).status.code(), Some(4));
    // robust needs an uncertainty block
    assert_eq!(run(&["robust", path(&base)]).status.code(), Some(4));
}

#[test]
fn failed_check_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let strict = dir.path().join("strict.toml");
    let text = std::fs::read_to_string(scenario("base.toml")).unwrap();
    std::fs::write(&strict, text.replace("[numerics]", "[numerics]\ndoleans_tol = 1e-15")).unwrap();
    let o = run(&["verify", path(&strict), "--which", "gamma", "--n-paths", "10", "--horizon", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["result"][0]["check"], "gamma");
    assert_eq!(v["result"][0]["pass"], false);
}

#[test]
fn flags_override_the_file_and_land_in_the_config() {
    let o = run(&["params-check", path(&scenario("base.toml")), "--gamma", "0.5", "--h", "0.05", "--seed", "77", "--n-paths", "12"]);
    assert_eq!(o.status.code(), Some(0));
    let cfg = &json(&o)["config"];
    assert_eq!(cfg["market"]["gamma"], 0.5);
    assert_eq!(cfg["numerics"]["h"], 0.05);
    assert_eq!(cfg["numerics"]["seed"], 77);
    assert_eq!(cfg["numerics"]["n_paths"], 12);
}

#[test]
fn json_scenarios_load_like_toml() {
    let text = std::fs::read_to_string(scenario("base.toml")).unwrap();
    let value: toml::Value = toml::from_str(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("base.json");
    std::fs::write(&file, serde_json::to_string(&value).unwrap()).unwrap();
    let a = json(&run(&["params-check", path(&file)]));
    let b = json(&run(&["params-check", path(&scenario("base.toml"))]));
    assert_eq!(a["result"], b["result"]);
}

#[test]
fn simulate_writes_csv_summary_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["simulate", path(&scenario("base.toml")), "--n-paths", "40", "--horizon", "1", "--out", path(&out), "--svg"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("paths.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# sticky-wage "));
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(lines.next().unwrap(), "path,t,W,y,Gamma,c,B,theta1");
    assert!(lines.count() > 40);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["numerics"]["n_paths"], 40);
    for chart in ["gamma.svg", "consumption.svg"] {
        assert!(std::fs::read_to_string(out.join(chart)).unwrap().starts_with("<svg"));
    }
}

#[test]
fn sweep_prints_a_table() {
    let o = run(&["sweep", path(&scenario("base.toml")), "--parameter", "rho1", "--from", "-1", "--to", "1", "--steps", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("rho1"))
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
    assert_eq!(rows[2][3], 0.0);
}

#[test]
fn robust_reports_the_saddle() {
    let o = run(&["robust", path(&scenario("tube.toml")), "--n-paths", "100", "--horizon", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &json(&o)["result"];
    assert!(r["robust_value"].is_number());
    assert!(r["stress"].is_object() || r["stress"].is_array());
}

#[test]
fn version_flag_prints_the_build() {
    let o = run(&["--version"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
}
