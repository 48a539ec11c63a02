use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn toruslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toruslab"))
        .args(args)
        .env_remove("TORUSLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn config(dir: &Path, eps: &str, d: &str) -> String {
    let path = dir.join(format!("cfg_{}_{d}.json", eps.replace('/', "_")));
    let path = path.to_str().unwrap().to_string();
    let o = toruslab(&["mk-config", "--eps", eps, "--d", d, "--out", &path]);
    assert_eq!(code(&o), 0);
    path
}

fn close(v: &Value, want: f64, tol: f64) -> bool {
    (v.as_f64().unwrap() - want).abs() <= tol
}

#[test]
fn mk_config_examples() {
    let v = json(&toruslab(&["mk-config", "--eps", "1/2", "--d", "2"]));
    assert_eq!(v["m"], 2);
    assert_eq!(v["exponents"], serde_json::json!([1, 1]));
    let v = json(&toruslab(&["mk-config", "--eps", "1/4", "--d", "3"]));
    assert_eq!(v["m"], 5);
    assert_eq!(v["exponents"], serde_json::json!([2, 2, 1]));
}

#[test]
fn bad_inputs_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&toruslab(&["mk-config", "--eps", "3/4", "--d", "2"])), 2);
    assert_eq!(code(&toruslab(&["mk-config", "--eps", "1/2", "--d", "0"])), 2);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"eps\": \"1/2\", \"d\":").unwrap();
    let bad = bad.to_str().unwrap();
    assert_eq!(code(&toruslab(&["analyze", bad, "--p", "2"])), 2);
    let cfg = config(dir.path(), "1/2", "2");
    assert_eq!(code(&toruslab(&["analyze", &cfg, "--p", "1"])), 2);
    assert_eq!(code(&toruslab(&["endpoint", &cfg, "--lambda", "-1"])), 2);
    assert_eq!(code(&toruslab(&["verify", "--ceilings", bad])), 2);
    assert_eq!(code(&toruslab(&["family", "--rule", "sideways", "--p0", "2", "--jmax", "10"])), 2);
}

#[test]
fn analyze_reference_point() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "1/2", "2");
    let v = json(&toruslab(&["analyze", &cfg, "--p", "2"]));
    assert_eq!(v["schema"], "v1");
    assert_eq!(v["regime"], "middle");
    assert!(close(&v["B"], 1.923593, 1e-6));
    assert!(close(&v["witness_ratios"]["center"], 0.661438, 1e-6));
    assert!(close(&v["witness_ratios"]["single"], 1.0, 1e-12));
    let lower = v["lower"].as_f64().unwrap();
    let upper = v["upper"].as_f64().unwrap();
    assert!(lower >= 1.0 && lower <= upper);

    let exact = json(&toruslab(&["analyze", &cfg, "--p", "2", "--exact"]));
    assert!(close(&exact["upper"], upper, 1e-9 * upper));

    let searched = json(&toruslab(&["analyze", &cfg, "--p", "2", "--search", "200", "--seed", "3"]));
    let again = json(&toruslab(&["analyze", &cfg, "--p", "2", "--search", "200", "--seed", "3"]));
    assert_eq!(searched, again);
}

#[test]
fn endpoint_and_phi() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "1/2", "2");
    let v = json(&toruslab(&["endpoint", &cfg, "--lambda", "0.5"]));
    let e = &v["endpoint"];
    assert!(close(&e["c"], 0.343153, 1e-6));
    let (m, b, inv) = (e["expmoment"].as_f64().unwrap(), e["exp_bound"].as_f64().unwrap(), e["inv_eps"].as_f64().unwrap());
    assert!(m <= b && b <= inv);

    let v = json(&toruslab(&["phi", "--eps", "1/4", "--d", "4", "--x", "0.1,1,2"]));
    let vals = v["values"].as_array().unwrap();
    assert_eq!(vals.len(), 3);
    assert_eq!(vals[0]["phi"], 0.0);
    assert!(vals[1]["phi"].as_f64().unwrap() < vals[2]["phi"].as_f64().unwrap());
}

#[test]
fn family_flags() {
    let v = json(&toruslab(&["family", "--rule", "closed", "--p0", "2", "--jmax", "1000", "--p", "1.5,2"]));
    let per_p = v["report"]["per_p"].as_array().unwrap();
    let by_p = |p: f64| per_p.iter().find(|r| r["p"].as_f64() == Some(p)).unwrap();
    assert_eq!(by_p(1.5)["a_p"]["divergent"], true);
    assert_eq!(by_p(2.0)["a_p"]["divergent"], false);
    assert!(by_p(2.0)["a_p"]["sup"].as_f64().unwrap() <= 2.0);
}

fn spec(dir: &Path, d_grid: &str) -> String {
    let path = dir.join("spec.json");
    fs::write(
        &path,
        format!(r#"{{"eps_grid":["1/2","1/8"],"d_grid":{d_grid},"p_grid":[4,2,1.3333333333333333]}}"#),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn sweep_is_byte_identical_across_threads() {
    let dir = TempDir::new().unwrap();
    let s = spec(dir.path(), "[1,4,64,1024]");
    let runs: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|t| {
            let o = toruslab(&["sweep", &s, "--threads", t]);
            assert_eq!(code(&o), 0);
            o.stdout
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let text = String::from_utf8(runs[0].clone()).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("eps,d,p,"));
    assert!(header.ends_with(",status"));
    assert_eq!(lines.count(), 2 * 4 * 3);

    let env = Command::new(env!("CARGO_BIN_EXE_toruslab"))
        .args(["sweep", &s])
        .env("TORUSLAB_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(env.stdout, runs[0]);
}

#[test]
fn sweep_writes_files_and_plot_data() {
    let dir = TempDir::new().unwrap();
    let s = spec(dir.path(), "[1,16,256]");
    let csv = dir.path().join("out.csv");
    let plots = dir.path().join("plots");
    let o = toruslab(&["sweep", &s, "--out", csv.to_str().unwrap(), "--plot-data", plots.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(&csv).unwrap().lines().count() > 1);
    assert!(plots.join("manifest.txt").exists());
    let dat = fs::read_dir(&plots)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "dat"))
        .count();
    assert_eq!(dat, 3);
}

#[test]
fn partial_sweep_exits_3() {
    let dir = TempDir::new().unwrap();
    let s = spec(dir.path(), "[4,134217728]");
    let o = toruslab(&["sweep", &s]);
    assert_eq!(code(&o), 3);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.ends_with(",ok")));
    assert!(text.lines().any(|l| l.contains("error")));
}

#[test]
fn empty_sweep_exits_2() {
    let dir = TempDir::new().unwrap();
    let s = spec(dir.path(), "[]");
    assert_eq!(code(&toruslab(&["sweep", &s])), 2);
}

#[test]
fn verify_passes_and_fails_on_tight_ceilings() {
    let o = toruslab(&["verify", "--json"]);
    let v = json(&o);
    assert_eq!(v["schema"], "v1");

    let dir = TempDir::new().unwrap();
    let tight = dir.path().join("ceilings.json");
    fs::write(
        &tight,
        r#"{"latala_k":1.0,"band_product":1.0,"refinement_widening":0.05,"endpoint_ratio":10,"k3":100,"phi_k":10}"#,
    )
    .unwrap();
    let o = toruslab(&["verify", "--ceilings", tight.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn dump_grid_header() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "1/2", "2");
    let out = dir.path().join("grid.bin");
    assert_eq!(code(&toruslab(&["dump-grid", &cfg, "--out", out.to_str().unwrap()])), 0);
    let bytes = fs::read(&out).unwrap();
    let dims = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let counts: Vec<u64> = (0..dims)
        .map(|i| u64::from_le_bytes(bytes[4 + 8 * i..12 + 8 * i].try_into().unwrap()))
        .collect();
    let cells: u64 = counts.iter().product();
    assert_eq!(bytes.len() as u64, 4 + 8 * dims as u64 + 4 * cells);
}
