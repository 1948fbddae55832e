use std::path::Path;
use std::process::{Command, Output};

use coldplasma::config::RunConfig;
use coldplasma::io::read_snapshot;

fn coldplasma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coldplasma")).args(args).output().expect("binary runs")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn converge_writes_summary_and_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("conv");
    let o = coldplasma(&["converge", "--mode", "o", "--ppw", "10,20", "--periods", "0.5", "--scheme", "cn", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["mode"], "converge");
    assert!(s["build"].as_str().unwrap().starts_with("coldplasma-"));
    assert_eq!(s["result"]["cases"].as_array().unwrap().len(), 2);
    assert!(s["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    let mut rdr = csv::Reader::from_path(out.join("cases.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    for col in ["scheme", "ppw", "max_rel_total", "max_rel_solver", "energy_error", "charge_error", "div_b_max"] {
        assert!(header.iter().any(|h| h == col), "missing column {col}");
    }
    assert_eq!(rdr.records().count(), 2);

    let mut steps = csv::Reader::from_path(out.join("steps").join("crank_nicolson_ppw10_cfl0.25.csv")).unwrap();
    assert_eq!(steps.headers().unwrap().get(1), Some("hamiltonian"));
    assert!(steps.records().count() > 1);
}

#[test]
fn failed_check_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = coldplasma(&["converge", "--ppw", "10,20", "--periods", "0.5", "--scheme", "poisson", "--slope-band", "5,6", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert_eq!(summary(tmp.path())["checks"][0]["passed"], false);
}

#[test]
fn runtime_errors_exit_with_one() {
    let o = coldplasma(&["converge", "--config", "/nonexistent/run.json"]);
    assert_eq!(o.status.code(), Some(1));
    let o = coldplasma(&["converge", "--slope-band", "1.8", "--print-config"]);
    assert_eq!(o.status.code(), Some(1));
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"mode": "converge", "unknown_field": 1}"#).unwrap();
    assert_eq!(coldplasma(&["stability", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn printed_config_round_trips_through_config_file() {
    let o = coldplasma(&["stability", "--mode", "o", "--cfl", "0.5,1", "--tol", "1e-10", "--print-config"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = RunConfig::from_json(&text).unwrap();
    assert_eq!(cfg.sweep.cfl, vec![0.5, 1.0]);
    assert_eq!(cfg.solver.tol, 1e-10);

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.json");
    std::fs::write(&path, &text).unwrap();
    let again = coldplasma(&["stability", "--config", path.to_str().unwrap(), "--print-config"]);
    assert!(again.status.success());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn freqsolve_writes_consistent_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = coldplasma(&["freqsolve", "--ppw", "2", "--profile", "vacuum", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(tmp.path());
    assert!(s["result"]["residual"].as_f64().unwrap() <= 1e-8);

    let (he, e) = read_snapshot(&tmp.path().join("e_hat.bin")).unwrap();
    let (hb, b) = read_snapshot(&tmp.path().join("b_hat.bin")).unwrap();
    assert_eq!((he.space.as_str(), hb.space.as_str(), he.layout.as_str()), ("V1", "V2", "complex"));
    assert_eq!(e.len(), 2 * he.len);
    assert!(e.iter().any(|v| *v != 0.0));

    // B̂ = −i C Ê: Re B̂ = C Im Ê and Im B̂ = −C Re Ê
    let cfg = RunConfig::from_json(&serde_json::to_string(&s["config"]).unwrap()).unwrap();
    let c = cfg.build_complex().unwrap();
    let (er, ei) = e.split_at(he.len);
    let (br, bi) = b.split_at(hb.len);
    let cr = c.curl.apply(ei);
    let ci = c.curl.apply(er);
    for k in 0..hb.len {
        assert!((br[k] - cr[k]).abs() <= 1e-12 * (1.0 + cr[k].abs()));
        assert!((bi[k] + ci[k]).abs() <= 1e-12 * (1.0 + ci[k].abs()));
    }
}
