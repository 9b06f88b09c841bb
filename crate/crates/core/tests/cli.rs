//! The `igroup` binary: exit codes, error lines and output files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).display().to_string()
}

fn igroup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_igroup")).args(args).output().unwrap()
}

fn tmp(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("igroup-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(str::to_owned).collect()).collect()
}

#[test]
fn simulate_case3_smoke() {
    let out = tmp("case3");
    let o = igroup(&["simulate", "case3", "--row", "1", "--seed", "7", "--replications", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["report.csv", "replications.csv", "meta.json", "manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["seed"], 7);
    let outputs: Vec<String> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_owned()).collect();
    assert!(outputs.iter().any(|o| o.ends_with("report.csv")));
}

#[test]
fn usage_errors_exit_one() {
    let o = igroup(&["simulate", "case1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error kind=usage"), "{}", stderr(&o));
    let o = igroup(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_config_key_exits_one() {
    let out = tmp("badcfg");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("c.toml");
    std::fs::write(&cfg, "k = 100\nno_such_key = 3\n").unwrap();
    let o = igroup(&["simulate", "case1", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("error kind="));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(igroup(&["--help"]).status.code(), Some(0));
    let o = igroup(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn too_few_voyages_is_numerical_failure() {
    let out = tmp("few");
    let o = igroup(&["anomaly", "--voyages", &fixture("voyages_10.csv"), "--k", "40", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("kind=insufficient-voyages"), "{}", stderr(&o));
}

#[test]
fn anomaly_on_small_fixture() {
    let out = tmp("anom");
    let o = igroup(&["anomaly", "--voyages", &fixture("voyages_10.csv"), "--k", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_csv(&out.join("scores.csv")).len(), 10);
}

#[test]
fn equal_covariates_give_equal_weights() {
    let out = tmp("eqz");
    let o = igroup(&[
        "weights-dump", "--population", &fixture("population_equal_z.csv"), "--scheme", "z", "--target", "a", "--b1", "0.3",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_csv(&out.join("weights.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[1..] == rows[0][1..]));
    let ids: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
}

#[test]
fn theta_scheme_without_raw_data_is_scheme_mismatch() {
    let out = tmp("nox");
    let o = igroup(&[
        "weights-dump", "--population", &fixture("population_no_x.csv"), "--scheme", "theta", "--target", "a",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("kind=scheme-mismatch"), "{}", stderr(&o));
}

#[test]
fn combined_product_is_componentwise() {
    let out = tmp("comb");
    let dir = tmp("comb-in");
    std::fs::create_dir_all(&dir).unwrap();
    let pop = dir.join("pop.csv");
    let mut s = String::from("id,theta_hat,z,x\n");
    for i in 0..12 {
        let xs: Vec<String> = (0..6).map(|j| format!("{}", (i as f64) * 0.3 + ((i * 7 + j * 3) % 5) as f64 * 0.2)).collect();
        let mean = xs.iter().map(|v| v.parse::<f64>().unwrap()).sum::<f64>() / 6.0;
        s += &format!("p{i},{mean},{},{}\n", i as f64 * 0.1, xs.join(" "));
    }
    std::fs::write(&pop, s).unwrap();
    let o = igroup(&[
        "weights-dump", "--population", pop.to_str().unwrap(), "--scheme", "combined", "--target", "p3", "--seed", "5",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_csv(&out.join("weights.csv"));
    assert_eq!(rows.len(), 12);
    let mut norm = 0.0;
    for r in &rows {
        let v: Vec<f64> = r[1..].iter().map(|x| x.parse().unwrap()).collect();
        // values are written with nine significant digits
        assert!((v[0] * v[1] - v[2]).abs() <= 1e-7 * v[2].abs());
        norm += v[3];
    }
    assert!((norm - 1.0).abs() < 1e-7);
}

#[test]
fn var_on_fixture_panel_runs() {
    let out = tmp("var");
    let o = igroup(&[
        "var", "--returns", &fixture("returns_2x2.csv"), "--factors", &fixture("factors_2x2.csv"), "--window", "1",
        "--out", out.to_str().unwrap(),
    ]);
    // one day cannot hold both a fitting window and an evaluation day
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("error kind="), "{}", stderr(&o));
}

#[test]
fn bandwidth_selection_outputs() {
    let out = tmp("bw");
    let o = igroup(&[
        "bandwidth", "--population", &fixture("population_no_x.csv"), "--scheme", "z", "--bandwidth-grid", "0.1,0.5,2",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_csv(&out.join("cv.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().filter(|r| r[2] == "true").count(), 1);
}
