use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hhepi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hhepi")).args(args).env_remove("HHEPI_OUT_DIR").env_remove("HHEPI_JOBS").output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = hhepi(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_aggregates(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn final_size_mt_matches_reference_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mt");
    run_ok(&["final-size", "--model", "mt", "--out", out.to_str().unwrap()]);
    let rows = read_aggregates(&out.join("aggregates.csv"));
    assert_eq!(rows.len(), 5);
    let want = [0.2603, 0.5021, 0.7624, 0.6586];
    for (g, w) in rows[4].iter().zip(want) {
        assert!((g - w).abs() < 2e-4);
    }
    let m = manifest(&out);
    assert_eq!(m["subcommand"], "final-size");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn final_size_ids_matches_reference_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ids");
    run_ok(&["final-size", "--model", "ids", "--out", out.to_str().unwrap()]);
    let rows = read_aggregates(&out.join("aggregates.csv"));
    let want = [0.2250, 0.5638, 0.7888, 0.7147];
    for (g, w) in rows[4].iter().zip(want) {
        assert!((g - w).abs() < 1e-3);
    }
}

#[test]
fn malformed_household_props_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[household]\nprops = [0.3, 0.3, 0.3]\n");
    let out = hhepi(&["final-size", "--model", "mt", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("household.props"));
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sim.toml", "seed = 3\n[household]\npreset = \"rho5\"\nhouseholds = 400\n");
    let dirs: Vec<_> = ["a", "b"].iter().map(|d| tmp.path().join(d)).collect();
    for d in &dirs {
        run_ok(&["simulate", "--model", "mt", "--config", &cfg, "--replicates", "20", "--out", d.to_str().unwrap()]);
    }
    for name in ["replicates.csv", "empirical.csv", "summary.csv", "histogram_mild.csv"] {
        assert_eq!(fs::read(dirs[0].join(name)).unwrap(), fs::read(dirs[1].join(name)).unwrap(), "{name}");
    }
    run_ok(&["simulate", "--model", "mt", "--config", &cfg, "--replicates", "20", "--seed", "4", "--out", tmp.path().join("c").to_str().unwrap()]);
    assert_ne!(fs::read(dirs[0].join("replicates.csv")).unwrap(), fs::read(tmp.path().join("c/replicates.csv")).unwrap());
}

#[test]
fn simulate_with_full_cutoff_has_no_majors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sim.toml", "[household]\nhouseholds = 300\n");
    let out = tmp.path().join("o");
    run_ok(&["simulate", "--model", "ids", "--config", &cfg, "--replicates", "5", "--cutoff", "1.0", "--out", out.to_str().unwrap()]);
    let m = manifest(&out);
    assert_eq!(m["results"]["majors"], 0);
    assert_eq!(m["results"]["empty"], true);
    assert!(!out.join("empirical.csv").exists());
}

#[test]
fn fit_recovers_own_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "fit.toml", "[household]\npreset = \"rho3\"\n");
    let data = tmp.path().join("data");
    run_ok(&["final-size", "--model", "mt", "--config", &cfg, "--out", data.to_str().unwrap()]);
    let out = tmp.path().join("fit");
    let target = data.join("final_size.csv");
    run_ok(&["fit", "--model", "mt", "--config", &cfg, "--target", target.to_str().unwrap(), "--runs", "4", "--out", out.to_str().unwrap()]);
    let m = manifest(&out);
    assert!(m["results"]["best_f"].as_f64().unwrap() < 1e-9);
    let rows = fs::read_to_string(out.join("fits.csv")).unwrap();
    assert_eq!(rows.lines().count(), 5);
}

#[test]
fn fit_with_missing_target_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.csv");
    let out = hhepi(&["fit", "--model", "mt", "--target", missing.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn experiment_without_section_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "empty.toml", "");
    let out = hhepi(&["experiment", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("o/manifest.json").exists());
}

#[test]
fn cross_fit_experiment_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "cross.toml",
        "seed = 9\n[fit]\nmax_evals = 300\nids_candidates = 3\n[experiment]\nkind = \"cross-fit\"\ndists = [\"rho3\"]\n",
    );
    let out = tmp.path().join("o");
    run_ok(&["experiment", "--config", &cfg, "--runs", "1", "--out", out.to_str().unwrap()]);
    let table = fs::read_to_string(out.join("cross_fit.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("dist_index,n_max,fitted_model,data_model,best_f"));
    assert!(manifest(&out)["outputs"].as_array().unwrap().iter().any(|o| o == "cross_fit.csv"));
}

#[test]
fn out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("env");
    let status = Command::new(env!("CARGO_BIN_EXE_hhepi"))
        .args(["final-size", "--model", "mt"])
        .env("HHEPI_OUT_DIR", &out)
        .env("HHEPI_JOBS", "1")
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn sample_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg: hhepi::config::Config = fs::read_to_string(&path).unwrap().parse().unwrap();
        cfg.household_dist().unwrap();
        cfg.mt_generation().unwrap();
        cfg.ids_params().unwrap();
        seen += 1;
    }
    assert_eq!(seen, 4);
}
