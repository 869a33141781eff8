use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn vrhmc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vrhmc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn run_ok(args: &[&str]) -> String {
    let out = vrhmc(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

const SMALL_SYNTHETIC: &str = "iterations = 3000\nburn_in = 500\nchains = 2\nstride = 50\nN = 100\n";
const SMALL_LOGISTIC: &str = "budget_epochs = 4\nchains = 2\nstride = 10\n";

#[test]
fn synthetic_outputs_are_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_SYNTHETIC);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        run_ok(&[
            "synthetic",
            "--config",
            &cfg,
            "--seed",
            "7",
            "--out",
            dir.to_str().unwrap(),
        ]);
    }
    for kind in ["full", "sg", "saga", "svrg", "sarah", "sarge"] {
        let name = format!("{kind}.csv");
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(
        fs::read(a.join("table.txt")).unwrap(),
        fs::read(b.join("table.txt")).unwrap()
    );

    let c = tmp.path().join("c");
    run_ok(&[
        "synthetic",
        "--config",
        &cfg,
        "--seed",
        "8",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert_ne!(fs::read(a.join("sg.csv")).unwrap(), fs::read(c.join("sg.csv")).unwrap());
}

#[test]
fn full_gradient_only_gives_one_zero_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "methods = full\niterations = 200\nburn_in = 50\nchains = 1\nstride = 1\nN = 50\n",
    );
    let out = tmp.path().join("out");
    let table = run_ok(&["synthetic", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(table.lines().count(), 2, "{table}");
    let s = summary(&out);
    let methods = s["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 1);
    assert_eq!(methods[0]["method"], "HMC");
    assert_eq!(methods[0]["gradient_mse"].as_f64(), Some(0.0));
}

#[test]
fn synthetic_csv_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_SYNTHETIC);
    let out = tmp.path().join("out");
    run_ok(&[
        "synthetic",
        "--config",
        &cfg,
        "--estimator",
        "svrg",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out.join("svrg.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,queries,potential,grad_err_sq,q_k,w2"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3000 / 50 + 1);
    assert!(rows.iter().all(|r| r.len() == 6));
    // the initial row carries no step diagnostics
    assert_eq!(rows[0][3], "");
    assert_eq!(rows[1][3].parse::<f64>().map(|e| e < 1e-20), Ok(true));
}

#[test]
fn logistic_outputs_schema_and_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_LOGISTIC);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        run_ok(&[
            "logistic",
            "--config",
            &cfg,
            "--diagnostics",
            "--out",
            dir.to_str().unwrap(),
        ]);
    }
    let text = fs::read_to_string(a.join("logistic.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("logistic.csv")).unwrap());

    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,iter,queries,potential,nll,grad_err_sq"));
    let mut last: Option<(String, u64, u64)> = None;
    let mut methods = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 6);
        let (m, iter, queries) = (
            cols[0].to_string(),
            cols[1].parse::<u64>().unwrap(),
            cols[2].parse::<u64>().unwrap(),
        );
        assert!(cols[3].parse::<f64>().unwrap().is_finite());
        assert!(cols[4].parse::<f64>().unwrap().is_finite());
        match &last {
            Some((pm, pi, pq)) if *pm == m => assert!(iter > *pi && queries >= *pq, "{line}"),
            _ => methods.push(m.clone()),
        }
        last = Some((m, iter, queries));
    }
    assert_eq!(methods, ["full", "sg", "saga", "svrg", "sarah", "sarge"]);

    let s = summary(&a);
    let n = s["train"]["n"].as_u64().unwrap();
    for row in s["methods"].as_array().unwrap() {
        assert_eq!(row["query_budget"].as_u64(), Some(4 * n));
        assert!(row["tail_potential"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn logistic_full_batch_sg_series_matches_full_gradient() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL_LOGISTIC}methods = full, sg\n"));
    let out = tmp.path().join("out");
    // the generated dataset splits into 345 training rows
    run_ok(&[
        "logistic",
        "--config",
        &cfg,
        "--batch",
        "345",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out.join("logistic.csv")).unwrap();
    let series = |m: &str| -> Vec<String> {
        text.lines()
            .skip(1)
            .filter(|l| l.starts_with(&format!("{m},")))
            .map(|l| l.split_once(',').unwrap().1.to_string())
            .collect()
    };
    let (full, sg) = (series("full"), series("sg"));
    assert!(!full.is_empty());
    assert_eq!(full, sg);
}

#[test]
fn advisory_reports_bounds() {
    let text = run_ok(&["advisory", "--estimator", "full,saga,sg"]);
    assert!(text.contains("SAGA-HMC"));
    // Θ = 6N² for SAGA at b = 1, N = 1000
    assert!(text.contains("6e6"), "{text}");
    assert!(text.contains("no MSEB constants"));

    let text = run_ok(&["advisory", "--experiment", "logistic", "--estimator", "svrg"]);
    assert!(text.contains("N = 345, d = 14"), "{text}");
    assert!(text.contains("SVRG-HMC  1  345"), "{text}");
}

#[test]
fn bad_input_fails_cleanly() {
    let out = vrhmc(&["synthetic", "--estimator", "adam"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "stepsize = 0.1\n");
    let out = vrhmc(&["synthetic", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepsize"));

    let out = vrhmc(&["advisory", "--experiment", "nope"]);
    assert!(!out.status.success());
}
