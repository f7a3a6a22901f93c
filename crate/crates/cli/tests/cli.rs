use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use summa::ranking::{rank_scores, TiePolicy};

fn summa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_summa")).current_dir(dir).args(args).output().expect("run summa")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["--seed", "3", "--output-dir", out, "simulate", "--methods", "8", "--samples", "300"];
    args.extend_from_slice(extra);
    let o = summa(dir, &args);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn zero_prevalence_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = summa(dir.path(), &["--seed", "1", "simulate", "--rho", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("prevalence"));
}

#[test]
fn simulate_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = summa(dir.path(), &["simulate"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(summa(dir.path(), &["infer"]).status.code(), Some(2));
    assert_eq!(summa(dir.path(), &["sweep", "--axis", "colour"]).status.code(), Some(2));
}

#[test]
fn simulate_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim", &["--rho", "0.25"]);
    let scores = csv_rows(&dir.path().join("sim/scores.csv"));
    assert_eq!(scores[0].len(), 9);
    assert_eq!(scores[0][1], "m1");
    assert_eq!(scores.len(), 301);
    let labels = csv_rows(&dir.path().join("sim/labels.csv"));
    assert_eq!(labels.iter().skip(1).filter(|r| r[1] == "1").count(), 75);
    let truth = csv_rows(&dir.path().join("sim/true_auroc.csv"));
    assert_eq!(truth[0], ["method_id", "true_auroc", "separation"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sim/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn infer_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim", &[]);
    let o = summa(dir.path(), &["--output-dir", "inf", "infer", "sim/scores.csv", "--prevalence", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = csv_rows(&dir.path().join("inf/report.csv"));
    assert_eq!(report.len(), 9);
    assert!(report[1..].iter().all(|r| !r[4].is_empty()));
    let manifest = fs::read_to_string(dir.path().join("inf/manifest.json")).unwrap();
    assert!(manifest.contains("sha256"));

    let o = summa(dir.path(), &["--output-dir", "ev", "evaluate", "inf/ensemble_scores.csv", "sim/labels.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = csv_rows(&dir.path().join("ev/metrics.csv"));
    assert_eq!(metrics.len(), 3);
    assert_eq!(metrics[1][0], "summa");
    assert_eq!(metrics[2][0], "woc");
    let summa_auc: f64 = metrics[1][1].parse().unwrap();
    assert!(summa_auc > 0.5);
}

#[test]
fn json_tables_round_trip_through_infer() {
    let dir = tempfile::tempdir().unwrap();
    let o = summa(dir.path(), &["--seed", "3", "--format", "json", "--output-dir", "sim", "simulate", "--methods", "8", "--samples", "300"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = summa(dir.path(), &["--format", "json", "--output-dir", "inf", "infer", "sim/scores.json", "--prevalence", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("inf/report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["methods"].as_array().unwrap().len(), 8);
    assert_eq!(report["report"]["rho"], 0.5);
}

#[test]
fn precomputed_ranks_give_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim", &[]);
    let rows = csv_rows(&dir.path().join("sim/scores.csv"));
    let columns: Vec<Vec<f64>> =
        (1..rows[0].len()).map(|j| rows[1..].iter().map(|r| r[j].parse().unwrap()).collect()).collect();
    let ranks: Vec<Vec<f64>> = columns.iter().map(|c| rank_scores(c, TiePolicy::Midrank).unwrap()).collect();
    let mut text = rows[0].join(",") + "\n";
    for (k, row) in rows[1..].iter().enumerate() {
        text += &row[0];
        for r in &ranks {
            text += &format!(",{}", r[k]);
        }
        text += "\n";
    }
    fs::write(dir.path().join("ranks.csv"), text).unwrap();

    for (out, args) in [("a", vec!["sim/scores.csv"]), ("b", vec!["ranks.csv", "--already-ranked"])] {
        let mut full = vec!["--output-dir", out, "infer"];
        full.extend(args);
        let o = summa(dir.path(), &full);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["report.csv", "report_summary.csv", "ensemble_scores.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(file)).unwrap(), fs::read(dir.path().join("b").join(file)).unwrap());
    }
}

#[test]
fn three_methods_are_too_few() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.csv"), "id,a,b,c\nx,0.1,0.2,0.3\ny,0.5,0.4,0.1\nz,0.9,0.8,0.7\n").unwrap();
    let o = summa(dir.path(), &["infer", "s.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("at least 4 methods"));
}

#[test]
fn iteration_cap_exits_with_partial_result() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim", &[]);
    let o = summa(dir.path(), &["--output-dir", "inf", "infer", "sim/scores.csv", "--max-iter", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let partial: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("inf/partial_recovery.json")).unwrap()).unwrap();
    assert_eq!(partial["matrix"]["converged"], false);
}

#[test]
fn weights_only_without_tensor_or_prevalence() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim", &[]);
    let o = summa(dir.path(), &["--output-dir", "inf", "infer", "sim/scores.csv", "--no-tensor"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = csv_rows(&dir.path().join("inf/report.csv"));
    assert!(report[1..].iter().all(|r| !r[1].is_empty() && r[4].is_empty()));
}

#[test]
fn evaluate_rejects_single_class_labels() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.csv"), "id,a\nx,1\ny,2\n").unwrap();
    fs::write(dir.path().join("l.csv"), "id,label\nx,1\ny,1\n").unwrap();
    let o = summa(dir.path(), &["evaluate", "s.csv", "l.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = summa(
        dir.path(),
        &["--output-dir", "sw", "sweep", "--axis", "methods", "--values", "5,10", "--replicates", "3", "--samples", "200"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&dir.path().join("sw/sweep.csv")).len(), 7);
    let summary = csv_rows(&dir.path().join("sw/sweep_summary.csv"));
    assert_eq!(summary.len(), 3);
    assert_eq!(summary[0][4], "correlation_median");
}
