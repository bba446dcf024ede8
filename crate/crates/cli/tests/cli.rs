//! End-to-end tests of the mmnl binary: exit codes, determinism, and fit
//! output checked against library recomputations.

use lowrank_mmnl::{ChoiceDataset, ChoiceObservation, ExperimentRecord, ParamMatrix};
use std::path::Path;
use std::process::{Command, Output};

fn mmnl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmnl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn generate_rejects_oversized_assortment() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmnl(&[
        "generate",
        "--m", "10", "--n", "10", "--rank", "2", "--T", "100", "--K", "11",
        "--seed", "1",
        "--out-data", &path_str(&dir.path().join("d.txt")),
        "--out-truth", &path_str(&dir.path().join("t.txt")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("out of range"), "stderr: {stderr}");
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |tag: &str| {
        [
            "generate".to_string(),
            "--m".into(), "8".into(), "--n".into(), "7".into(),
            "--rank".into(), "2".into(), "--T".into(), "300".into(),
            "--K".into(), "3".into(), "--seed".into(), "11".into(),
            "--out-data".into(), path_str(&dir.path().join(format!("d{tag}.txt"))),
            "--out-truth".into(), path_str(&dir.path().join(format!("t{tag}.txt"))),
        ]
    };
    for tag in ["a", "b"] {
        let run: Vec<String> = args(tag).to_vec();
        let refs: Vec<&str> = run.iter().map(String::as_str).collect();
        let out = mmnl(&refs);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["d", "t"] {
        let a = std::fs::read(dir.path().join(format!("{name}a.txt"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("{name}b.txt"))).unwrap();
        assert_eq!(a, b, "{name} files differ across identical runs");
    }
}

#[test]
fn mle_fit_matches_count_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut observations = Vec::new();
    for _ in 0..3 {
        observations.push(ChoiceObservation::new(0, 0, vec![0, 1]).unwrap());
    }
    observations.push(ChoiceObservation::new(0, 1, vec![0, 1]).unwrap());
    let data = ChoiceDataset::new(1, 2, observations).unwrap();
    let data_path = dir.path().join("counts.txt");
    data.write_file(&data_path).unwrap();

    let est_path = dir.path().join("est.txt");
    let out = mmnl(&[
        "fit", "--method", "mle",
        "--data", &path_str(&data_path),
        "--out", &path_str(&est_path),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let est = ParamMatrix::read_file(&est_path).unwrap();
    // 3-vs-1 counts over two items: centered optimum at -+ln(3)/2
    let expect = 0.5 * 3.0_f64.ln();
    assert!((est.values()[(0, 0)] + expect).abs() < 1e-5);
    assert!((est.values()[(0, 1)] - expect).abs() < 1e-5);
}

#[test]
fn fgd_fit_on_singleton_assortments_returns_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let observations = vec![
        ChoiceObservation::new(0, 1, vec![1]).unwrap(),
        ChoiceObservation::new(1, 2, vec![2]).unwrap(),
        ChoiceObservation::new(0, 0, vec![0]).unwrap(),
        ChoiceObservation::new(1, 0, vec![0]).unwrap(),
    ];
    let data = ChoiceDataset::new(2, 3, observations).unwrap();
    let data_path = dir.path().join("singleton.txt");
    data.write_file(&data_path).unwrap();

    let est_path = dir.path().join("est.txt");
    let out = mmnl(&[
        "fit", "--method", "fgd", "--rank", "1",
        "--data", &path_str(&data_path),
        "--out", &path_str(&est_path),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let est = ParamMatrix::read_file(&est_path).unwrap();
    assert!(est.values().iter().all(|&v| v == 0.0), "nonzero estimate");
}

#[test]
fn fgd_flag_conflicts_and_missing_rank_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("d.txt");
    let data = ChoiceDataset::new(
        1,
        2,
        vec![ChoiceObservation::new(0, 0, vec![0, 1]).unwrap()],
    )
    .unwrap();
    data.write_file(&data_path).unwrap();
    let est = path_str(&dir.path().join("e.txt"));

    let conflict = mmnl(&[
        "fit", "--method", "fgd", "--rank", "1",
        "--lambda", "0.1", "--lambda-rule", "theorem",
        "--data", &path_str(&data_path), "--out", &est,
    ]);
    assert_eq!(conflict.status.code(), Some(2));

    let no_rank = mmnl(&[
        "fit", "--method", "fgd",
        "--data", &path_str(&data_path), "--out", &est,
    ]);
    assert_eq!(no_rank.status.code(), Some(2));

    let mle_extras = mmnl(&[
        "fit", "--method", "mle", "--rank", "1",
        "--data", &path_str(&data_path), "--out", &est,
    ]);
    assert_eq!(mle_extras.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmnl(&[
        "fit", "--method", "fgd", "--rank", "1",
        "--data", &path_str(&dir.path().join("absent.txt")),
        "--out", &path_str(&dir.path().join("e.txt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_prints_rmse_and_porcelain_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let truth = ParamMatrix::zeros(2, 3).unwrap();
    let estimate = lowrank_mmnl::row_center(&nalgebra::dmatrix![
        1.0, -1.0, 0.0;
        0.5, 0.0, -0.5;
    ]);
    let truth_path = dir.path().join("truth.txt");
    let est_path = dir.path().join("est.txt");
    truth.write_file(&truth_path).unwrap();
    estimate.write_file(&est_path).unwrap();

    let human = mmnl(&[
        "evaluate",
        "--estimate", &path_str(&est_path),
        "--truth", &path_str(&truth_path),
    ]);
    assert_eq!(human.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&human.stdout);
    assert!(stdout.contains("rmse = "), "stdout: {stdout}");
    assert!(stdout.contains("frob_error = "), "stdout: {stdout}");

    let porcelain = mmnl(&[
        "evaluate",
        "--estimate", &path_str(&est_path),
        "--truth", &path_str(&truth_path),
        "--porcelain",
    ]);
    assert_eq!(porcelain.status.code(), Some(0));
    let line = String::from_utf8_lossy(&porcelain.stdout);
    let line = line.trim();
    assert_eq!(line.lines().count(), 1);

    let est_back = ParamMatrix::read_file(&est_path).unwrap();
    let truth_back = ParamMatrix::read_file(&truth_path).unwrap();
    let rmse = lowrank_mmnl::rmse(est_back.values(), truth_back.values()).unwrap();
    let frob = (est_back.values() - truth_back.values()).norm();
    assert_eq!(line, format!("rmse={rmse:.16e} frob_error={frob:.16e}"));
}

#[test]
fn evaluate_bound_requires_model_flags() {
    let dir = tempfile::tempdir().unwrap();
    let truth = ParamMatrix::zeros(2, 2).unwrap();
    let p = dir.path().join("t.txt");
    truth.write_file(&p).unwrap();
    let out = mmnl(&[
        "evaluate",
        "--estimate", &path_str(&p),
        "--truth", &path_str(&p),
        "--bound",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_records_and_plot_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("sweep.toml");
    std::fs::write(
        &config_path,
        "replications = 1\nmethods = [\"zero\"]\nbase_seed = 3\n\n[[grid]]\nm = 6\nn = 6\nr = 1\nT = 150\nK = 2\n",
    )
    .unwrap();
    let csv_path = dir.path().join("results.csv");
    let out = mmnl(&[
        "sweep",
        "--config", &path_str(&config_path),
        "--out", &path_str(&csv_path),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let records = ExperimentRecord::parse_csv(&csv).unwrap();
    assert_eq!(records.len(), 1);
    assert!((records[0].rmse - 1.0).abs() < 0.3, "rmse {}", records[0].rmse);

    let svg_a = dir.path().join("a.svg");
    let svg_b = dir.path().join("b.svg");
    for svg in [&svg_a, &svg_b] {
        let out = mmnl(&[
            "plot",
            "--results", &path_str(&csv_path),
            "--x", "size",
            "--out", &path_str(svg),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(&svg_a).unwrap();
    let b = std::fs::read(&svg_b).unwrap();
    assert_eq!(a, b, "plot output not deterministic");
    assert!(String::from_utf8_lossy(&a).starts_with("<svg"));
}

#[test]
fn plot_of_empty_results_says_no_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("empty.csv");
    std::fs::write(
        &csv_path,
        "m,n,r,T,K,method,lambda,seed,rmse,frob_error,theorem_bound,outer_iters,wall_time_seconds,converged\n",
    )
    .unwrap();
    let svg_path = dir.path().join("empty.svg");
    let out = mmnl(&[
        "plot",
        "--results", &path_str(&csv_path),
        "--x", "per-row",
        "--out", &path_str(&svg_path),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert!(svg.contains("no data"), "svg missing annotation");

    let bad_axis = mmnl(&[
        "plot",
        "--results", &path_str(&csv_path),
        "--x", "bogus",
        "--out", &path_str(&svg_path),
    ]);
    assert_eq!(bad_axis.status.code(), Some(2));
}
