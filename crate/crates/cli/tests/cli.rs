use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gptd_core::Trajectory;

fn gptd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gptd")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Eight transitions of a short 2-D approach run.
fn demonstration_data() -> Trajectory {
    let inputs: Vec<Vec<f64>> = (0..9).map(|t| vec![0.5 * t as f64, 0.3 * (t as f64 * 0.7).sin()]).collect();
    let rewards: Vec<f64> = inputs[1..].iter().map(|x| -((x[0] - 4.0).powi(2) + x[1].powi(2)).sqrt()).collect();
    Trajectory::single_episode(inputs, rewards).unwrap()
}

fn write_demo(dir: &Path) {
    fs::write(dir.join("demo.json"), serde_json::to_string_pretty(&demonstration_data()).unwrap()).unwrap();
    fs::write(dir.join("sparse.toml"), "estimator = \"sparse\"\nm = 2\n").unwrap();
}

/// Splits a CSV written by the CLI into its hash comment, header and rows.
fn read_csv(path: &Path) -> (String, Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let comment = lines.next().unwrap().to_string();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (comment, header, rows)
}

#[test]
fn fit_writes_model_and_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    write_demo(dir.path());
    let o = gptd(&["fit", "demo.json", "--config", "sparse.toml", "--out", "run", "--optimize"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("log_marginal:") && out.contains("fit_ms:"), "{out}");
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run/model.json")).unwrap()).unwrap();
    assert_eq!(model["estimator"], "sparse");
    assert_eq!(model["model"]["pseudo_inputs"].as_array().unwrap().len(), 2);
    assert_eq!(model["model"]["alpha"].as_array().unwrap().len(), 2);
}

#[test]
fn fitting_twice_gives_identical_model_files() {
    let dir = tempfile::tempdir().unwrap();
    write_demo(dir.path());
    for name in ["a.json", "b.json"] {
        let o = gptd(&["fit", "demo.json", "--config", "sparse.toml", "--seed", "3", "--optimize", "--model", name], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(dir.path().join("a.json")).unwrap(), fs::read(dir.path().join("b.json")).unwrap());
}

#[test]
fn lowrank_fit_reports_retention() {
    let dir = tempfile::tempdir().unwrap();
    write_demo(dir.path());
    fs::write(dir.path().join("lr.toml"), "estimator = \"lowrank\"\nnu = 0.1\n").unwrap();
    let o = gptd(&["fit", "demo.json", "--config", "lr.toml", "--out", "."], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("retention_fraction:"));
}

#[test]
fn saved_models_predict_like_the_library() {
    let dir = tempfile::tempdir().unwrap();
    write_demo(dir.path());
    let o = gptd(&["fit", "demo.json", "--config", "sparse.toml", "--out", "."], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    fs::write(dir.path().join("q.json"), "[[0.0, 0.0], [1.0, -0.5]]").unwrap();
    let o = gptd(&["predict", "--model", "model.json", "--inputs", "q.json", "--out", "."], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("model.json")).unwrap();
    let model: gptd_core::SparsePosterior =
        serde_json::from_value(serde_json::from_str::<serde_json::Value>(&text).unwrap()["model"].clone()).unwrap();
    let (_, header, rows) = read_csv(&dir.path().join("predictions.csv"));
    assert_eq!(header, ["index", "mean", "variance"]);
    for (row, x) in rows.iter().zip([[0.0, 0.0], [1.0, -0.5]]) {
        let (mean, var) = model.predict(&x).unwrap();
        assert_eq!(row[1].parse::<f64>().unwrap(), mean);
        assert_eq!(row[2].parse::<f64>().unwrap(), var);
    }
}

#[test]
fn empty_trajectory_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.json"), "").unwrap();
    let o = gptd(&["fit", "empty.json"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn malformed_files_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), "{\n  \"inputs\": [[0.0], [1.0]],\n  \"rewards\": [1.0\n").unwrap();
    let o = gptd(&["fit", "bad.json"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    fs::write(dir.path().join("bad.toml"), "episodes = 3\nm = \"five\"\n").unwrap();
    let o = gptd(&["bench", "--config", "bad.toml"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn invalid_thread_cap_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gptd"))
        .args(["bench"])
        .env("SPARSE_GPTD_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("SPARSE_GPTD_THREADS"));
}

#[test]
fn bench_csv_has_the_timing_schema() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("b.toml"),
        "[bench]\nsizes = [50, 100]\npseudo_counts = [5]\nreps = 1\nqueries = 10\nexact_max = 100\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gptd"))
        .args(["bench", "--config", "b.toml", "--out", "."])
        .env("SPARSE_GPTD_THREADS", "1")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let (comment, header, rows) = read_csv(&dir.path().join("bench.csv"));
    assert!(comment.starts_with("# config_hash=") && comment.len() == "# config_hash=".len() + 16);
    assert_eq!(header, ["estimator", "N", "M", "fit_ms", "predict_us"]);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().any(|r| r[0] == "exact") && rows.iter().any(|r| r[0] == "sparse"));
}

#[test]
fn retention_rows_cover_grid_and_both_sources() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("r.toml"),
        "[retention]\nnu_min = 1e-4\nnu_max = 1.0\nnu_points = 4\ntrajectories = 3\n",
    )
    .unwrap();
    let o = gptd(&["retention", "--config", "r.toml", "--out", "."], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, header, rows) = read_csv(&dir.path().join("retention.csv"));
    assert_eq!(header, ["source", "nu", "mean", "std"]);
    assert_eq!(rows.len(), 4 * 2);
}

#[test]
fn compare_approx_ratios_are_finite() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[compare]\nsubset_sizes = [5]\nsubsets = 2\ninclude_full = true\n[compare.synthetic]\nn_transitions = 30\n[compare.optimizer]\nmax_iterations = 10\n",
    )
    .unwrap();
    let o = gptd(&["compare-approx", "--config", "c.toml", "--out", "."], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, header, rows) = read_csv(&dir.path().join("compare_approx.csv"));
    let after = header.iter().position(|h| h == "ratio_after").unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[after].parse::<f64>().unwrap().is_finite()));
}

#[test]
fn learn_writes_curves_and_landscape() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("l.toml"),
        "episodes = 3\nseeds = [1, 2]\n[agent]\nwindow = 3\n[landscape]\ngrid = 5\nwindow = 3\n",
    )
    .unwrap();
    let o = gptd(&["learn", "--config", "l.toml", "--out", ".", "--landscape"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, header, rows) = read_csv(&dir.path().join("learning_curve.csv"));
    assert_eq!(header, ["seed", "episode", "total_reward", "estimator", "wall_ms"]);
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|r| r[0] == "1").count(), 3);
    let (_, header, rows) = read_csv(&dir.path().join("landscape.csv"));
    assert_eq!(header, ["estimator", "x0", "x1", "value"]);
    assert_eq!(rows.len(), 2 * 5 * 5);
    assert!(stdout(&o).contains("pearson"));
}

#[test]
fn learn_rejects_the_synthetic_task() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.toml"), "task = \"synthetic_prior\"\n").unwrap();
    let o = gptd(&["learn", "--config", "s.toml"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn printed_configuration_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("in.toml"), "task = \"uuv\"\n[agent]\nepsilon = 0.3\n").unwrap();
    let o = gptd(&["config", "--config", "in.toml", "--seed", "9"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    fs::write(dir.path().join("full.toml"), o.stdout).unwrap();
    let again = gptd(&["config", "--config", "full.toml"], dir.path());
    assert_eq!(stdout(&again), fs::read_to_string(dir.path().join("full.toml")).unwrap());
    assert!(stdout(&again).contains("epsilon = 0.3") && stdout(&again).contains("seeds = [9]"));
}
