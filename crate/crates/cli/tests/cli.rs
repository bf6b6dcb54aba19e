use std::path::{Path, PathBuf};
use std::process::Command;

use opdlab::metrics::{self, MetricsRow, COLUMNS};
use opdlab::summary::summarize;

fn tiny_config(experiment: &str, lambdas: &str, seeds: &str) -> String {
    format!(
        "\
[run]
experiment = {experiment}
name = tiny
seeds = {seeds}
log_every = 5

[task.copy-reverse]
vocab = 6
horizon = 3
num_prompts = 16
difficulty = 2
alphabet = 5
split_seed = 2

[base]
order = 1
skill = 1.0
seed = 200

[teacher-base]
order = 2
skill = 1.5
seed = 300

[rl]
algorithm = adam
learning_rate = 0.1
steps = 10
batch_prompts = 8

[distill]
algorithm = adam
learning_rate = 0.2
steps = 10
batch_prompts = 8
lambdas = {lambdas}
"
    )
}

fn opdlab(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_opdlab"))
        .args(args)
        .env("OPDLAB_OUT", out)
        .output()
        .unwrap()
}

fn run_tiny(dir: &Path, text: &str) -> PathBuf {
    let cfg = dir.join("tiny.cfg");
    std::fs::write(&cfg, text).unwrap();
    let out = opdlab(&["run", cfg.to_str().unwrap()], &dir.join("runs"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout.lines().find(|l| l.starts_with("run directory: ")).unwrap();
    PathBuf::from(line.trim_start_matches("run directory: "))
}

fn last_row(path: &Path) -> MetricsRow {
    metrics::read(path).unwrap().pop().unwrap()
}

#[test]
fn metrics_csv_matches_golden_file() {
    let rows = [
        MetricsRow {
            step: 0,
            domain: "modsum".into(),
            objective: 0.0,
            train_reward: 0.0,
            eval_accuracy: 0.125,
            mean_length: 2.5,
            mean_entropy: 1.0,
            kl_to_teacher: 0.75,
            exact_kl: true,
        },
        MetricsRow {
            step: 10,
            domain: "modsum".into(),
            objective: -0.5,
            train_reward: 0.25,
            eval_accuracy: 0.375,
            mean_length: 2.0,
            mean_entropy: 0.5,
            kl_to_teacher: 0.25,
            exact_kl: false,
        },
    ];
    let golden = include_str!("golden/metrics.csv");
    assert_eq!(metrics::render(&rows).unwrap(), golden);
    assert_eq!(golden.lines().next().unwrap(), COLUMNS.join(","));
}

#[test]
fn zero_lambda_arm_stays_at_the_base() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_tiny(dir.path(), &tiny_config("lambda-sweep", "0, 1", "0"));
    let seed = run.join("seed-0");
    let base = last_row(&seed.join("base/metrics.csv"));
    let zero = last_row(&seed.join("copy-reverse-lambda-0/metrics.csv"));
    assert_eq!(zero.eval_accuracy, base.eval_accuracy);
    assert_eq!(zero.mean_length, base.mean_length);
}

#[test]
fn reward_correction_arms_share_a_schema() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_tiny(dir.path(), &tiny_config("reward-correction-ab", "1", "0"));
    let seed = run.join("seed-0");
    let header = |arm: &str| {
        let text = std::fs::read_to_string(seed.join(arm).join("metrics.csv")).unwrap();
        text.lines().next().unwrap().to_string()
    };
    let keys = |arm: &str| {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(seed.join(arm).join("arm.json")).unwrap()).unwrap();
        v.as_object().unwrap().keys().cloned().collect::<Vec<_>>()
    };
    assert_eq!(header("reference-student-base"), header("reward-correction"));
    assert_eq!(keys("reference-student-base"), keys("reward-correction"));
    let rows = |arm: &str| metrics::read(&seed.join(arm).join("metrics.csv")).unwrap().len();
    assert_eq!(rows("reference-student-base"), rows("reward-correction"));
}

fn distinct_cx(svg: &str) -> usize {
    let mut xs: Vec<&str> = svg
        .split("<circle cx=\"")
        .skip(1)
        .map(|s| s.split('"').next().unwrap())
        .collect();
    xs.sort();
    xs.dedup();
    xs.len()
}

#[test]
fn lambda_plot_has_one_position_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_tiny(dir.path(), &tiny_config("lambda-sweep", "0, 0.25, 0.5, 0.75, 1, 1.25, 1.5", "0"));
    let svg = std::fs::read_to_string(run.join("plots/accuracy_vs_lambda.svg")).unwrap();
    assert_eq!(distinct_cx(&svg), 7);
    assert_eq!(svg.matches("<circle").count(), 7);
    assert!(svg.contains("λ (reward scale)"));
}

#[test]
fn single_seed_single_lambda_plots_one_point() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_tiny(dir.path(), &tiny_config("lambda-sweep", "1", "0"));
    let svg = std::fs::read_to_string(run.join("plots/accuracy_vs_lambda.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 1);
}

#[test]
fn summary_of_one_run_reproduces_its_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_tiny(dir.path(), &tiny_config("strong-to-weak", "1", "0"));
    let s = summarize(std::slice::from_ref(&run)).unwrap();
    for row in &s.rows {
        let last = last_row(&run.join("seed-0").join(&row.arm).join("metrics.csv"));
        assert_eq!(row.accuracy.median, last.eval_accuracy);
        assert_eq!((row.accuracy.min, row.accuracy.max), (last.eval_accuracy, last.eval_accuracy));
        assert_eq!(row.mean_length.median, last.mean_length);
    }
    let teacher = s.rows.iter().find(|r| r.arm == "teacher-copy-reverse").unwrap();
    let opd = s.rows.iter().find(|r| r.arm == "opd").unwrap();
    assert_eq!(opd.delta_teacher, Some(opd.accuracy.median - teacher.accuracy.median));
}

#[test]
fn summary_over_three_seeds_reports_median_and_range() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_tiny(dir.path(), &tiny_config("rl-teacher", "1", "0, 1, 2"));
    let s = summarize(std::slice::from_ref(&run)).unwrap();
    let row = s.rows.iter().find(|r| r.arm == "teacher-copy-reverse").unwrap();
    let mut accs: Vec<f64> = (0..3)
        .map(|k| last_row(&run.join(format!("seed-{k}/teacher-copy-reverse/metrics.csv"))).eval_accuracy)
        .collect();
    accs.sort_by(f64::total_cmp);
    assert_eq!(row.seeds, vec![0, 1, 2]);
    assert_eq!((row.accuracy.min, row.accuracy.median, row.accuracy.max), (accs[0], accs[1], accs[2]));

    let out = opdlab(&["summarize", run.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("teacher-copy-reverse"));
}

#[test]
fn run_directories_are_never_reused() {
    let dir = tempfile::tempdir().unwrap();
    let text = tiny_config("rl-teacher", "1", "0");
    let a = run_tiny(dir.path(), &text);
    let b = run_tiny(dir.path(), &text);
    assert_ne!(a, b);
    assert!(b.file_name().unwrap().to_str().unwrap().ends_with("-1"));
    assert_eq!(std::fs::read(a.join("config.cfg")).unwrap(), text.as_bytes());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, tiny_config("rl-teacher", "1", "0").replace("log_every = 5", "log_evry = 5")).unwrap();
    let out = opdlab(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains(":5:") && err.contains("log_evry"), "{err}");

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(opdlab(&["plot", empty.to_str().unwrap()], dir.path()).status.code(), Some(3));
    assert_eq!(opdlab(&["summarize", empty.to_str().unwrap()], dir.path()).status.code(), Some(3));
    assert_eq!(opdlab(&["frobnicate"], dir.path()).status.code(), Some(2));

    let out = opdlab(&["verify"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().lines().all(|l| l.starts_with("PASS")));
}
