use std::path::Path;
use std::process::{Command, Output};

const QUICK: &[&str] = &[
    "--set",
    "gp.max_generations=3",
    "--set",
    "gp.stagnation_patience=2",
    "--set",
    "gp.population_size=6",
    "--set",
    "gp.tournament_size=3",
    "--set",
    "gp.inner_de_budget=40",
    "--set",
    "de.max_evaluations=400",
    "--set",
    "mlp.max_iterations=50",
];

fn fntree(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fntree"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--seed", "3", "--out", "."];
    args.extend_from_slice(extra);
    let out = fntree(&args, dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let lines = data_lines(&dir.path().join("synthetic.csv"));
    assert_eq!(lines.len(), 379);
    assert_eq!(lines[0], "true_density,d50,granule_size,shoe_speed,mass");

    synth(dir.path(), &["--set", "synth.repeats=1"]);
    assert_eq!(data_lines(&dir.path().join("synthetic.csv")).len(), 127);
}

#[test]
fn synth_is_reproducible_and_echoes_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), &[]);
    synth(b.path(), &[]);
    let fa = std::fs::read_to_string(a.path().join("synthetic.csv")).unwrap();
    let fb = std::fs::read_to_string(b.path().join("synthetic.csv")).unwrap();
    assert_eq!(fa, fb);
    assert!(fa.starts_with("# fntree synth\n"));
    assert!(fa.contains("# seed = 3"));
    assert!(!fa.contains("\n# seed = 0\n"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(fntree(&["train"], d).status.code(), Some(1));
    assert_eq!(fntree(&["bogus"], d).status.code(), Some(1));
    assert_eq!(fntree(&["synth", "--set", "gp.populaton_size=3"], d).status.code(), Some(1));
    assert_eq!(fntree(&["synth", "--set", "gp.seed=3"], d).status.code(), Some(1));
    assert_eq!(fntree(&["synth", "--set", "noequals"], d).status.code(), Some(1));
    assert_eq!(fntree(&["--help"], d).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(fntree(&["train", "--data", "missing.csv"], d).status.code(), Some(2));
    std::fs::write(d.join("bad.csv"), "a,b,y\n1,2,3\n1,x,3\n").unwrap();
    let out = fntree(&["train", "--data", "bad.csv"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    std::fs::write(d.join("ok.csv"), "a,b,y\n1,2,3\n2,3,4\n").unwrap();
    let out = fntree(&["train", "--data", "ok.csv", "--target", "nope"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--set", "synth.repeats=1"]);
    let mut args = vec!["train", "--data", "synthetic.csv", "--out", "run"];
    args.extend_from_slice(QUICK);
    let out = fntree(&args, d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(d.join("run/model.fnt")).unwrap();
    let model = fntree::FntModel::from_text(&text).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/train_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["complexity"], model.complexity());
    assert_eq!(summary["summary"]["target"], "mass");
    assert_eq!(summary["config"]["gp"]["max_generations"], 3);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&format!("complexity   {}", model.complexity())));

    let log = data_lines(&d.join("run/generations.csv"));
    assert_eq!(log[0], "generation,best_rmse,mean_rmse,best_complexity");
    assert!(log.len() >= 2 && log.len() <= 5);
}

#[test]
fn flags_override_set_which_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.toml"), "seed = 1\nsynth.repeats = 2\ncv.scheme = \"5x2fcv\"\n").unwrap();
    let out = fntree(
        &["synth", "--config", "c.toml", "--set", "synth.repeats=1", "--set", "seed=2", "--seed", "7", "--out", "."],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(d.join("synthetic.csv")).unwrap();
    assert!(text.contains("# seed = 7"));
    assert!(text.contains("# repeats = 1"));
    assert!(text.contains("# scheme = \"5x2fcv\""));
    assert_eq!(data_lines(&d.join("synthetic.csv")).len(), 127);
}

#[test]
fn cv_with_baseline_writes_both_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--set", "synth.repeats=1"]);
    let mut args = vec!["cv", "--data", "synthetic.csv", "--scheme", "5x2fcv", "--baseline", "mlp", "--out", "cv"];
    args.extend_from_slice(QUICK);
    let out = fntree(&args, d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("cv/cv_report.json")).unwrap()).unwrap();
    let reports = json["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for r in reports {
        assert_eq!(r["scheme"], "5x2fcv");
        assert_eq!(r["per_fold"].as_array().unwrap().len(), 10);
    }
    // every row is predicted once per repetition
    let preds = data_lines(&d.join("cv/predictions_fnt.csv"));
    assert_eq!(preds.len(), 1 + 5 * 126);
    assert!(d.join("cv/predictions_mlp.csv").exists());
}

#[test]
fn features_writes_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--set", "synth.repeats=1"]);
    let mut args = vec!["features", "--data", "synthetic.csv", "--models", "3", "--out", "f"];
    args.extend_from_slice(QUICK);
    let out = fntree(&args, d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(data_lines(&d.join("f/models.csv")).len(), 4);
    let individual = data_lines(&d.join("f/features_individual.csv"));
    assert_eq!(individual.len(), 5);
    assert!(d.join("f/features_subset.csv").exists());
    assert!(d.join("f/features_report.txt").exists());
}
