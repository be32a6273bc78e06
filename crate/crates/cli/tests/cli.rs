use std::path::Path;
use std::process::{Command, Output};

fn huepair(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_huepair"))
        .args(args)
        .current_dir(dir)
        .env_remove("HUEPAIR_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn config(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path.join("config.json")).unwrap()).unwrap()
}

fn small_set(dir: &Path) {
    assert_eq!(code(&huepair(dir, &["sources", "--count", "3", "--size", "128x160", "--out", "src"])), 0);
    let o = huepair(
        dir,
        &["synth", "--sources", "src", "--recipe", "png", "--angles", "120", "--crop", "128x160", "--box-size", "64", "--out", "set"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_and_version_succeed() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&huepair(d.path(), &["--help"])), 0);
    assert_eq!(code(&huepair(d.path(), &["--version"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&huepair(d.path(), &["frobnicate"])), 1);
    assert_eq!(code(&huepair(d.path(), &["synth", "--sources", "x", "--recipe", "tiff"])), 1);
    assert_eq!(code(&huepair(d.path(), &["sources", "--size", "12by4"])), 1);
    assert_eq!(code(&huepair(d.path(), &["synth", "--sources", "x", "--recipe", "png", "--angles", "30:10:5"])), 1);
    assert_eq!(code(&huepair(d.path(), &["localize", "--image", "a.png", "--threshold", "fixed:2"])), 1);
    assert_eq!(code(&huepair(d.path(), &["localize", "--image", "a.png"])), 1, "siamese without a model");
}

#[test]
fn default_output_goes_under_runs() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&huepair(d.path(), &["sources", "--count", "1", "--size", "32x32"])), 0);
    let out = d.path().join("runs/sources");
    assert!(out.join("source-0000.png").exists());
    let c = config(&out);
    assert_eq!(c["command"], "sources");
    assert_eq!(c["seed"], 7);
    assert_eq!(c["args"]["count"], 1);
}

#[test]
fn output_root_follows_the_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_huepair"))
        .args(["--seed", "3", "sources", "--count", "1", "--size", "32x32"])
        .current_dir(d.path())
        .env("HUEPAIR_OUT", "elsewhere")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(config(&d.path().join("elsewhere/sources"))["seed"], 3);
}

#[test]
fn angle_ranges_expand_inclusively() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&huepair(d.path(), &["sources", "--count", "2", "--size", "64x64", "--out", "src"])), 0);
    let o = huepair(
        d.path(),
        &["synth", "--sources", "src", "--recipe", "png", "--angles", "90:150:30", "--crop", "64x64", "--box-size", "32", "--out", "set"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(config(&d.path().join("set"))["args"]["angles"], serde_json::json!([90, 120, 150]));
}

#[test]
fn missing_predictions_exit_two() {
    let d = tempfile::tempdir().unwrap();
    small_set(d.path());
    std::fs::create_dir(d.path().join("empty")).unwrap();
    let o = huepair(d.path(), &["eval", "--manifest", "set/manifest.jsonl", "--predictions", "empty", "--out", "ev"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("incomplete"));
    assert_eq!(code(&huepair(d.path(), &["eval", "--manifest", "nope.jsonl", "--predictions", "empty"])), 2);
}

#[test]
fn choi_run_scores_every_case() {
    let d = tempfile::tempdir().unwrap();
    small_set(d.path());
    assert_eq!(code(&huepair(d.path(), &["localize", "--method", "choi", "--manifest", "set/manifest.jsonl", "--out", "pred"])), 0);
    let o = huepair(d.path(), &["eval", "--manifest", "set/manifest.jsonl", "--predictions", "pred", "--out", "ev"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = std::fs::read_to_string(d.path().join("ev/report.jsonl")).unwrap();
    assert!(lines.lines().count() >= 2);
    assert_eq!(code(&huepair(d.path(), &["render", "--manifest", "set/manifest.jsonl", "--predictions", "pred", "--out", "panels"])), 0);
    assert_eq!(std::fs::read_dir(d.path().join("panels")).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")
    }).count(), 3);
}
