use std::path::Path;
use std::process::{Command, Output};

fn cotrain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cotrain"))
        .args(args)
        .output()
        .expect("spawn cotrain")
}

fn ok(args: &[&str]) -> String {
    let out = cotrain(args);
    assert!(
        out.status.success(),
        "cotrain {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn collect_generate_train_eval_and_diff() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("real.json"), ok(&["toyworld", "preset", "real"])).unwrap();
    std::fs::write(d.join("cousin.json"), ok(&["toyworld", "preset", "cousin"])).unwrap();

    ok(&["toyworld", "collect", "--config", p(&d.join("real.json")), "--n", "3", "--seed", "1", "--out", p(&d.join("real"))]);
    ok(&[
        "toyworld", "collect", "--config", p(&d.join("cousin.json")), "--n", "2", "--seed", "2",
        "--out", p(&d.join("src")), "--source", "dc",
    ]);
    let gen = ok(&[
        "mimicgen", "generate", "--sources", p(&d.join("src")), "--config", p(&d.join("cousin.json")),
        "--n", "4", "--seed", "3", "--out", p(&d.join("dc")), "--report", p(&d.join("report.json")),
    ]);
    assert!(gen.starts_with("4 demos"), "{gen}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["successes"], 4);

    let job = serde_json::json!({
        "real": [d.join("real")],
        "sim": [d.join("dc")],
        "alpha": 0.9,
        "train": { "steps": 30, "hidden": [8], "seed": 5 },
    });
    std::fs::write(d.join("job.json"), job.to_string()).unwrap();
    let trained = ok(&["policy", "train", "--config", p(&d.join("job.json")), "--out", p(&d.join("run"))]);
    assert_eq!(trained.lines().filter(|l| l.starts_with("step")).count(), 3);
    let eval = ok(&[
        "policy", "eval", "--checkpoint", p(&d.join("run/ckpt_3.bin")), "--world", p(&d.join("real.json")),
        "--episodes", "3", "--seed", "0",
    ]);
    let v: serde_json::Value = serde_json::from_str(&eval).unwrap();
    assert_eq!(v["step"], 30);
    assert!((0.0..=1.0).contains(&v["score"].as_f64().unwrap()));

    let table = ok(&["compose", "diff", "--a", p(&d.join("real")), "--b", p(&d.join("dc")), "--out", p(&d.join("delta.json"))]);
    assert_eq!(table.lines().count(), 9);
    let delta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("delta.json")).unwrap()).unwrap();
    assert!(delta["camera_translation_delta"].as_f64().unwrap() >= 0.0);
}

#[test]
fn experiment_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut cfg: serde_json::Value =
        serde_json::from_str(&ok(&["exp", "init", "--protocol", "ratio_sweep", "--name", "tiny"])).unwrap();
    cfg["n_real_demos"] = 3.into();
    cfg["n_dc_demos"] = 4.into();
    cfg["n_dc_sources"] = 2.into();
    cfg["eval_episodes"] = 2.into();
    cfg["seeds"] = serde_json::json!([0]);
    cfg["alpha_grid"] = serde_json::json!([0.0, 0.5]);
    cfg["train"]["steps"] = 20.into();
    cfg["train"]["hidden"] = serde_json::json!([4]);
    std::fs::write(d.join("exp.json"), cfg.to_string()).unwrap();
    let out = d.join("out");
    let run = ok(&["exp", "run", "--config", p(&d.join("exp.json")), "--out", p(&out)]);
    assert!(run.contains("alpha=0.5"));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("summary.json").exists() && out.join("timings.csv").exists());
    assert_eq!(ok(&["exp", "report", "--dir", p(&out)]), run);
}

#[test]
fn diverged_cells_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut cfg: serde_json::Value =
        serde_json::from_str(&ok(&["exp", "init", "--protocol", "mix_table"])).unwrap();
    cfg["n_real_demos"] = 2.into();
    cfg["n_dc_demos"] = 0.into();
    cfg["n_prior_demos"] = 0.into();
    cfg["eval_episodes"] = 1.into();
    cfg["seeds"] = serde_json::json!([0]);
    cfg["train"]["steps"] = 10.into();
    cfg["train"]["hidden"] = serde_json::json!([4]);
    cfg["train"]["learning_rate"] = 1e200.into();
    cfg["train"]["optimizer"] = serde_json::json!({ "kind": "sgd" });
    std::fs::write(d.join("exp.json"), cfg.to_string()).unwrap();
    let out = cotrain(&["exp", "run", "--config", p(&d.join("exp.json")), "--out", p(&d.join("out"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_inputs_are_reported() {
    let out = cotrain(&["exp", "init", "--protocol", "nope"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown protocol"));
    let out = cotrain(&["policy", "eval", "--checkpoint", "/nonexistent", "--world", "/nonexistent"]);
    assert_eq!(out.status.code(), Some(1));
}
