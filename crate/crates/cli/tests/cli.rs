use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sosc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sosc")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = sosc(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &TempDir, name: &str) -> String {
    std::fs::read_to_string(dir.path().join(name)).unwrap()
}

#[test]
fn generate_fit_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--preset", "nonstationary", "--seed", "3", "--out", "s.jsonl", "--truth", "t.json"]);
    ok(d, &["fit", "--input", "s.jsonl", "--model-out", "m.json", "--log", "log.csv"]);
    ok(d, &["eval", "--model", "m.json", "--input", "s.jsonl", "--truth", "t.json", "--out", "e.json"]);

    let log = read(&dir, "log.csv");
    assert!(log.starts_with("t,z,K,d_z,loss,s\n"));
    assert_eq!(log.lines().count(), 7501);
    let metrics: serde_json::Value = serde_json::from_str(&read(&dir, "e.json")).unwrap();
    for key in ["SS", "NMI", "mean_match_error", "K", "mean_dim", "wall_time_s"] {
        assert!(metrics.get(key).is_some(), "missing {key}");
    }
    assert_eq!(metrics["K"], 6);
}

#[test]
fn generation_and_fitting_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for tag in ["a", "b"] {
        ok(
            d,
            &[
                "generate",
                "--preset",
                "stationary",
                "--dim",
                "5",
                "--length",
                "600",
                "--seed",
                "9",
                "--out",
                &format!("{tag}.jsonl"),
            ],
        );
        ok(d, &["fit", "--input", &format!("{tag}.jsonl"), "--model-out", &format!("{tag}.json")]);
    }
    assert_eq!(read(&dir, "a.jsonl"), read(&dir, "b.jsonl"));
    assert_eq!(read(&dir, "a.json"), read(&dir, "b.json"));
}

#[test]
fn resumed_fit_equals_single_fit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--preset", "stationary", "--dim", "4", "--length", "900", "--seed", "2", "--out", "s.jsonl"]);
    let text = read(&dir, "s.jsonl");
    let lines: Vec<&str> = text.lines().collect();
    std::fs::write(d.join("head.jsonl"), lines[..400].join("\n")).unwrap();
    std::fs::write(d.join("tail.jsonl"), lines[400..].join("\n")).unwrap();
    ok(d, &["fit", "--input", "s.jsonl", "--model-out", "whole.json"]);
    ok(d, &["fit", "--input", "head.jsonl", "--model-out", "head.json"]);
    ok(d, &["fit", "--input", "tail.jsonl", "--resume", "head.json", "--model-out", "resumed.json"]);
    assert_eq!(read(&dir, "whole.json"), read(&dir, "resumed.json"));
}

#[test]
fn reaching_pipeline_writes_plan_and_shared_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"hyperparams":{"lambda":0.08,"lambda1":0.01,"lambda2":0.005,"lambda3":0.005,"sigma2":0.001,
            "b_m":0.05,"weight_mode":{"mode":"linear"},"kappa2":0.01,"s_max":200},"horizon":120}"#,
    )
    .unwrap();
    ok(d, &["generate", "--preset", "reaching-demos", "--seed", "0", "--out", "demos.jsonl"]);
    ok(d, &["generate", "--preset", "reaching-operator", "--seed", "1", "--out", "op.jsonl"]);
    ok(d, &["--config", "cfg.json", "fit", "--input", "demos.jsonl", "--model-out", "m.json"]);
    ok(
        d,
        &[
            "--config",
            "cfg.json",
            "plan",
            "--model",
            "m.json",
            "--start",
            "0,0,0,0",
            "--out-idx",
            "2,3",
            "--out",
            "p.csv",
        ],
    );
    ok(d, &["shared", "--model", "m.json", "--operator", "op.jsonl", "--out", "sh.csv"]);

    let plan = read(&dir, "p.csv");
    assert!(plan.starts_with("t,z,mu_0,mu_1,x_0,x_1,v_0,v_1\n"));
    assert_eq!(plan.lines().count(), 121);
    let shared = read(&dir, "sh.csv");
    assert!(shared.starts_with("t,op_0,op_1,mu_0,mu_1,x_0,x_1,v_0,v_1\n"));
    assert_eq!(shared.lines().count(), 191);
}

#[test]
fn combine_frames_requires_a_task_parameterized_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let frame = r#"{"a":[1.0,0.0,0.0,1.0],"b":[0.5,-0.5]}"#;
    let lines: Vec<String> = (0..60)
        .map(|t| {
            let x = if t < 30 { [0.01 * t as f64, 0.0] } else { [5.0, 0.02 * t as f64] };
            format!(r#"{{"t":{t},"x":[{},{}],"frames":[{frame}]}}"#, x[0], x[1])
        })
        .collect();
    std::fs::write(d.join("s.jsonl"), lines.join("\n")).unwrap();
    std::fs::write(d.join("frames.json"), format!("[{frame}]")).unwrap();
    ok(d, &["fit", "--input", "s.jsonl", "--frames", "1", "--model-out", "tp.json"]);
    ok(d, &["combine-frames", "--model", "tp.json", "--frames", "frames.json", "--out", "c.json"]);
    let docs: serde_json::Value = serde_json::from_str(&read(&dir, "c.json")).unwrap();
    assert!(!docs.as_array().unwrap().is_empty());
    assert_eq!(docs[0]["covariance"].as_array().unwrap().len(), 4);

    std::fs::write(d.join("plain.jsonl"), "{\"t\":0,\"x\":[1.0,2.0]}\n").unwrap();
    ok(d, &["fit", "--input", "plain.jsonl", "--model-out", "plain.json"]);
    assert_eq!(sosc(d, &["combine-frames", "--model", "plain.json", "--frames", "frames.json"]).status.code(), Some(1));
}

#[test]
fn exit_codes_distinguish_usage_data_and_numerics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(sosc(d, &["fit"]).status.code(), Some(1));
    assert_eq!(sosc(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(sosc(d, &["fit", "--input", "missing.jsonl", "--model-out", "m.json"]).status.code(), Some(2));

    std::fs::write(d.join("bad.jsonl"), "{\"t\":0,\"x\":[1.0,2.0]}\n{\"t\":1,\"x\":[1.0]}\n").unwrap();
    let out = sosc(d, &["fit", "--input", "bad.jsonl", "--model-out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    std::fs::write(d.join("one.jsonl"), "{\"t\":0,\"x\":[0.0,0.0]}\n").unwrap();
    ok(d, &["fit", "--input", "one.jsonl", "--model-out", "m.json"]);
    std::fs::write(d.join("r0.json"), r#"{"r":0.0}"#).unwrap();
    let out = sosc(
        d,
        &["--config", "r0.json", "plan", "--model", "m.json", "--start", "0,0", "--horizon", "5", "--out", "p.csv"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let out = sosc(d, &["plan", "--model", "m.json", "--start", "0,0,0", "--out", "p.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
