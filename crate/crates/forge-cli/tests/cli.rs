//! End-to-end tests of the `forge` binary: verbs, exit codes, determinism,
//! and manifest round-trips.

use forge_core::jsonl;
use forge_core::model::{ArgumentValue, FunctionCall, FunctionSpec, ParameterSpec, Sample, TaskKind};
use std::path::Path;
use std::process::{Command, Output};

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(args)
        .output()
        .expect("forge binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn sample(id: &str, dataset: &str) -> Sample {
    Sample {
        id: id.into(),
        task: TaskKind::Chaining,
        source_dataset: dataset.into(),
        library: vec![FunctionSpec::new("get_weather", "Get the weather.")
            .with_param(ParameterSpec::new("city", "The city."))],
        query: Some(format!("weather for {id}?")),
        conversation: None,
        partial_calls: None,
        gold_calls: Some(vec![
            FunctionCall::new("get_weather").with_arg("city", ArgumentValue::text(id))
        ]),
        gold_response: None,
    }
}

fn write_dataset(path: &Path, n: usize, dataset: &str) {
    let samples: Vec<Sample> = (0..n).map(|i| sample(&format!("s{i}"), dataset)).collect();
    jsonl::write_samples(path, &samples).unwrap();
}

#[test]
fn prompt_renders_byte_exact_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_dataset(&data, 2, "SeqSGD");

    let out = forge(&["prompt", "--data", data.to_str().unwrap(), "--id", "s1"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let expected =
        forge_core::mixture::render_sample_prompt(&sample("s1", "SeqSGD")).unwrap();
    assert_eq!(out.stdout, expected.as_bytes(), "prompt must be byte-exact");
    assert!(stdout(&out).ends_with("ASSISTANT: "));

    let missing = forge(&["prompt", "--data", data.to_str().unwrap(), "--id", "nope"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn ingest_simple_qa_produces_canonical_samples() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("raw.jsonl");
    std::fs::write(
        &input,
        r#"{"id": "q1", "query": "weather in SF", "functions": [{"name": "get_weather", "description": "", "arguments": {"city": {"description": ""}}}], "answer_calls": [{"name": "get_weather", "arguments": {"city": "SF"}}]}
"#,
    )
    .unwrap();
    let output = dir.path().join("canonical.jsonl");
    let out = forge(&[
        "ingest",
        "--input",
        input.to_str().unwrap(),
        "--source-format",
        "simple-qa",
        "--output",
        output.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let samples = jsonl::read_samples(&output).unwrap();
    assert_eq!(samples.len(), 1);
    assert_eq!(samples[0].task, TaskKind::Chaining);
}

#[test]
fn derive_expands_each_source_sample() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_dataset(&data, 3, "SeqSGD");
    let output = dir.path().join("derived.jsonl");
    let out = forge(&[
        "derive",
        "--data",
        data.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let derived = jsonl::read_samples(&output).unwrap();
    // Per single-call sample: 1 name-detection + 2 next-best + 1 param-value.
    assert_eq!(derived.len(), 3 * 4);
}

#[test]
fn mix_with_fixed_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    let mut samples: Vec<Sample> = (0..10).map(|i| sample(&format!("a{i}"), "SeqSGD")).collect();
    samples.extend((0..10).map(|i| sample(&format!("b{i}"), "Glaive-V2")));
    jsonl::write_samples(&data, &samples).unwrap();

    let config = dir.path().join("mix.json");
    std::fs::write(
        &config,
        r#"{"total": 12, "seed": 42, "entries": [{"instruction_name": "Function Chaining", "datasets": {"SeqSGD": 2, "Glaive-V2": 3}, "weight": 1}]}"#,
    )
    .unwrap();

    let run = |out_name: &str| -> Vec<u8> {
        let output = dir.path().join(out_name);
        let out = forge(&[
            "mix",
            "--config",
            config.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--output",
            output.to_str().unwrap(),
            "--seed",
            "42",
        ]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(&output).unwrap()
    };
    let first = run("mix1.jsonl");
    let second = run("mix2.jsonl");
    assert_eq!(first, second, "same seed must give byte-identical output");
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 12);

    // A different seed draws a different mixture.
    let output = dir.path().join("mix3.jsonl");
    let out = forge(&[
        "mix",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--seed",
        "43",
    ]);
    assert!(out.status.success());
    assert_ne!(std::fs::read(&output).unwrap(), first);
}

#[test]
fn eval_scores_predictions_and_score_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_dataset(&data, 3, "SeqSGD");

    // Perfect prediction for s0, wrong name for s1, garbage for s2.
    let predictions = dir.path().join("preds.jsonl");
    std::fs::write(
        &predictions,
        concat!(
            r#"{"id": "s0", "output": "<function_call> {\"name\": \"get_weather\", \"arguments\": {\"city\": \"s0\"}}"}"#, "\n",
            r#"{"id": "s1", "output": "<function_call> {\"name\": \"wrong_fn\", \"arguments\": {}}"}"#, "\n",
            r#"{"id": "s2", "output": "total garbage"}"#, "\n",
        ),
    )
    .unwrap();

    let manifest_dir = dir.path().join("run1");
    let out = forge(&[
        "eval",
        "--data",
        data.to_str().unwrap(),
        "--predictions",
        predictions.to_str().unwrap(),
        "--out",
        manifest_dir.to_str().unwrap(),
        "--format",
        "md",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let table = stdout(&out);
    assert!(table.contains("| dataset"), "markdown table expected:\n{table}");
    assert!(table.contains("SeqSGD"));

    for file in ["config.json", "samples.jsonl", "raw_outputs.jsonl", "report.json"] {
        assert!(manifest_dir.join(file).exists(), "{file} missing");
    }

    // Re-scoring the manifest reproduces report.json byte-for-byte.
    let before = std::fs::read(manifest_dir.join("report.json")).unwrap();
    let rescore = forge(&["score", "--manifest", manifest_dir.to_str().unwrap(), "--format", "json"]);
    assert!(rescore.status.success());
    let after = std::fs::read(manifest_dir.join("report.json")).unwrap();
    assert_eq!(before, after, "re-scoring must be byte-identical");
    assert_eq!(stdout(&rescore).trim_end().as_bytes(), &after[..]);
}

#[test]
fn format_flag_switches_between_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_dataset(&data, 1, "SeqSGD");
    let predictions = dir.path().join("preds.jsonl");
    std::fs::write(&predictions, "{\"id\": \"s0\", \"output\": \"<no_function_call>\"}\n").unwrap();

    let csv = forge(&[
        "eval",
        "--data", data.to_str().unwrap(),
        "--predictions", predictions.to_str().unwrap(),
        "--format", "csv",
    ]);
    assert!(csv.status.success());
    assert!(stdout(&csv).starts_with("dataset,n,func_p,func_r,func_f1,arg_f1,"));

    let json = forge(&[
        "eval",
        "--data", data.to_str().unwrap(),
        "--predictions", predictions.to_str().unwrap(),
        "--format", "json",
    ]);
    assert!(json.status.success());
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert!(parsed["datasets"]["SeqSGD"]["n"].is_number());
}

#[test]
fn exit_codes_distinguish_validation_from_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_dataset(&data, 2, "SeqSGD");

    // Missing prediction for s1: validation error, exit 1.
    let predictions = dir.path().join("preds.jsonl");
    std::fs::write(&predictions, "{\"id\": \"s0\", \"output\": \"x\"}\n").unwrap();
    let out = forge(&[
        "eval",
        "--data", data.to_str().unwrap(),
        "--predictions", predictions.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("s1"));

    // Nonexistent data file: I/O error, exit 2.
    let out = forge(&[
        "eval",
        "--data", "/nonexistent/data.jsonl",
        "--predictions", predictions.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn strict_parse_flag_raises_the_failure_rate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_dataset(&data, 1, "SeqSGD");
    let predictions = dir.path().join("preds.jsonl");
    // Single quotes: repairable leniently, fatal strictly.
    std::fs::write(
        &predictions,
        "{\"id\": \"s0\", \"output\": \"<function_call> {'name': 'get_weather', 'arguments': {}}\"}\n",
    )
    .unwrap();

    let failure_rate = |extra: &[&str]| -> f64 {
        let mut args = vec![
            "eval",
            "--data", data.to_str().unwrap(),
            "--predictions", predictions.to_str().unwrap(),
            "--format", "json",
        ];
        args.extend_from_slice(extra);
        let out = forge(&args);
        assert!(out.status.success());
        let parsed: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        parsed["parse_failure_rate"].as_f64().unwrap()
    };
    assert_eq!(failure_rate(&[]), 0.0);
    assert_eq!(failure_rate(&["--strict-parse"]), 1.0);
}

#[test]
fn predict_in_file_mode_builds_a_scoreable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_dataset(&data, 2, "SeqSGD");
    let predictions = dir.path().join("preds.jsonl");
    std::fs::write(
        &predictions,
        concat!(
            r#"{"id": "s0", "output": "<function_call> {\"name\": \"get_weather\", \"arguments\": {\"city\": \"s0\"}}"}"#, "\n",
            r#"{"id": "s1", "output": "<function_call> {\"name\": \"get_weather\", \"arguments\": {\"city\": \"s1\"}}"}"#, "\n",
        ),
    )
    .unwrap();

    let manifest_dir = dir.path().join("run");
    let out = forge(&[
        "predict",
        "--data", data.to_str().unwrap(),
        "--predictions", predictions.to_str().unwrap(),
        "--out", manifest_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(!manifest_dir.join("report.json").exists(), "predict must not score");

    let score = forge(&["score", "--manifest", manifest_dir.to_str().unwrap(), "--format", "json"]);
    assert!(score.status.success(), "stderr: {}", String::from_utf8_lossy(&score.stderr));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&score)).unwrap();
    assert_eq!(parsed["average"]["func_f1"].as_f64(), Some(1.0));
    assert_eq!(parsed["parse_failure_rate"].as_f64(), Some(0.0));
    assert!(manifest_dir.join("report.json").exists());
}
