use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn toolpref(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toolpref")).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn corpus(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus").join(name).display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_input_exits_2_and_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.jsonl");
    let o = toolpref(&["segment", "--in", "/nonexistent/t.jsonl", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stage segment failed"), "{}", stderr(&o));
}

#[test]
fn run_with_missing_corpus_exits_2_and_reports_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("pipeline.toml");
    std::fs::write(
        &config,
        "seed = 1\ntarget_n = 4\n[[inputs]]\nadapter = \"apigen\"\npath = \"missing.jsonl\"\n[[endpoints]]\nmodel_id = \"m\"\nbase_url = \"http://127.0.0.1:9/v1\"\n",
    )
    .unwrap();
    let o = toolpref(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("stage normalize failed"));
    let report = read_json(&dir.path().join("out/run_report.json"));
    assert_eq!(report["failed_stage"], "normalize");
    assert_eq!(report["status"], "failed");
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("pipeline.toml");
    std::fs::write(&config, "target_n = 4\ninputs = []\n").unwrap();
    let o = toolpref(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = toolpref(&["run", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_adapter_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let o = toolpref(&["normalize", "--source", "nope", "--in", &corpus("apigen.jsonl"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("presets"));
}

#[test]
fn normalize_and_segment_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();
    let o = toolpref(&[
        "normalize", "--source", "toolalpaca", "--in", &corpus("toolalpaca.jsonl"), "--out", &p("t.jsonl"), "--report", &p("ingest.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ingest = read_json(&dir.path().join("ingest.json"));
    assert_eq!(ingest["counts"]["toolalpaca"]["raw"], 10);
    assert_eq!(ingest["counts"]["toolalpaca"]["kept"], 10);

    let o = toolpref(&["segment", "--in", &p("t.jsonl"), "--out", &p("s.jsonl"), "--report", &p("seg.json")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let seg = read_json(&dir.path().join("seg.json"));
    assert_eq!(seg["input"], 30);
    assert_eq!(seg["output"], 29);
    assert_eq!(seg["dropped"]["tool_failure"], 1);
}

#[test]
fn bmds_with_too_small_pool_is_a_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.jsonl");
    std::fs::write(&pairs, "").unwrap();
    let out = dir.path().join("sampled.jsonl");
    let o = toolpref(&["bmds", "--pairs", pairs.to_str().unwrap(), "--n", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("stage bmds failed"));
}

#[test]
fn advantage_groups_consecutive_rewards() {
    let dir = tempfile::tempdir().unwrap();
    let rewards = dir.path().join("r.jsonl");
    std::fs::write(&rewards, "1\n0\n0\n0\n{\"reward\": 1}\n{\"reward\": 1}\n{\"reward\": 1}\n{\"reward\": 1}\n").unwrap();
    let out = dir.path().join("adv.jsonl");
    let o = toolpref(&["advantage", "--rewards", rewards.to_str().unwrap(), "--group-size", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<Value> = std::fs::read_to_string(&out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let a0 = rows[0]["advantages"][0].as_f64().unwrap();
    assert!((a0 - 3f64.sqrt()).abs() < 1e-12);
    assert!(rows[1]["advantages"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));

    let o = toolpref(&["advantage", "--rewards", rewards.to_str().unwrap(), "--group-size", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn render_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.jsonl");
    let row = |i: usize| {
        serde_json::json!({
            "id": format!("c{i}#0|a:0|b:0"), "context_id": format!("c{i}#0"), "source": "s",
            "context": [{"role": "user", "content": "q"}], "y_star": "", "y_plus": "good", "y_minus": "bad",
            "plus_model": "a", "minus_model": "b", "s_plus": 1.0, "s_minus": 0.0,
            "preference_intensity": 1.0, "complexity": 1, "bin_idx": 9,
        })
        .to_string()
    };
    std::fs::write(&pairs, (0..20).map(|i| row(i) + "\n").collect::<String>()).unwrap();
    let render = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let o = toolpref(&["render", "--pairs", pairs.to_str().unwrap(), "--mode", "no_think", "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    assert_eq!(render("5", "a.jsonl"), render("5", "b.jsonl"));
    assert_ne!(render("5", "a.jsonl"), render("6", "c.jsonl"));
}
