use std::path::Path;
use std::process::{Command, Output};

fn caisson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_caisson"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = caisson(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus.jsonl");
    let config = d.join("run.toml");
    let model = d.join("model.bin");
    let qa = d.join("qa.jsonl");
    std::fs::write(
        &config,
        "[som]\nn = 4\nepochs = 5\n\n[provider]\nkind = \"deterministic\"\ndim = 32\nseed = 1\n",
    )
    .unwrap();

    ok(&["gen-notes", "--n", "300", "--seed", "3", "--out", s(&corpus)]);
    assert!(d.join("corpus.manifest.json").exists());

    let log = ok(&["train", "--config", s(&config), "--corpus", s(&corpus), "--out", s(&model)]);
    assert_eq!(log.lines().filter(|l| l.starts_with("epoch")).count(), 5);
    let trace = std::fs::read_to_string(d.join("model.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 6);

    let json = ok(&["query", "--model", s(&model), "--q", "Did AAPL and MSFT see margin expansion?", "--k", "3", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let hits = v["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 3);
    assert!(hits[0]["source_paths"].as_array().is_some());
    assert!(hits[0]["ticker_score"].is_number());

    ok(&["gen-qa", "--corpus", s(&corpus), "--single", "20", "--multi", "20", "--seed", "4", "--out", s(&qa)]);
    let out = d.join("eval");
    ok(&["eval", "--model", s(&model), "--corpus", s(&corpus), "--qa", s(&qa), "--out", s(&out)]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["questions"], 40);
    assert!(report["run_config"].as_str().unwrap().contains("[som]"));
    assert!(out.join("records.jsonl").exists() && out.join("by_ticker_count.csv").exists());

    let viz = d.join("viz");
    ok(&["viz-export", "--model", s(&model), "--corpus", s(&corpus), "--out", s(&viz)]);
    let rows = std::fs::read_to_string(viz.join("som1_nodes.csv")).unwrap();
    assert_eq!(rows.lines().count(), 17);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = caisson(&["query", "--model", s(&d.join("nope.bin")), "--q", "x"]);
    assert_eq!(missing.status.code(), Some(3));

    let bad = d.join("bad.toml");
    std::fs::write(&bad, "[som]\nalpha0_som1 = 2.0\n").unwrap();
    let corpus = d.join("c.jsonl");
    ok(&["gen-notes", "--n", "50", "--out", s(&corpus)]);
    let invalid = caisson(&["train", "--config", s(&bad), "--corpus", s(&corpus), "--out", s(&d.join("m.bin"))]);
    assert_eq!(invalid.status.code(), Some(2));

    let infeasible = caisson(&["gen-qa", "--corpus", s(&corpus), "--single", "51", "--multi", "0", "--out", s(&d.join("q.jsonl"))]);
    assert_eq!(infeasible.status.code(), Some(4));
}
