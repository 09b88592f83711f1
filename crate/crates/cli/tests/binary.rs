mod common;

use std::process::Command;

use crag::query::{run_query, QuerySession};
use crag::stages;
use crag_core::pipeline::Method;

fn crag(dir: &std::path::Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_crag"))
        .arg("--config")
        .arg(dir.join("crag.toml"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn full_run_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    common::workspace(dir.path());

    let out = crag(dir.path(), &["evaluate", "--questions", common::fixture("questions.txt").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("crag ingest"));
    assert!(out.stdout.is_empty());

    let out = crag(dir.path(), &["ingest"]);
    assert!(out.status.success());
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["product_count"], 2);

    assert!(crag(dir.path(), &["embed"]).status.success());
    let out = crag(dir.path(), &["--seed", "9", "build", "--method", "crag"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("rebuilt 2"));
    let out = crag(dir.path(), &["--seed", "9", "build", "--method", "crag"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rebuilt 0"));
    assert!(crag(dir.path(), &["build", "--method", "RAG"]).status.success());

    let out = crag(dir.path(), &["evaluate", "--questions", common::fixture("questions.txt").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 2 + 4);

    let out = crag(dir.path(), &["build", "--method", "graph"]);
    assert!(!out.status.success());
}

#[test]
fn query_loop_answers_and_switches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::load(dir.path());
    stages::ingest(&cfg).unwrap();
    stages::build(&cfg, Method::Rag, false).unwrap();

    let input = ":product Budget Tab 8\n:method rag\nIs it good?\n:method crag\nIs it good?\n:model nope\n:quit\nignored?\n";
    let session = QuerySession {
        product: None,
        method: Method::Crag,
        model: "mock-a".into(),
    };
    let mut out = Vec::new();
    run_query(&cfg, session, input.as_bytes(), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("- Good tablet for reading. Text is crisp."), "{text}");
    assert!(text.contains("[RAG mock-a |"), "{text}");
    assert!(text.contains("error: product `Budget Tab 8` has no CRAG knowledge"), "{text}");
    assert!(text.contains("`nope`"), "{text}");
    assert!(!text.contains("ignored"));
}
