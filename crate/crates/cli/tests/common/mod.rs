#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use crag::AppConfig;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub const CONFIG: &str = r#"
summarizer = "summarizer"
qa_models = ["mock-a", "mock-b"]

[paths]
corpus_csv = "reviews.csv"

[embedder]
kind = "deterministic-test"
dimension = 128
seed = 5

[crag.clustering]
k = 4
seed = 3

[backends.summarizer]
kind = "mock"
model = "mock-summarizer"
summary_budget = 80

[backends.mock-a]
kind = "mock"
model = "mock-a"

[backends.mock-b]
kind = "mock"
model = "mock-b"

[[tokenizers]]
id = "builtin"
kind = "builtin-segmenter"

[[tokenizers]]
id = "approx"
kind = "plugged"
parameters = { chars_per_token = "4" }
"#;

/// Copies the review fixture into `dir`, writes the config next to it and
/// returns the config path.
pub fn workspace(dir: &Path) -> PathBuf {
    fs::copy(fixture("reviews.csv"), dir.join("reviews.csv")).unwrap();
    let path = dir.join("crag.toml");
    fs::write(&path, CONFIG).unwrap();
    path
}

pub fn load(dir: &Path) -> AppConfig {
    AppConfig::load(&workspace(dir)).unwrap()
}
