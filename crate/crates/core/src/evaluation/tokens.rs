//! Token counting. The builtin segmenter is a deterministic stand-in, not a
//! model of any production tokenizer; real tokenizers plug in through
//! [`Tokenizer`].

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::EvaluationError;

/// Splits `text` into maximal alphanumeric runs and single non-whitespace,
/// non-alphanumeric characters. Whitespace yields nothing.
pub fn segment(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            run_start.get_or_insert(i);
            continue;
        }
        if let Some(start) = run_start.take() {
            out.push(&text[start..i]);
        }
        if !c.is_whitespace() {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(start) = run_start {
        out.push(&text[start..]);
    }
    out
}

pub fn builtin_token_count(text: &str) -> usize {
    segment(text).len()
}

/// Byte offset just past the `n`-th builtin token, or the text length if it
/// has fewer tokens.
pub fn prefix_end_after_tokens(text: &str, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let tokens = segment(text);
    match tokens.get(n - 1) {
        Some(t) => t.as_ptr() as usize - text.as_ptr() as usize + t.len(),
        None => text.len(),
    }
}

pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

pub struct BuiltinSegmenter;

impl Tokenizer for BuiltinSegmenter {
    fn count(&self, text: &str) -> usize {
        builtin_token_count(text)
    }
}

/// Character-ratio estimate, the usual rule of thumb when a model's real
/// tokenizer is not available offline.
#[derive(Debug, Clone, Copy)]
pub struct CharRatioTokenizer {
    pub chars_per_token: f64,
}

impl Tokenizer for CharRatioTokenizer {
    fn count(&self, text: &str) -> usize {
        let chars = text.chars().count() as f64;
        (chars / self.chars_per_token.max(f64::MIN_POSITIVE)).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerKind {
    BuiltinSegmenter,
    Plugged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerSpec {
    pub id: String,
    pub kind: TokenizerKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

impl TokenizerSpec {
    pub fn builtin() -> Self {
        Self {
            id: "builtin".into(),
            kind: TokenizerKind::BuiltinSegmenter,
            parameters: BTreeMap::new(),
        }
    }

    pub fn plugged(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: TokenizerKind::Plugged,
            parameters: BTreeMap::new(),
        }
    }
}

/// Resolves plugged tokenizer ids to implementations.
#[derive(Default, Clone)]
pub struct TokenizerRegistry {
    plugged: HashMap<String, Arc<dyn Tokenizer>>,
}

impl TokenizerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, id: impl Into<String>, tokenizer: Arc<dyn Tokenizer>) {
        self.plugged.insert(id.into(), tokenizer);
    }

    /// Registers plugged specs that describe themselves through a
    /// `chars_per_token` parameter.
    pub fn register_from_specs(&mut self, specs: &[TokenizerSpec]) -> Result<(), EvaluationError> {
        for spec in specs.iter().filter(|s| s.kind == TokenizerKind::Plugged) {
            if let Some(raw) = spec.parameters.get("chars_per_token") {
                let chars_per_token: f64 = raw
                    .parse()
                    .ok()
                    .filter(|v: &f64| *v > 0.0)
                    .ok_or_else(|| EvaluationError::Tokenizer {
                        id: spec.id.clone(),
                        message: format!("bad chars_per_token `{raw}`"),
                    })?;
                self.register(spec.id.clone(), Arc::new(CharRatioTokenizer { chars_per_token }));
            }
        }
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.plugged.contains_key(id)
    }

    pub fn count(&self, text: &str, spec: &TokenizerSpec) -> Result<usize, EvaluationError> {
        match spec.kind {
            TokenizerKind::BuiltinSegmenter => Ok(builtin_token_count(text)),
            TokenizerKind::Plugged => self
                .plugged
                .get(&spec.id)
                .map(|t| t.count(text))
                .ok_or_else(|| EvaluationError::Tokenizer {
                    id: spec.id.clone(),
                    message: "tokenizer unavailable".into(),
                }),
        }
    }
}

pub fn count_tokens(
    text: &str,
    tokenizer: &TokenizerSpec,
    registry: &TokenizerRegistry,
) -> Result<usize, EvaluationError> {
    registry.count(text, tokenizer)
}
