use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicU32, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::tokens::{builtin_token_count, prefix_end_after_tokens};

pub const DEFAULT_SUMMARY_BUDGET: usize = 80;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptKind {
    Summarization,
    QuestionAnswering,
    Freeform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
    pub model: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
    pub kind: PromptKind,
    /// Template bindings the prompt was rendered from.
    pub bindings: BTreeMap<String, String>,
    /// Assigned by the gateway when empty.
    pub correlation_id: String,
}

impl ChatRequest {
    pub fn freeform(prompt: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            model: model.into(),
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            kind: PromptKind::Freeform,
            bindings: BTreeMap::new(),
            correlation_id: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub model: String,
    pub usage: Option<Usage>,
    pub correlation_id: String,
    /// Attempts the gateway needed; 1 when called without retries.
    pub attempts: u32,
    /// Generation time reported by the backend itself, if it reports one.
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// Worth retrying: connection failures, timeouts, 5xx, 429.
    #[error("transport: {0}")]
    Transport(String),
    #[error("refused: {0}")]
    Refusal(String),
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> String;

    /// Model name placed in requests.
    fn model(&self) -> String {
        self.id()
    }

    /// Wrap question-answering prompts in instruction delimiters.
    fn inst_wrap(&self) -> bool {
        false
    }

    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

/// Deterministic offline model.
///
/// Summaries are the first sentence of every distinct review, in order,
/// truncated to a token budget. Answers are the first three non-empty lines
/// of the knowledge as bullet points.
#[derive(Debug, Clone)]
pub struct MockBackend {
    model: String,
    budget: usize,
}

impl MockBackend {
    pub fn new(model: impl Into<String>, budget: usize) -> Self {
        Self {
            model: model.into(),
            budget: budget.max(1),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn summarize(&self, bullets: &str) -> String {
        let bullets = split_bullets(bullets);
        let mut seen = HashSet::new();
        let mut out = String::new();
        let mut used = 0;
        for sentence in bullets.iter().map(|b| first_sentence_of(b)) {
            if !seen.insert(sentence) {
                continue;
            }
            let cost = builtin_token_count(sentence);
            if used + cost > self.budget {
                if out.is_empty() {
                    out.push_str(sentence[..prefix_end_after_tokens(sentence, self.budget)].trim_end());
                }
                break;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(sentence);
            used += cost;
        }
        out
    }

    pub fn answer(knowledge: &str) -> String {
        knowledge
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .take(3)
            .map(|l| format!("- {}", l.strip_prefix("- ").unwrap_or(l).trim_start()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Splits `- `-prefixed bullet lines; lines without the prefix continue the
/// previous bullet.
fn split_bullets(text: &str) -> Vec<String> {
    let mut bullets: Vec<String> = Vec::new();
    for line in text.lines() {
        match line.strip_prefix("- ") {
            Some(rest) => bullets.push(rest.to_string()),
            None => match bullets.last_mut() {
                Some(last) => {
                    last.push('\n');
                    last.push_str(line);
                }
                None if !line.trim().is_empty() => bullets.push(line.to_string()),
                None => {}
            },
        }
    }
    bullets
}

/// Text up to and including the first `.`, `!` or `?` that ends the text or
/// is followed by whitespace.
fn first_sentence_of(text: &str) -> &str {
    let text = text.trim();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            match chars.peek() {
                None => return text,
                Some((_, next)) if next.is_whitespace() => return &text[..end],
                _ => {}
            }
        }
    }
    text
}

impl ChatBackend for MockBackend {
    fn id(&self) -> String {
        format!("mock:{}(budget={})", self.model, self.budget)
    }

    fn model(&self) -> String {
        self.model.clone()
    }

    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let text = match request.kind {
            PromptKind::Summarization => {
                let reviews = request
                    .bindings
                    .get("PRODUCT_REVIEWS")
                    .ok_or_else(|| BackendError::Refusal("no reviews bound".into()))?;
                self.summarize(reviews)
            }
            PromptKind::QuestionAnswering => {
                let knowledge = request
                    .bindings
                    .get("KNOWLEDGE")
                    .ok_or_else(|| BackendError::Refusal("no knowledge bound".into()))?;
                Self::answer(knowledge)
            }
            PromptKind::Freeform => request.prompt.lines().next().unwrap_or("").to_string(),
        };
        let usage = Usage {
            prompt_tokens: builtin_token_count(&request.prompt) as u64,
            completion_tokens: builtin_token_count(&text) as u64,
        };
        Ok(ChatResponse {
            text,
            model: self.model.clone(),
            usage: Some(usage),
            correlation_id: request.correlation_id.clone(),
            attempts: 1,
            latency_ms: Some(0),
        })
    }
}

type Handler = dyn Fn(&ChatRequest, u32) -> Result<ChatResponse, BackendError> + Send + Sync;

/// Backend driven by a closure that receives the request and a 1-based call
/// counter. Handy for scripting failures.
pub struct FnBackend {
    id: String,
    calls: AtomicU32,
    handler: Box<Handler>,
}

impl FnBackend {
    pub fn new(
        id: impl Into<String>,
        handler: impl Fn(&ChatRequest, u32) -> Result<ChatResponse, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            calls: AtomicU32::new(0),
            handler: Box::new(handler),
        }
    }

    /// Fails with a transport error on the first `failures` calls, then
    /// delegates to `inner`.
    pub fn flaky(failures: u32, inner: MockBackend) -> Self {
        Self::new(format!("flaky({failures})"), move |req, call| {
            if call <= failures {
                Err(BackendError::Transport(format!("scripted failure {call}")))
            } else {
                inner.chat(req)
            }
        })
    }

    pub fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for FnBackend {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        (self.handler)(request, call)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bullets(items: &[&str]) -> String {
        items.iter().map(|i| format!("- {i}")).collect::<Vec<_>>().join("\n")
    }

    #[test]
    fn first_sentence_rules() {
        assert_eq!(first_sentence_of("Great phone. Battery ok."), "Great phone.");
        assert_eq!(first_sentence_of("Version 2.0 rocks! yes"), "Version 2.0 rocks!");
        assert_eq!(first_sentence_of("no terminator"), "no terminator");
        assert_eq!(first_sentence_of("  Ends here.  "), "Ends here.");
    }

    #[test]
    fn distinct_first_sentences() {
        let mock = MockBackend::new("m", 80);
        let items = [
            "Battery lasts. Day one.",
            "Battery lasts. Day two.",
            "Screen is bright. Love it.",
            "Battery lasts.",
            "Camera is blurry.",
            "Screen is bright.",
            "Shipping was slow. Box dented.",
            "Camera is blurry. Night shots bad.",
            "Shipping was slow.",
            "Battery lasts. Week three.",
        ];
        let s = mock.summarize(&bullets(&items));
        assert_eq!(
            s,
            "Battery lasts. Screen is bright. Camera is blurry. Shipping was slow."
        );
    }

    #[test]
    fn duplicate_only_cluster() {
        let mock = MockBackend::new("m", 80);
        assert_eq!(mock.summarize(&bullets(&["Same. a", "Same. b", "Same."])), "Same.");
    }

    #[test]
    fn budget_is_respected() {
        let mock = MockBackend::new("m", 5);
        assert_eq!(mock.summarize(&bullets(&["one two.", "three four five."])), "one two.");
        let long = mock.summarize(&bullets(&["a b c d e f g h."]));
        assert_eq!(long, "a b c d e");
        assert!(builtin_token_count(&long) <= 5);
    }

    #[test]
    fn multiline_review_is_one_bullet() {
        let b = split_bullets("- first line\nsecond line\n- next");
        assert_eq!(b, vec!["first line\nsecond line".to_string(), "next".to_string()]);
    }

    #[test]
    fn answers_take_three_lines() {
        assert_eq!(MockBackend::answer("alpha\nbeta"), "- alpha\n- beta");
        assert_eq!(
            MockBackend::answer("- a\n\n- b\nc\nd"),
            "- a\n- b\n- c"
        );
    }
}
