use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::backend::{ChatRequest, PromptKind, DEFAULT_MAX_OUTPUT_TOKENS};
use super::{GatewayError, PromptTemplate};

/// The worked example shown to the summarizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneShotExample {
    pub question: String,
    pub answer: String,
}

impl Default for OneShotExample {
    fn default() -> Self {
        Self {
            question: "What is the overall opinion of customers about this product?".into(),
            answer: "Customers are broadly satisfied with the value and everyday performance \
                     of the product, while a recurring minority is frustrated by durability \
                     problems and uneven battery life."
                .into(),
        }
    }
}

fn bullet_list<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .map(|s| format!("- {}", s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn summarization_request<S: AsRef<str>>(
    reviews: &[S],
    oneshot: &OneShotExample,
    model: &str,
) -> Result<ChatRequest, GatewayError> {
    if reviews.is_empty() {
        return Err(GatewayError::Contract("summarization needs at least one review".into()));
    }
    if reviews
        .iter()
        .any(|r| r.as_ref().contains("[INST]") || r.as_ref().contains("[/INST]"))
    {
        tracing::warn!("review text contains instruction delimiters; passing through verbatim");
    }
    let bindings: BTreeMap<String, String> = [
        ("PRODUCT_REVIEWS", bullet_list(reviews)),
        ("ONESHOT_QUESTION", oneshot.question.clone()),
        ("ONESHOT_ANSWER", oneshot.answer.clone()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let prompt = PromptTemplate::summarization().render(&bindings)?;
    Ok(ChatRequest {
        prompt,
        model: model.to_string(),
        temperature: 0.0,
        max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        kind: PromptKind::Summarization,
        bindings,
        correlation_id: String::new(),
    })
}

/// Renders the question-answering prompt. With `inst_wrap` the prompt is
/// enclosed in `[INST] ... [/INST]` for instruction-tuned models that expect
/// it.
pub fn qa_request(
    knowledge: &str,
    question: &str,
    model: &str,
    inst_wrap: bool,
) -> Result<ChatRequest, GatewayError> {
    if knowledge.trim().is_empty() {
        return Err(GatewayError::Contract("knowledge is empty".into()));
    }
    if question.trim().is_empty() {
        return Err(GatewayError::Contract("question is empty".into()));
    }
    let bindings: BTreeMap<String, String> = [
        ("KNOWLEDGE".to_string(), knowledge.to_string()),
        ("USER_QUESTION".to_string(), question.to_string()),
    ]
    .into_iter()
    .collect();
    let mut prompt = PromptTemplate::question_answering().render(&bindings)?;
    if inst_wrap {
        prompt = format!("[INST] {prompt} [/INST]");
    }
    Ok(ChatRequest {
        prompt,
        model: model.to_string(),
        temperature: 0.0,
        max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        kind: PromptKind::QuestionAnswering,
        bindings,
        correlation_id: String::new(),
    })
}
