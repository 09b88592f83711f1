use std::collections::{BTreeMap, BTreeSet};

use super::GatewayError;

pub const SUMMARIZATION_TEMPLATE: &str = include_str!("../../templates/summarization.txt");
pub const QA_TEMPLATE: &str = include_str!("../../templates/qa.txt");

/// A prompt body with `{{NAME}}` placeholders, each occurring exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    body: String,
    required: BTreeSet<String>,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_placeholder_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Splits a body into literal text and placeholder slots. Brace pairs that
/// do not enclose an upper-case identifier stay literal.
fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = body;
    let mut literal_start = 0;
    let mut offset = 0;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) if is_placeholder_name(&after[..close]) => {
                let abs_open = offset + open;
                out.push(Piece::Text(&body[literal_start..abs_open]));
                out.push(Piece::Slot(&after[..close]));
                let consumed = open + 2 + close + 2;
                offset += consumed;
                literal_start = offset;
                rest = &rest[consumed..];
            }
            _ => {
                offset += open + 2;
                rest = &rest[open + 2..];
            }
        }
    }
    out.push(Piece::Text(&body[literal_start..]));
    out
}

impl PromptTemplate {
    pub fn new(body: impl Into<String>) -> Result<Self, GatewayError> {
        let body = body.into();
        let mut required = BTreeSet::new();
        for piece in pieces(&body) {
            if let Piece::Slot(name) = piece {
                if !required.insert(name.to_string()) {
                    return Err(GatewayError::Template(format!(
                        "placeholder `{name}` occurs more than once"
                    )));
                }
            }
        }
        Ok(Self { body, required })
    }

    pub fn summarization() -> Self {
        Self::new(SUMMARIZATION_TEMPLATE).expect("bundled template is valid")
    }

    pub fn question_answering() -> Self {
        Self::new(QA_TEMPLATE).expect("bundled template is valid")
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn required_placeholders(&self) -> &BTreeSet<String> {
        &self.required
    }

    /// Substitutes every placeholder verbatim in a single pass, so bound
    /// values are never themselves expanded.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        if let Some(missing) = self.required.iter().find(|n| !bindings.contains_key(*n)) {
            return Err(GatewayError::MissingBinding(missing.clone()));
        }
        if let Some(extra) = bindings.keys().find(|k| !self.required.contains(*k)) {
            return Err(GatewayError::UnknownBinding(extra.clone()));
        }
        let mut out = String::with_capacity(self.body.len());
        for piece in pieces(&self.body) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => out.push_str(&bindings[name]),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn simple_substitution() {
        let t = PromptTemplate::new("A {{X}} B").unwrap();
        assert_eq!(t.render(&b(&[("X", "q")])).unwrap(), "A q B");
    }

    #[test]
    fn missing_and_extra_bindings() {
        let t = PromptTemplate::new("A {{X}} B").unwrap();
        assert!(matches!(t.render(&b(&[])), Err(GatewayError::MissingBinding(n)) if n == "X"));
        assert!(matches!(
            t.render(&b(&[("X", "1"), ("Y", "2")])),
            Err(GatewayError::UnknownBinding(n)) if n == "Y"
        ));
    }

    #[test]
    fn duplicate_placeholder_rejected() {
        assert!(PromptTemplate::new("{{X}} and {{X}}").is_err());
    }

    #[test]
    fn non_placeholder_braces_stay_literal() {
        let t = PromptTemplate::new("json {{ not one }} {{lower}} {{X}}").unwrap();
        assert_eq!(t.required_placeholders().len(), 1);
        assert_eq!(t.render(&b(&[("X", "x")])).unwrap(), "json {{ not one }} {{lower}} x");
    }

    #[test]
    fn values_are_not_re_expanded() {
        let t = PromptTemplate::new("{{A}}|{{B}}").unwrap();
        let out = t.render(&b(&[("A", "{{B}}"), ("B", "b")])).unwrap();
        assert_eq!(out, "{{B}}|b");
    }

    #[test]
    fn bundled_templates_match_source_text() {
        let s = PromptTemplate::summarization();
        let names: Vec<&str> = s.required_placeholders().iter().map(String::as_str).collect();
        assert_eq!(names, vec!["ONESHOT_ANSWER", "ONESHOT_QUESTION", "PRODUCT_REVIEWS"]);
        assert!(s.body().starts_with("[INST] Given a series of reviews, create a concise summary"));
        assert!(s.body().contains("Do not reference the reviews.\n\nReviews: {{PRODUCT_REVIEWS}}"));
        assert!(s.body().ends_with("Question: {{ONESHOT_QUESTION}} [/INST]\n\nAnswer: {{ONESHOT_ANSWER}}"));

        let qa = PromptTemplate::question_answering();
        let rendered = qa
            .render(&b(&[("KNOWLEDGE", "k"), ("USER_QUESTION", "u")]))
            .unwrap();
        assert_eq!(
            rendered,
            "You will be provided with a set of descriptions of messages. You will also be \
             provided with a question. Given these descriptions, answer the question in 300 \
             words. If applicable, apply examples to justify your answer. Answer in bullet \
             points.\n\nRelated descriptions: k\n\nQuestion: u"
        );
    }

    proptest! {
        #[test]
        fn rendering_consumes_placeholders(x in "[a-z .]{0,20}", y in "[a-z .]{0,20}") {
            let t = PromptTemplate::new("pre {{X}} mid {{Y}} post").unwrap();
            let once = t.render(&b(&[("X", &x), ("Y", &y)])).unwrap();
            let again = PromptTemplate::new(once.clone()).unwrap();
            prop_assert!(again.required_placeholders().is_empty());
            prop_assert_eq!(again.render(&BTreeMap::new()).unwrap(), once);
        }
    }
}
