//! Prompt-token and answer-similarity metrics comparing CRAG with RAG.

pub mod tokens;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{embed_with, Embedder, EmbeddingError, EmbeddingVector};
use crate::ingest::ProductGroup;
use crate::llm_gateway::{qa_request, Gateway, GatewayError};
use crate::pipeline::{KnowledgeDocument, Method};
use crate::Scalar;

pub use tokens::{count_tokens, Tokenizer, TokenizerKind, TokenizerRegistry, TokenizerSpec};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("tokenizer `{id}`: {message}")]
    Tokenizer { id: String, message: String },
    #[error("change in tokens is undefined when T-RAG is 0")]
    UndefinedRatio,
    #[error("cosine similarity is undefined for a zero vector")]
    UndefinedSimilarity,
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Percentage change from `t_rag` to `t_crag`, rounded half away from zero
/// to 2 decimals. Negative means CRAG needs fewer tokens.
pub fn compute_cit(t_crag: u64, t_rag: u64) -> Result<f64, EvaluationError> {
    if t_rag == 0 {
        return Err(EvaluationError::UndefinedRatio);
    }
    // hundredths of a percent, kept in integers so ties round exactly
    let num = 10_000 * (i128::from(t_crag) - i128::from(t_rag));
    let den = i128::from(t_rag);
    let q = (2 * num.abs() + den) / (2 * den);
    let hundredths = if num < 0 { -q } else { q };
    Ok(hundredths as f64 / 100.0)
}

/// `dot(a, b) / (|a| |b|)`, clamped to [-1, 1].
pub fn cosine_similarity<T: Scalar>(
    a: &EmbeddingVector<T>,
    b: &EmbeddingVector<T>,
) -> Result<T, EvaluationError> {
    if a.dimension() != b.dimension() {
        return Err(EvaluationError::Contract(format!(
            "cannot compare vectors of dimension {} and {}",
            a.dimension(),
            b.dimension()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == T::zero() || nb == T::zero() {
        return Err(EvaluationError::UndefinedSimilarity);
    }
    let one = T::one();
    Ok((a.dot(b) / (na * nb)).max(-one).min(one))
}

/// Prompt cost in currency units, to 5 decimal places.
pub fn cost_estimate(prompt_tokens: u64, price_per_1k: f64) -> f64 {
    let raw = prompt_tokens as f64 * price_per_1k / 1000.0;
    (raw * 1e5).round() / 1e5
}

/// Largest token count of the rendered QA prompt across `tokenizers`.
pub fn max_prompt_tokens(
    doc: &KnowledgeDocument,
    question: &str,
    tokenizers: &[TokenizerSpec],
    registry: &TokenizerRegistry,
) -> Result<u64, EvaluationError> {
    if tokenizers.is_empty() {
        return Err(EvaluationError::Contract("no tokenizers configured".into()));
    }
    let prompt = qa_request(&doc.text, question, "", false)
        .map_err(|e| EvaluationError::Contract(e.to_string()))?
        .prompt;
    let mut max = 0;
    for spec in tokenizers {
        max = max.max(count_tokens(&prompt, spec, registry)?);
    }
    Ok(max as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub product_id: String,
    pub n_reviews: usize,
    pub t_crag: u64,
    pub t_rag: u64,
    pub cit_percent: f64,
    /// `None` when the model failed to answer for either document.
    pub cossim_by_model: BTreeMap<String, Option<f64>>,
}

/// A QA model under evaluation: the id used in reports and its gateway.
pub struct QaModel<'a> {
    pub id: String,
    pub gateway: &'a Gateway,
}

fn answer(doc: &KnowledgeDocument, question: &str, gateway: &Gateway) -> Result<String, GatewayError> {
    let request = qa_request(&doc.text, question, &gateway.model(), gateway.inst_wrap())?;
    Ok(gateway.complete(request)?.text)
}

fn model_similarity(
    crag: &KnowledgeDocument,
    rag: &KnowledgeDocument,
    question: &str,
    gateway: &Gateway,
    embedder: &dyn Embedder,
) -> Result<f64, String> {
    let a = answer(crag, question, gateway).map_err(|e| e.to_string())?;
    let b = answer(rag, question, gateway).map_err(|e| e.to_string())?;
    let vectors = embed_with(embedder, &[a, b]).map_err(|e| e.to_string())?;
    cosine_similarity(&vectors[0], &vectors[1]).map_err(|e| e.to_string())
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_product(
    group: &ProductGroup,
    crag_doc: &KnowledgeDocument,
    rag_doc: &KnowledgeDocument,
    question: &str,
    models: &[QaModel<'_>],
    embedder: &dyn Embedder,
    tokenizers: &[TokenizerSpec],
    registry: &TokenizerRegistry,
) -> Result<EvaluationRow, EvaluationError> {
    for (doc, method) in [(crag_doc, Method::Crag), (rag_doc, Method::Rag)] {
        if doc.product_id != group.product_id || doc.method != method {
            return Err(EvaluationError::Contract(format!(
                "expected the {method} document of `{}`, got {} of `{}`",
                group.product_id, doc.method, doc.product_id
            )));
        }
    }
    let t_crag = max_prompt_tokens(crag_doc, question, tokenizers, registry)?;
    let t_rag = max_prompt_tokens(rag_doc, question, tokenizers, registry)?;
    let cit_percent = compute_cit(t_crag, t_rag)?;

    let mut cossim_by_model = BTreeMap::new();
    for model in models {
        let sim = match model_similarity(crag_doc, rag_doc, question, model.gateway, embedder) {
            Ok(s) => Some(s),
            Err(e) => {
                tracing::warn!(product = %group.product_id, model = %model.id, "no similarity: {e}");
                None
            }
        };
        cossim_by_model.insert(model.id.clone(), sim);
    }
    Ok(EvaluationRow {
        product_id: group.product_id.clone(),
        n_reviews: group.len(),
        t_crag,
        t_rag,
        cit_percent,
        cossim_by_model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}`, expected markdown or csv")),
        }
    }
}

fn report_cells(row: &EvaluationRow, models: &[String]) -> Vec<String> {
    let mut cells = vec![
        row.n_reviews.to_string(),
        row.t_crag.to_string(),
        row.t_rag.to_string(),
        format!("{:+.2}", row.cit_percent),
    ];
    for m in models {
        cells.push(match row.cossim_by_model.get(m).copied().flatten() {
            Some(s) => format!("{s:.2}"),
            None => "n/a".into(),
        });
    }
    cells
}

/// Table with one row per product in input order and one CosSim column per
/// entry of `models`.
pub fn render_report(rows: &[EvaluationRow], models: &[String], format: ReportFormat) -> String {
    let mut header: Vec<String> = ["# reviews", "T-CRAG", "T-RAG", "CiT(%)"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(models.iter().map(|m| format!("CosSim ({m})")));
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(&header).expect("write to memory");
            for row in rows {
                w.write_record(report_cells(row, models)).expect("write to memory");
            }
            String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
            out.push_str(&line(&header));
            let rule: Vec<String> = header.iter().map(|_| "---:".to_string()).collect();
            out.push_str(&line(&rule));
            for row in rows {
                let _ = write!(out, "{}", line(&report_cells(row, models)));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::embedding::DeterministicEmbedder;
    use crate::llm_gateway::{BackendError, FnBackend, MockBackend};
    use crate::pipeline::build_rag_knowledge;
    use crate::pipeline::test_support::group;
    use crate::retry::RetryPolicy;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn cit_examples() {
        assert_eq!(compute_cit(259, 607).unwrap(), -57.33);
        assert_eq!(compute_cit(466, 5095).unwrap(), -90.85);
        assert_eq!(compute_cit(7, 7).unwrap(), 0.0);
        assert_eq!(compute_cit(3, 2).unwrap(), 50.0);
        assert!(matches!(compute_cit(1, 0), Err(EvaluationError::UndefinedRatio)));
    }

    #[test]
    fn cit_rounds_half_away_from_zero() {
        // 1/8000 -> 0.0125 %, 1/4000 -> 0.025 % (an exact tie)
        assert_eq!(compute_cit(8001, 8000).unwrap(), 0.01);
        assert_eq!(compute_cit(4001, 4000).unwrap(), 0.03);
        assert_eq!(compute_cit(3999, 4000).unwrap(), -0.03);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let s = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(EvaluationError::UndefinedSimilarity)
        ));
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(EvaluationError::Contract(_))
        ));
    }

    #[test]
    fn cosine_f32() {
        let a = EmbeddingVector::<f32>::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(cosine_similarity(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn cost_examples() {
        assert_eq!(cost_estimate(5165, 0.01), 0.05165);
        assert_eq!(cost_estimate(468, 0.01), 0.00468);
        assert_eq!(cost_estimate(0, 123.0), 0.0);
    }

    fn mock(budget: usize) -> Gateway {
        Gateway::new(Arc::new(MockBackend::new("m", budget)), RetryPolicy::immediate(2), None)
    }

    fn as_crag(mut doc: KnowledgeDocument) -> KnowledgeDocument {
        doc.method = Method::Crag;
        doc
    }

    #[test]
    fn max_prompt_tokens_takes_the_largest() {
        let doc = build_rag_knowledge(&group("P", &["one two three"])).unwrap();
        let builtin = TokenizerSpec::builtin();
        let mut reg = TokenizerRegistry::new();
        let single = max_prompt_tokens(&doc, "why?", std::slice::from_ref(&builtin), &reg).unwrap();
        let prompt = qa_request(&doc.text, "why?", "", false).unwrap().prompt;
        assert_eq!(single, tokens::builtin_token_count(&prompt) as u64);

        reg.register("coarse", Arc::new(tokens::CharRatioTokenizer { chars_per_token: 1e9 }));
        let specs = [TokenizerSpec::plugged("coarse"), builtin];
        assert_eq!(max_prompt_tokens(&doc, "why?", &specs, &reg).unwrap(), single);
        assert!(matches!(
            max_prompt_tokens(&doc, " ", &specs, &reg),
            Err(EvaluationError::Contract(_))
        ));
        assert!(matches!(
            max_prompt_tokens(&doc, "q", &[TokenizerSpec::plugged("absent")], &reg),
            Err(EvaluationError::Tokenizer { .. })
        ));
    }

    #[test]
    fn identical_knowledge_gives_similarity_one() {
        let g = group("P", &["a b", "c d", "e f", "g h"]);
        let rag = build_rag_knowledge(&g).unwrap();
        let crag = as_crag(rag.clone());
        let gw = mock(80);
        let models = [QaModel { id: "m1".into(), gateway: &gw }, QaModel { id: "m2".into(), gateway: &gw }];
        let emb = DeterministicEmbedder::new(1, 32).unwrap();
        let row = evaluate_product(&g, &crag, &rag, "q?", &models, &emb, &[TokenizerSpec::builtin()], &TokenizerRegistry::new())
            .unwrap();
        assert_eq!(row.cit_percent, 0.0);
        assert_eq!(row.n_reviews, 4);
        for s in row.cossim_by_model.values() {
            assert!((s.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn differing_answers_and_failing_model() {
        let g = group("P", &["alpha beta", "gamma delta", "epsilon zeta", "eta theta"]);
        let rag = build_rag_knowledge(&g).unwrap();
        let mut crag = as_crag(rag.clone());
        crag.text = "alpha beta\nomega psi".into();
        let good = mock(80);
        let bad = Gateway::new(
            Arc::new(FnBackend::new("down", |_, _| Err(BackendError::Refusal("no".into())))),
            RetryPolicy::immediate(1),
            None,
        );
        let models = [QaModel { id: "good".into(), gateway: &good }, QaModel { id: "bad".into(), gateway: &bad }];
        let emb = DeterministicEmbedder::new(1, 64).unwrap();
        let run = || {
            evaluate_product(&g, &crag, &rag, "q?", &models, &emb, &[TokenizerSpec::builtin()], &TokenizerRegistry::new())
                .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        let s = a.cossim_by_model["good"].unwrap();
        assert!(s < 1.0);
        assert_eq!(a.cossim_by_model["bad"], None);
        assert!(a.t_crag < a.t_rag && a.cit_percent < 0.0);
    }

    #[test]
    fn mismatched_documents_rejected() {
        let g = group("P", &["x"]);
        let rag = build_rag_knowledge(&g).unwrap();
        let emb = DeterministicEmbedder::new(1, 8).unwrap();
        let err = evaluate_product(&g, &rag, &rag, "q", &[], &emb, &[TokenizerSpec::builtin()], &TokenizerRegistry::new());
        assert!(matches!(err, Err(EvaluationError::Contract(_))));
    }

    fn row(n: usize, t_crag: u64, t_rag: u64, sims: &[(&str, Option<f64>)]) -> EvaluationRow {
        EvaluationRow {
            product_id: format!("p{n}"),
            n_reviews: n,
            t_crag,
            t_rag,
            cit_percent: compute_cit(t_crag, t_rag).unwrap(),
            cossim_by_model: sims.iter().map(|(m, s)| (m.to_string(), *s)).collect(),
        }
    }

    #[test]
    fn report_layouts() {
        let models = vec!["m1".to_string(), "m2".to_string()];
        assert_eq!(
            render_report(&[], &models, ReportFormat::Csv),
            "# reviews,T-CRAG,T-RAG,CiT(%),CosSim (m1),CosSim (m2)\n"
        );
        let rows = [row(4, 259, 607, &[("m1", Some(0.9123)), ("m2", None)]), row(9, 5, 5, &[])];
        let md = render_report(&rows, &models, ReportFormat::Markdown);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines[0], "| # reviews | T-CRAG | T-RAG | CiT(%) | CosSim (m1) | CosSim (m2) |");
        assert_eq!(lines[2], "| 4 | 259 | 607 | -57.33 | 0.91 | n/a |");
        assert_eq!(lines[3], "| 9 | 5 | 5 | +0.00 | n/a | n/a |");
        let csv = render_report(&rows, &models, ReportFormat::Csv);
        assert_eq!(csv.lines().nth(1).unwrap(), "4,259,607,-57.33,0.91,n/a");
    }

    prop_compose! {
        fn vec_pair()(dim in 1usize..12)(
            a in proptest::collection::vec(-1e3f64..1e3, dim),
            b in proptest::collection::vec(-1e3f64..1e3, dim),
        ) -> (Vec<f64>, Vec<f64>) { (a, b) }
    }

    fn nonzero(xs: &[f64]) -> bool {
        xs.iter().any(|x| x.abs() > 1e-6)
    }

    proptest! {
        #[test]
        fn cosine_properties((a, b) in vec_pair(), lambda in 1e-3f64..1e3) {
            prop_assume!(nonzero(&a) && nonzero(&b));
            let (va, vb) = (v(&a), v(&b));
            let ab = cosine_similarity(&va, &vb).unwrap();
            prop_assert_eq!(ab, cosine_similarity(&vb, &va).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
            prop_assert!((cosine_similarity(&va, &va).unwrap() - 1.0).abs() < 1e-12);
            let scaled = v(&a.iter().map(|x| x * lambda).collect::<Vec<_>>());
            prop_assert!((cosine_similarity(&scaled, &vb).unwrap() - ab).abs() < 1e-9);
        }

        #[test]
        fn cit_properties(t in 1u64..100_000, r in 1u64..100_000, dr in 1u64..1000) {
            prop_assert_eq!(compute_cit(t, t).unwrap(), 0.0);
            let c = compute_cit(t, r).unwrap();
            prop_assert!(compute_cit(t, r + dr).unwrap() <= c);
            prop_assert_eq!(c < 0.0, t < r);
            let exact = 100.0 * (t as f64 - r as f64) / r as f64;
            prop_assert!((c - exact).abs() <= 0.005 + 1e-9);
        }

        #[test]
        fn cost_is_linear(t in 0u64..1_000_000, price in 0.0f64..1.0) {
            let c = cost_estimate(t, price);
            prop_assert!(c >= 0.0);
            prop_assert!((c - t as f64 * price / 1000.0).abs() <= 5e-6 + 1e-12 * c.abs());
        }

        #[test]
        fn report_formats_agree(ts in proptest::collection::vec((1u64..10_000, 1u64..10_000, proptest::option::of(-1.0f64..1.0)), 0..6)) {
            let models = vec!["m".to_string()];
            let rows: Vec<EvaluationRow> = ts.iter().enumerate().map(|(i, (a, b, s))| row(i, *a, *b, &[("m", *s)])).collect();
            let csv = render_report(&rows, &models, ReportFormat::Csv);
            let md = render_report(&rows, &models, ReportFormat::Markdown);
            let from_csv: Vec<String> = csv.lines().skip(1).map(|l| l.replace(',', "|")).collect();
            let from_md: Vec<String> = md.lines().skip(2)
                .map(|l| l.trim_matches(|c| c == '|' || c == ' ').split(" | ").collect::<Vec<_>>().join("|"))
                .collect();
            prop_assert_eq!(from_csv, from_md);
        }
    }
}
