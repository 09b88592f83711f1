//! File-backed pipeline stages. Each stage reads the previous stage's
//! artifact and skips work whose inputs are unchanged.

use std::fs;
use std::path::{Path, PathBuf};

use crag_core::embedding::{embed_with, VectorStore};
use crag_core::evaluation::{evaluate_product, render_report, EvaluationRow, QaModel};
use crag_core::fsutil::write_atomic;
use crag_core::ingest::{
    corpus_stats, dedup_reviews, filter_min_reviews, group_by_product, parse_reviews, CorpusStats,
    ProductGroup,
};
use crag_core::llm_gateway::Gateway;
use crag_core::pipeline::{
    build_crag_knowledge_with_vectors, build_rag_knowledge, crag_digest, rag_digest, KnowledgeStore,
    Method, PipelineError,
};
use crag_core::Embedding;
use serde::{Deserialize, Serialize};

use crate::{AppConfig, CliError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    #[serde(flatten)]
    pub stats: CorpusStats,
    /// Rows without review text.
    pub skipped_rows: usize,
    /// Products dropped for having too few reviews.
    pub dropped_products: usize,
}

/// Work done by `embed` or `build`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub rebuilt: usize,
    pub skipped: usize,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|e| CliError::io(path, e))
}

pub fn ingest(config: &AppConfig) -> Result<IngestSummary, CliError> {
    let csv_path = &config.paths.corpus_csv;
    let file = fs::File::open(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    let outcome = parse_reviews(file, &config.ingest.columns)?;
    let mut groups = group_by_product(outcome.reviews);
    if config.ingest.dedup {
        groups = dedup_reviews(groups);
    }
    let before = groups.len();
    let groups = filter_min_reviews(groups, config.crag.min_reviews);
    write_json(&config.paths.corpus, &groups)?;
    Ok(IngestSummary {
        stats: corpus_stats(&groups),
        skipped_rows: outcome.skipped,
        dropped_products: before - groups.len(),
    })
}

pub fn load_corpus(config: &AppConfig) -> Result<Vec<ProductGroup>, CliError> {
    let path = &config.paths.corpus;
    if !path.exists() {
        return Err(CliError::missing(format!("ingested corpus {}", path.display()), "crag ingest"));
    }
    let raw = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorMeta {
    embedder: String,
}

fn meta_path(vectors: &Path) -> PathBuf {
    let mut p = vectors.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

fn stored_embedder(vectors: &Path) -> Result<Option<String>, CliError> {
    let path = meta_path(vectors);
    if !path.exists() {
        return Ok(None);
    }
    let raw = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let meta: VectorMeta = serde_json::from_str(&raw).map_err(|e| CliError::io(&path, e))?;
    Ok(Some(meta.embedder))
}

pub fn embed(config: &AppConfig, force: bool) -> Result<BuildReport, CliError> {
    let groups = load_corpus(config)?;
    let embedder = config.embedder.build()?;
    let path = &config.paths.vectors;
    let same_embedder = stored_embedder(path)?.as_deref() == Some(embedder.id().as_str());
    let mut store: VectorStore = if same_embedder {
        VectorStore::open_or_default(path)?
    } else {
        VectorStore::default()
    };
    let mut report = BuildReport { rebuilt: 0, skipped: 0 };
    for group in &groups {
        let texts: Vec<String> = group.reviews.iter().map(|r| r.text.clone()).collect();
        if !force && store.get(&group.product_id).is_some_and(|(t, _)| t == texts.as_slice()) {
            report.skipped += 1;
            continue;
        }
        let vectors = embed_with(embedder.as_ref(), &texts)?;
        store.insert(&group.product_id, texts, vectors)?;
        report.rebuilt += 1;
    }
    store.save(path)?;
    write_json(&meta_path(path), &VectorMeta { embedder: embedder.id() })?;
    Ok(report)
}

fn vectors_for(store: &VectorStore, group: &ProductGroup) -> Result<Vec<Embedding>, CliError> {
    let texts: Vec<&str> = group.texts();
    match store.get(&group.product_id) {
        Some((t, v)) if t.iter().map(String::as_str).eq(texts.iter().copied()) => Ok(v.to_vec()),
        _ => Err(CliError::missing(
            format!("current vectors for product `{}`", group.product_id),
            "crag embed",
        )),
    }
}

pub fn build(config: &AppConfig, method: Method, force: bool) -> Result<BuildReport, CliError> {
    let groups = load_corpus(config)?;
    let store = KnowledgeStore::new(&config.paths.knowledge);
    let mut report = BuildReport { rebuilt: 0, skipped: 0 };
    let existing_digest = |product_id: &str| match store.load(product_id, method) {
        Ok(doc) => Ok(Some(doc.created_with.digest)),
        Err(PipelineError::ProductNotFound { .. } | PipelineError::MethodNotFound { .. }) => Ok(None),
        Err(e) => Err(e),
    };

    match method {
        Method::Rag => {
            for group in &groups {
                if !force && existing_digest(&group.product_id)? == Some(rag_digest(group)) {
                    report.skipped += 1;
                    continue;
                }
                store.store(&build_rag_knowledge(group)?)?;
                report.rebuilt += 1;
            }
        }
        Method::Crag => {
            let vectors_path = &config.paths.vectors;
            let embedder_id = config.embedder.build()?.id();
            if !vectors_path.exists() || stored_embedder(vectors_path)?.as_deref() != Some(embedder_id.as_str()) {
                return Err(CliError::missing(
                    format!("vectors from `{embedder_id}` in {}", vectors_path.display()),
                    "crag embed",
                ));
            }
            let vectors: VectorStore = VectorStore::open(vectors_path)?;
            let gateway = config.backend(&config.summarizer)?.build_gateway()?;
            for group in &groups {
                let digest = crag_digest(group, &config.crag, &embedder_id, &gateway.backend_id());
                if !force && existing_digest(&group.product_id)? == Some(digest) {
                    report.skipped += 1;
                    continue;
                }
                let v = vectors_for(&vectors, group)?;
                let doc = build_crag_knowledge_with_vectors(group, &v, &embedder_id, &config.crag, &gateway)?;
                store.store(&doc)?;
                report.rebuilt += 1;
            }
        }
    }
    Ok(report)
}

/// One question per non-empty line.
pub fn read_questions(path: &Path) -> Result<Vec<String>, CliError> {
    let raw = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let questions: Vec<String> = raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if questions.is_empty() {
        return Err(CliError::Io(format!("{}: no questions", path.display())));
    }
    Ok(questions)
}

fn require_doc(
    store: &KnowledgeStore,
    product_id: &str,
    method: Method,
) -> Result<crag_core::pipeline::KnowledgeDocument, CliError> {
    store.load(product_id, method).map_err(|e| match e {
        PipelineError::ProductNotFound { .. } | PipelineError::MethodNotFound { .. } => CliError::missing(
            format!("{method} knowledge for `{product_id}`"),
            format!("crag build --method {}", method.to_string().to_lowercase()),
        ),
        other => other.into(),
    })
}

/// Evaluates every product against every question, writes the report and
/// returns it with the rows.
pub fn evaluate(config: &AppConfig, questions: &[String]) -> Result<(Vec<EvaluationRow>, String), CliError> {
    let groups = load_corpus(config)?;
    let store = KnowledgeStore::new(&config.paths.knowledge);
    let embedder = config.embedder.build()?;
    let registry = config.tokenizer_registry()?;
    let gateways: Vec<(String, Gateway)> = config
        .qa_models
        .iter()
        .map(|id| Ok((id.clone(), config.backend(id)?.build_gateway()?)))
        .collect::<Result<_, CliError>>()?;
    let models: Vec<QaModel<'_>> = gateways
        .iter()
        .map(|(id, gateway)| QaModel { id: id.clone(), gateway })
        .collect();

    let mut rows = Vec::new();
    for group in &groups {
        let crag = require_doc(&store, &group.product_id, Method::Crag)?;
        let rag = require_doc(&store, &group.product_id, Method::Rag)?;
        for q in questions {
            rows.push(evaluate_product(
                group,
                &crag,
                &rag,
                q,
                &models,
                embedder.as_ref(),
                &config.tokenizers,
                &registry,
            )?);
        }
    }
    let report = render_report(&rows, &config.qa_models, config.report_format);
    write_atomic(&config.paths.report, report.as_bytes()).map_err(|e| CliError::io(&config.paths.report, e))?;
    Ok((rows, report))
}
