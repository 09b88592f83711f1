//! Terminal question loop. Lines starting with `:` change settings,
//! anything else is asked as a question.

use std::io::{BufRead, Write};

use crag_core::llm_gateway::Gateway;
use crag_core::pipeline::{KnowledgeStore, Method};

use crate::qa::{answer_question, QaContext};
use crate::{AppConfig, CliError};

const HELP: &str = ":product ID | :method crag|rag | :model ID | :quit";

pub struct QuerySession {
    pub product: Option<String>,
    pub method: Method,
    pub model: String,
}

pub fn run_query<R: BufRead, W: Write>(
    config: &AppConfig,
    mut session: QuerySession,
    input: R,
    mut out: W,
) -> Result<(), CliError> {
    let store = KnowledgeStore::new(&config.paths.knowledge);
    if !store.exists() {
        return Err(CliError::missing("knowledge store", "crag build --method crag"));
    }
    let registry = config.tokenizer_registry()?;
    let mut gateway: Gateway = config.backend(&session.model)?.build_gateway()?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    writeln!(out, "{HELP}").map_err(io)?;

    for line in input.lines() {
        let line = line.map_err(io)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(cmd) = line.strip_prefix(':') {
            let (name, arg) = cmd.split_once(' ').map_or((cmd, ""), |(n, a)| (n, a.trim()));
            match name {
                "quit" | "q" => break,
                "product" => session.product = Some(arg.to_string()),
                "method" => match arg.parse() {
                    Ok(m) => session.method = m,
                    Err(e) => writeln!(out, "{e}").map_err(io)?,
                },
                "model" => match config.backend(arg).and_then(|b| Ok(b.build_gateway()?)) {
                    Ok(g) if config.qa_models.iter().any(|m| m == arg) => {
                        gateway = g;
                        session.model = arg.to_string();
                    }
                    Ok(_) => writeln!(out, "`{arg}` is not a QA model").map_err(io)?,
                    Err(e) => writeln!(out, "{e}").map_err(io)?,
                },
                _ => writeln!(out, "{HELP}").map_err(io)?,
            }
            continue;
        }
        let Some(product) = session.product.as_deref() else {
            writeln!(out, "pick a product first with :product ID").map_err(io)?;
            continue;
        };
        let ctx = QaContext {
            store: &store,
            tokenizers: &config.tokenizers,
            registry: &registry,
            price_per_1k: config.prices.for_model(&session.model),
        };
        match answer_question(product, line, session.method, &session.model, &gateway, &ctx) {
            Ok(r) => writeln!(
                out,
                "{}\n[{} {} | {} prompt tokens | ${:.5}]",
                r.answer, r.method, r.model, r.prompt_token_count, r.estimated_cost
            )
            .map_err(io)?,
            Err(e) => writeln!(out, "error: {e}").map_err(io)?,
        }
    }
    Ok(())
}
