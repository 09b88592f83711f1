//! Append-only knowledge store.
//!
//! Documents are JSON lines in one data file; a sidecar index
//! (`<data file>.index.json`) maps `(product_id, method)` to the byte offset
//! of the latest record. A document becomes visible only once the index is
//! atomically replaced, so an interrupted write leaves the previous state.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{KnowledgeDocument, Method, PipelineError};
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub product_id: String,
    pub method: Method,
    pub offset: u64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeStore {
    data: PathBuf,
    index: PathBuf,
}

fn storage(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Storage(e.to_string())
}

impl KnowledgeStore {
    pub fn new(data: impl Into<PathBuf>) -> Self {
        let data = data.into();
        let mut index = data.clone().into_os_string();
        index.push(".index.json");
        Self {
            data,
            index: PathBuf::from(index),
        }
    }

    pub fn data_path(&self) -> &Path {
        &self.data
    }

    pub fn index_path(&self) -> &Path {
        &self.index
    }

    pub fn exists(&self) -> bool {
        self.index.exists()
    }

    fn read_index(&self) -> Result<Index, PipelineError> {
        if !self.index.exists() {
            return Ok(Index::default());
        }
        let raw = fs::read_to_string(&self.index).map_err(storage)?;
        serde_json::from_str(&raw).map_err(|e| storage(format!("{}: {e}", self.index.display())))
    }

    /// Index entries sorted by product then method.
    pub fn entries(&self) -> Result<Vec<IndexEntry>, PipelineError> {
        Ok(self.read_index()?.entries)
    }

    pub fn store(&self, doc: &KnowledgeDocument) -> Result<(), PipelineError> {
        let mut line = serde_json::to_vec(doc).map_err(storage)?;
        line.push(b'\n');
        if let Some(dir) = self.data.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(storage)?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.data)
            .map_err(storage)?;
        let offset = file.seek(SeekFrom::End(0)).map_err(storage)?;
        file.write_all(&line).map_err(storage)?;
        file.sync_all().map_err(storage)?;

        let mut index = self.read_index()?;
        index
            .entries
            .retain(|e| !(e.product_id == doc.product_id && e.method == doc.method));
        index.entries.push(IndexEntry {
            product_id: doc.product_id.clone(),
            method: doc.method,
            offset,
        });
        index
            .entries
            .sort_by(|a, b| (&a.product_id, a.method).cmp(&(&b.product_id, b.method)));
        let mut bytes = serde_json::to_vec_pretty(&index).map_err(storage)?;
        bytes.push(b'\n');
        write_atomic(&self.index, &bytes).map_err(storage)
    }

    pub fn load(&self, product_id: &str, method: Method) -> Result<KnowledgeDocument, PipelineError> {
        let index = self.read_index()?;
        let mut for_product = index
            .entries
            .iter()
            .filter(|e| e.product_id == product_id)
            .peekable();
        if for_product.peek().is_none() {
            return Err(PipelineError::ProductNotFound {
                product_id: product_id.to_string(),
            });
        }
        let entry = for_product
            .find(|e| e.method == method)
            .ok_or_else(|| PipelineError::MethodNotFound {
                product_id: product_id.to_string(),
                method,
            })?;
        let mut file = fs::File::open(&self.data).map_err(storage)?;
        file.seek(SeekFrom::Start(entry.offset)).map_err(storage)?;
        let mut line = String::new();
        BufReader::new(file).read_line(&mut line).map_err(storage)?;
        let doc: KnowledgeDocument = serde_json::from_str(line.trim_end())
            .map_err(|e| storage(format!("record at offset {}: {e}", entry.offset)))?;
        if doc.product_id != product_id || doc.method != method {
            return Err(storage(format!(
                "index points at the wrong record for `{product_id}` ({method})"
            )));
        }
        Ok(doc)
    }
}
