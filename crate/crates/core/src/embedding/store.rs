//! Line-delimited vector store: one JSON record per line holding
//! `product_id`, `text`, `dimension` and `values`. Floats are written in
//! shortest round-trip form, so reloading is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingVector};
use crate::fsutil::write_atomic;
use crate::scalar::Scalar;

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
struct Record<T> {
    product_id: String,
    text: String,
    dimension: usize,
    values: Vec<T>,
}

/// In-memory view of a vector store file, products in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore<T: Scalar = f64> {
    entries: Vec<(String, Vec<String>, Vec<EmbeddingVector<T>>)>,
}

impl<T: Scalar> Default for VectorStore<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

fn storage(line: Option<usize>, message: impl Into<String>) -> EmbeddingError {
    EmbeddingError::Storage {
        line,
        message: message.into(),
    }
}

impl<T: Scalar + Serialize + DeserializeOwned> VectorStore<T> {
    pub fn open(path: &Path) -> Result<Self, EmbeddingError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| storage(None, format!("{}: {e}", path.display())))?;
        let mut store = Self::default();
        for (i, line) in raw.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record<T> = serde_json::from_str(line)
                .map_err(|e| storage(Some(lineno), format!("corrupt record: {e}")))?;
            if rec.values.len() != rec.dimension {
                return Err(storage(
                    Some(lineno),
                    format!("declared dimension {} but {} values", rec.dimension, rec.values.len()),
                ));
            }
            let vector = EmbeddingVector::new(rec.values)
                .map_err(|e| storage(Some(lineno), e.to_string()))?;
            store.push(rec.product_id, rec.text, vector);
        }
        Ok(store)
    }

    /// Opens `path`, or returns an empty store if it does not exist yet.
    pub fn open_or_default(path: &Path) -> Result<Self, EmbeddingError> {
        if path.exists() {
            Self::open(path)
        } else {
            Ok(Self::default())
        }
    }

    fn push(&mut self, product_id: String, text: String, vector: EmbeddingVector<T>) {
        match self.entries.iter_mut().find(|(p, _, _)| *p == product_id) {
            Some((_, texts, vectors)) => {
                texts.push(text);
                vectors.push(vector);
            }
            None => self.entries.push((product_id, vec![text], vec![vector])),
        }
    }

    /// Replaces any vectors previously stored for `product_id`.
    pub fn insert(
        &mut self,
        product_id: &str,
        texts: Vec<String>,
        vectors: Vec<EmbeddingVector<T>>,
    ) -> Result<(), EmbeddingError> {
        if texts.len() != vectors.len() {
            return Err(EmbeddingError::Contract(format!(
                "{} texts but {} vectors",
                texts.len(),
                vectors.len()
            )));
        }
        if let Some(first) = vectors.first() {
            if vectors.iter().any(|v| v.dimension() != first.dimension()) {
                return Err(EmbeddingError::Contract("vectors differ in dimension".into()));
            }
        }
        match self.entries.iter_mut().find(|(p, _, _)| p == product_id) {
            Some(slot) => {
                slot.1 = texts;
                slot.2 = vectors;
            }
            None => self.entries.push((product_id.to_string(), texts, vectors)),
        }
        Ok(())
    }

    pub fn get(&self, product_id: &str) -> Option<(&[String], &[EmbeddingVector<T>])> {
        self.entries
            .iter()
            .find(|(p, _, _)| p == product_id)
            .map(|(_, t, v)| (t.as_slice(), v.as_slice()))
    }

    pub fn product_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(p, _, _)| p.as_str())
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut buf = Vec::new();
        for (product_id, texts, vectors) in &self.entries {
            for (text, vector) in texts.iter().zip(vectors) {
                let rec = Record {
                    product_id: product_id.clone(),
                    text: text.clone(),
                    dimension: vector.dimension(),
                    values: vector.values().to_vec(),
                };
                serde_json::to_writer(&mut buf, &rec)
                    .map_err(|e| storage(None, e.to_string()))?;
                buf.write_all(b"\n").map_err(|e| storage(None, e.to_string()))?;
            }
        }
        write_atomic(path, &buf).map_err(|e| storage(None, format!("{}: {e}", path.display())))
    }
}

pub fn save_vectors<T: Scalar + Serialize + DeserializeOwned>(
    path: &Path,
    product_id: &str,
    texts: &[String],
    vectors: &[EmbeddingVector<T>],
) -> Result<(), EmbeddingError> {
    let mut store = VectorStore::open_or_default(path)?;
    store.insert(product_id, texts.to_vec(), vectors.to_vec())?;
    store.save(path)
}

/// Loads the texts and vectors stored for `product_id`; an unknown product
/// yields empty lists.
#[allow(clippy::type_complexity)]
pub fn load_vectors<T: Scalar + Serialize + DeserializeOwned>(
    path: &Path,
    product_id: &str,
) -> Result<(Vec<String>, Vec<EmbeddingVector<T>>), EmbeddingError> {
    let store = VectorStore::open(path)?;
    Ok(store
        .get(product_id)
        .map(|(t, v)| (t.to_vec(), v.to_vec()))
        .unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vecs() -> Vec<EmbeddingVector> {
        vec![
            EmbeddingVector::new(vec![0.1, 0.2 + 1e-17, -3.0]).unwrap(),
            EmbeddingVector::new(vec![1.0 / 3.0, f64::MIN_POSITIVE, 1e300]).unwrap(),
            EmbeddingVector::new(vec![0.0, -0.0, 5e-324]).unwrap(),
        ]
    }

    fn texts() -> Vec<String> {
        vec!["a \"quoted\" text".into(), "line\nbreak".into(), "ünïcödé".into()]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.jsonl");
        save_vectors(&path, "P", &texts(), &vecs()).unwrap();
        let (t, v) = load_vectors::<f64>(&path, "P").unwrap();
        assert_eq!(t, texts());
        for (a, b) in v.iter().zip(vecs()) {
            let a: Vec<u64> = a.values().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = b.values().iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_store_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.jsonl");
        fs::write(&path, "").unwrap();
        let (t, v) = load_vectors::<f64>(&path, "P").unwrap();
        assert!(t.is_empty() && v.is_empty());
    }

    #[test]
    fn missing_file_is_storage_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_vectors::<f64>(&dir.path().join("nope"), "P").unwrap_err();
        assert!(matches!(err, EmbeddingError::Storage { line: None, .. }));
    }

    #[test]
    fn truncated_last_line_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.jsonl");
        save_vectors(&path, "P", &texts(), &vecs()).unwrap();
        let raw = fs::read_to_string(&path).unwrap();
        let cut = raw.trim_end().len() - 7;
        fs::write(&path, &raw[..cut]).unwrap();
        let err = load_vectors::<f64>(&path, "P").unwrap_err();
        assert!(matches!(err, EmbeddingError::Storage { line: Some(3), .. }), "{err}");
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn dimension_field_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.jsonl");
        fs::write(&path, r#"{"product_id":"P","text":"t","dimension":3,"values":[1.0,2.0]}"#).unwrap();
        let err = load_vectors::<f64>(&path, "P").unwrap_err();
        assert!(matches!(err, EmbeddingError::Storage { line: Some(1), .. }));
    }

    #[test]
    fn products_are_replaced_not_duplicated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.jsonl");
        save_vectors(&path, "P", &texts(), &vecs()).unwrap();
        save_vectors(&path, "Q", &texts()[..1], &vecs()[..1]).unwrap();
        save_vectors(&path, "P", &texts()[..2], &vecs()[..2]).unwrap();
        let store = VectorStore::<f64>::open(&path).unwrap();
        assert_eq!(store.product_ids().collect::<Vec<_>>(), vec!["P", "Q"]);
        assert_eq!(store.get("P").unwrap().0.len(), 2);
    }

    #[test]
    fn f32_store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v32.jsonl");
        let v = vec![EmbeddingVector::new(vec![0.1f32, 1.0 / 3.0]).unwrap()];
        save_vectors(&path, "P", &["x".to_string()], &v).unwrap();
        assert_eq!(load_vectors::<f32>(&path, "P").unwrap().1, v);
    }

    proptest! {
        #[test]
        fn arbitrary_finite_values_round_trip(values in prop::collection::vec(-1e300f64..1e300, 1..12)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("v.jsonl");
            let v = vec![EmbeddingVector::new(values).unwrap()];
            save_vectors(&path, "P", &["t".to_string()], &v).unwrap();
            let (_, back) = load_vectors::<f64>(&path, "P").unwrap();
            prop_assert_eq!(back, v);
        }
    }
}
