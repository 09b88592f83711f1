//! Offline bag-of-words embedder: each lowercase word hashes to a signed
//! coordinate, contributions are summed, and the result is L2-normalized.

use super::{Embedder, EmbeddingError, EmbeddingVector};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the word bytes, keyed by the seed and finalized with
/// splitmix64. Stable across platforms and toolchains.
fn word_hash(word: &str, seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix64(seed);
    for b in word.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// Lowercase maximal runs of alphanumeric characters.
pub fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Panics if `dimension < 2`; [`DeterministicEmbedder::new`] validates.
pub fn deterministic_test_embed(text: &str, seed: u64, dimension: usize) -> EmbeddingVector {
    assert!(dimension >= 2, "dimension must be at least 2");
    let mut acc = vec![0.0f64; dimension];
    for word in word_tokens(text) {
        let h = word_hash(&word, seed);
        let coord = (h % dimension as u64) as usize;
        // the sign comes from the high half so it is independent of `coord`
        let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        acc[coord] += sign;
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        acc[0] = 1.0;
    } else {
        acc.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector { values: acc }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeterministicEmbedder {
    seed: u64,
    dimension: usize,
}

impl DeterministicEmbedder {
    pub fn new(seed: u64, dimension: usize) -> Result<Self, EmbeddingError> {
        if dimension < 2 {
            return Err(EmbeddingError::Config(format!(
                "dimension must be at least 2, got {dimension}"
            )));
        }
        Ok(Self { seed, dimension })
    }
}

impl Embedder for DeterministicEmbedder {
    fn id(&self) -> String {
        format!("deterministic-test(seed={},dim={})", self.seed, self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        Ok(texts
            .iter()
            .map(|t| deterministic_test_embed(t, self.seed, self.dimension))
            .collect())
    }
}
