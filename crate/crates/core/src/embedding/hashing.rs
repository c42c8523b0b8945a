use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};

/// Offline embedder: bag of word 1-, 2- and 3-grams, each projected onto a
/// pseudo-random ±1 direction derived from SHA-256, summed and normalized.
///
/// Strings that share n-grams get high cosine similarity; strings with
/// disjoint vocabularies land near-orthogonal (|cos| ~ 1/sqrt(dim)).
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(HashingEmbedder { dim, seed })
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let words = words(text);
        if words.is_empty() {
            return Err(Error::Input(format!("{text:?} has no embeddable tokens")));
        }
        let mut acc = vec![0.0f64; self.dim];
        for n in 1..=3 {
            for gram in words.windows(n) {
                self.add_feature(&gram.join("\u{1f}"), &mut acc);
            }
        }
        EmbeddingVector::normalized(acc)
    }

    fn add_feature(&self, feature: &str, acc: &mut [f64]) {
        for (block, chunk) in acc.chunks_mut(256).enumerate() {
            let digest = Sha256::new()
                .chain_update(self.seed.to_le_bytes())
                .chain_update((block as u32).to_le_bytes())
                .chain_update(feature.as_bytes())
                .finalize();
            for (i, slot) in chunk.iter_mut().enumerate() {
                let bit = (digest[i / 8] >> (i % 8)) & 1;
                *slot += if bit == 1 { 1.0 } else { -1.0 };
            }
        }
    }
}

/// Lowercased alphanumeric runs.
fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl EmbeddingProvider for HashingEmbedder {
    fn fingerprint(&self) -> String {
        format!("hashing-ngram:v1:dim={}:seed={}", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, inputs: &[&str]) -> Result<Vec<EmbeddingVector>> {
        inputs.iter().map(|s| self.embed_text(s)).collect()
    }
}
