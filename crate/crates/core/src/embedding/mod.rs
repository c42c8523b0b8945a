//! Text → unit-vector embedding behind a pluggable provider.

mod cache;
mod hashing;
#[cfg(feature = "remote")]
mod remote;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{CachedProvider, EmbeddingCache};
pub use hashing::HashingEmbedder;
#[cfg(feature = "remote")]
pub use remote::RemoteEmbedder;

pub const DEFAULT_DIM: usize = 256;

/// Environment variable holding the bearer token for the remote provider.
pub const API_KEY_ENV: &str = "POLYVEC_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Wraps raw values without normalizing. Rejects empty or non-finite input.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("embedding has no dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("embedding has non-finite entries".into()));
        }
        Ok(EmbeddingVector { values })
    }

    /// Scales to unit L2 norm.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let mut v = Self::from_raw(values)?;
        let norm = l2_norm(&v.values);
        if norm == 0.0 {
            return Err(Error::Input("cannot normalize a zero vector".into()));
        }
        v.values.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn negated(&self) -> Self {
        EmbeddingVector {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity in double precision, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_slices(a.values(), b.values())
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        return Err(Error::Input("cosine of a zero vector".into()));
    }
    Ok((dot(a, b) / denom).clamp(-1.0, 1.0))
}

/// Keeps the first `dim` components of a native vector and, optionally,
/// rescales the prefix back to unit length.
pub fn truncate_embedding(native: &[f64], dim: usize, renormalize: bool) -> Result<EmbeddingVector> {
    if dim == 0 || dim > native.len() {
        return Err(Error::config(format!(
            "cannot truncate a {}-d vector to {dim} dimensions",
            native.len()
        )));
    }
    let prefix = native[..dim].to_vec();
    if renormalize {
        EmbeddingVector::normalized(prefix)
    } else {
        EmbeddingVector::from_raw(prefix)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    /// Identifies provider, model and output dimension; keys the cache.
    fn fingerprint(&self) -> String;

    fn dim(&self) -> usize;

    /// Embeds already-validated inputs, one vector per input, same order.
    fn embed_raw(&self, inputs: &[&str]) -> Result<Vec<EmbeddingVector>>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Arc<P> {
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed_raw(&self, inputs: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_raw(inputs)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed_raw(&self, inputs: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_raw(inputs)
    }
}

/// Validates inputs, embeds them and checks the provider kept its contract.
pub fn embed_batch(provider: &dyn EmbeddingProvider, inputs: &[&str]) -> Result<Vec<EmbeddingVector>> {
    if inputs.is_empty() {
        return Err(Error::Input("nothing to embed".into()));
    }
    if let Some(i) = inputs.iter().position(|s| s.trim().is_empty()) {
        return Err(Error::Input(format!("input {i} is blank")));
    }
    let vectors = provider.embed_raw(inputs)?;
    if vectors.len() != inputs.len() {
        return Err(Error::Provider(format!(
            "provider returned {} vectors for {} inputs",
            vectors.len(),
            inputs.len()
        )));
    }
    if let Some(v) = vectors.iter().find(|v| v.dim() != provider.dim()) {
        return Err(Error::Provider(format!(
            "provider returned a {}-d vector, expected {}",
            v.dim(),
            provider.dim()
        )));
    }
    Ok(vectors)
}

pub fn embed_one(provider: &dyn EmbeddingProvider, input: &str) -> Result<EmbeddingVector> {
    Ok(embed_batch(provider, &[input])?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub native_dim: usize,
    pub target_dim: usize,
    pub batch_size: usize,
    pub cache_path: Option<PathBuf>,
    /// Seed of the deterministic provider.
    #[serde(default)]
    pub seed: u64,
    /// Rescale truncated remote vectors to unit length.
    #[serde(default = "default_true")]
    pub renormalize: bool,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_true() -> bool {
    true
}

fn default_in_flight() -> usize {
    4
}

impl ProviderConfig {
    pub fn deterministic(dim: usize) -> Self {
        ProviderConfig {
            kind: ProviderKind::Deterministic,
            endpoint: None,
            model_name: None,
            native_dim: dim,
            target_dim: dim,
            batch_size: 256,
            cache_path: None,
            seed: 0,
            renormalize: true,
            max_in_flight: 1,
        }
    }

    pub fn remote(endpoint: impl Into<String>, model: impl Into<String>, native_dim: usize) -> Self {
        ProviderConfig {
            kind: ProviderKind::Remote,
            endpoint: Some(endpoint.into()),
            model_name: Some(model.into()),
            native_dim,
            target_dim: DEFAULT_DIM.min(native_dim),
            batch_size: 64,
            cache_path: None,
            seed: 0,
            renormalize: true,
            max_in_flight: default_in_flight(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_dim == 0 || self.target_dim > self.native_dim {
            return Err(Error::config(format!(
                "target_dim {} must be in 1..={}",
                self.target_dim, self.native_dim
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.kind == ProviderKind::Remote {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(Error::config("remote provider needs an endpoint"));
            }
            if self.model_name.as_deref().is_none_or(str::is_empty) {
                return Err(Error::config("remote provider needs a model name"));
            }
            if self.max_in_flight == 0 {
                return Err(Error::config("max_in_flight must be positive"));
            }
        }
        Ok(())
    }

    /// Builds the provider, wrapped in a cache (in-memory, plus on-disk when
    /// `cache_path` is set).
    pub fn build(&self) -> Result<CachedProvider<Box<dyn EmbeddingProvider>>> {
        self.validate()?;
        let inner: Box<dyn EmbeddingProvider> = match self.kind {
            ProviderKind::Deterministic => {
                Box::new(HashingEmbedder::new(self.target_dim, self.seed)?)
            }
            #[cfg(feature = "remote")]
            ProviderKind::Remote => Box::new(RemoteEmbedder::from_config(self)?),
            #[cfg(not(feature = "remote"))]
            ProviderKind::Remote => {
                return Err(Error::config(
                    "remote provider support was not compiled in (enable the `remote` feature)",
                ))
            }
        };
        let cache = match &self.cache_path {
            Some(dir) => EmbeddingCache::on_disk(dir)?,
            None => EmbeddingCache::in_memory(),
        };
        Ok(CachedProvider::new(inner, cache, self.batch_size))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::{BigRational, ToPrimitive};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exact rational dot product and norms; only the final sqrt is rounded.
    fn exact_cosine(a: &[f64], b: &[f64]) -> f64 {
        let r = |x: f64| BigRational::from_float(x).unwrap();
        let mut dot = r(0.0);
        let mut na = r(0.0);
        let mut nb = r(0.0);
        for (x, y) in a.iter().zip(b) {
            dot += r(*x) * r(*y);
            na += r(*x) * r(*x);
            nb += r(*y) * r(*y);
        }
        let na = na.to_f64().unwrap();
        let nb = nb.to_f64().unwrap();
        dot.to_f64().unwrap() / (na * nb).sqrt()
    }

    #[test]
    fn cosine_identities() {
        let v = EmbeddingVector::normalized(vec![0.3, -1.2, 2.0, 0.0]).unwrap();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine(&v, &v.negated()).unwrap() + 1.0).abs() < 1e-15);
        let w = EmbeddingVector::from_raw(vec![1.0, 2.0]).unwrap();
        assert!(matches!(cosine(&v, &w), Err(Error::Input(_))));
    }

    #[test]
    fn cosine_matches_exact_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = cosine_slices(&a, &b).unwrap();
            assert!((got - exact_cosine(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_renormalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let native: Vec<f64> = (0..3072).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = truncate_embedding(&native, 256, true).unwrap();
        assert_eq!(t.dim(), 256);
        assert!((t.norm() - 1.0).abs() < 1e-6);
        let scale = native[0] / t.values()[0];
        for (x, y) in native[..256].iter().zip(t.values()) {
            assert!((x / scale - y).abs() < 1e-12);
        }
        let raw = truncate_embedding(&native, 256, false).unwrap();
        assert_eq!(raw.values(), &native[..256]);
        assert!(truncate_embedding(&native, 4000, true).is_err());
    }

    #[test]
    fn batch_rejects_blank_and_empty() {
        let p = HashingEmbedder::new(32, 0).unwrap();
        assert!(matches!(embed_batch(&p, &[]), Err(Error::Input(_))));
        assert!(matches!(embed_batch(&p, &["ok", "  "]), Err(Error::Input(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ProviderConfig::deterministic(256);
        assert!(cfg.validate().is_ok());
        cfg.target_dim = 512;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut remote = ProviderConfig::remote("http://localhost:1/embed", "m", 3072);
        assert!(remote.validate().is_ok());
        remote.endpoint = None;
        assert!(remote.validate().is_err());
    }
}
