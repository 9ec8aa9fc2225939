//! Text embeddings, the distance between them, and lookahead embeddings.
//!
//! The built-in provider hashes character n-grams of the lowercased text
//! into `dim` signed buckets (FNV-1a 64 for the bucket, FNV-1a 64 with a
//! second offset basis for the sign) and L2-normalizes the result.

use std::hash::Hasher;

use fnv::FnvHasher;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::rng;
use crate::sidecar::{self, SidecarClient};
use crate::variation::Variator;

pub const DEFAULT_DIM: usize = 384;

/// Offset basis of the sign hash.
pub const SIGN_HASH_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

/// A fixed-dimension embedding. Unit norm, or zero for texts with no content.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Scales to unit L2 norm; the zero vector stays zero.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.0.iter_mut().for_each(|v| *v /= n);
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Squared distance without the dimension check.
    pub(crate) fn sq_dist_unchecked(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Euclidean distance between two embeddings of equal dimension.
pub fn distance(y: &EmbeddingVector, z: &EmbeddingVector) -> Result<f64> {
    if y.dim() != z.dim() {
        return Err(Error::DimensionMismatch {
            expected: y.dim(),
            actual: z.dim(),
        });
    }
    Ok(y.sq_dist_unchecked(z).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    HashedNgram,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingProviderConfig {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub remote_url: Option<String>,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::HashedNgram,
            dim: DEFAULT_DIM,
            ngram_min: 3,
            ngram_max: 5,
            remote_url: None,
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.ngram_min && self.ngram_min <= self.ngram_max && self.ngram_max <= 8) {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= ngram_min <= ngram_max <= 8, got {}..{}",
                self.ngram_min, self.ngram_max
            )));
        }
        if self.dim < 8 {
            return Err(Error::InvalidConfig(format!(
                "dim must be >= 8, got {}",
                self.dim
            )));
        }
        if self.kind == EmbeddingKind::Remote
            && sidecar::resolve_url(self.remote_url.as_deref()).is_none()
        {
            return Err(Error::InvalidConfig(
                "remote embedding provider needs remote_url".into(),
            ));
        }
        Ok(())
    }
}

fn fnv1a(key: u64, bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::with_key(key);
    h.write(bytes);
    h.finish()
}

/// Signed feature hashing of character n-grams. A non-empty text shorter
/// than `ngram_min` characters is hashed as a single gram.
pub fn hashed_ngram_embedding(
    text: &str,
    dim: usize,
    ngram_min: usize,
    ngram_max: usize,
) -> EmbeddingVector {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut values = vec![0.0; dim];
    let mut add = |gram: &str| {
        let bucket = (fnv1a(0xcbf2_9ce4_8422_2325, gram.as_bytes()) % dim as u64) as usize;
        let sign = if fnv1a(SIGN_HASH_KEY, gram.as_bytes()) >> 63 == 0 {
            1.0
        } else {
            -1.0
        };
        values[bucket] += sign;
    };
    if !chars.is_empty() && chars.len() < ngram_min {
        add(&lower);
    }
    let mut gram = String::new();
    for n in ngram_min..=ngram_max {
        for w in chars.windows(n) {
            gram.clear();
            gram.extend(w);
            add(&gram);
        }
    }
    EmbeddingVector(values).normalized()
}

/// A configured embedding model Φ.
#[derive(Debug, Clone)]
pub enum Embedder {
    Hashed(EmbeddingProviderConfig),
    Remote { client: SidecarClient, dim: usize },
}

impl Embedder {
    pub fn new(cfg: &EmbeddingProviderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.kind {
            EmbeddingKind::HashedNgram => Embedder::Hashed(cfg.clone()),
            EmbeddingKind::Remote => Embedder::Remote {
                client: SidecarClient::new(
                    sidecar::resolve_url(cfg.remote_url.as_deref()).expect("validated"),
                ),
                dim: cfg.dim,
            },
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Embedder::Hashed(cfg) => cfg.dim,
            Embedder::Remote { dim, .. } => *dim,
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self.embed_batch(&[text.to_owned()])?.remove(0))
    }

    /// Embeds many texts; output order follows input order.
    pub fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        match self {
            Embedder::Hashed(cfg) => Ok(texts
                .par_iter()
                .map(|t| hashed_ngram_embedding(t, cfg.dim, cfg.ngram_min, cfg.ngram_max))
                .collect()),
            Embedder::Remote { client, dim } => {
                if texts.is_empty() {
                    return Ok(Vec::new());
                }
                Ok(client
                    .embed(texts, *dim)?
                    .into_iter()
                    .map(|v| EmbeddingVector(v).normalized())
                    .collect())
            }
        }
    }

    pub fn embed_samples(&self, samples: &[Sample]) -> Result<Vec<EmbeddingVector>> {
        let texts: Vec<String> = samples.iter().map(|s| s.text.clone()).collect();
        self.embed_batch(&texts)
    }
}

/// Mean embedding of `k` seeded variations of `z`. Not re-normalized.
pub fn lookahead_embedding(
    z: &Sample,
    k: usize,
    embedder: &Embedder,
    variator: &Variator,
    seed: u64,
) -> Result<EmbeddingVector> {
    if k == 0 {
        return Err(Error::InvalidConfig("lookahead K must be >= 1".into()));
    }
    let variations: Vec<Sample> = (0..k as u64)
        .into_par_iter()
        .map(|i| variator.vary(z, rng::derive_seed(seed, "lookahead", &[i])))
        .collect::<Result<_>>()?;
    let embeddings = embedder.embed_samples(&variations)?;
    let mut mean = vec![0.0; embedder.dim()];
    for e in &embeddings {
        for (m, v) in mean.iter_mut().zip(e.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    Ok(EmbeddingVector(mean))
}
