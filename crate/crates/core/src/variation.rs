//! Text variation by iterated random masking and mask filling.
//!
//! Each step masks `ceil(mask_pct * n)` of the `n` whitespace tokens,
//! chosen uniformly without replacement, and fills every masked slot from
//! the fill provider. Steps redraw their positions independently.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::rng;
use crate::sidecar::{self, SidecarClient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillProviderKind {
    Unigram,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationConfig {
    pub mask_pct: f64,
    pub w_steps: usize,
    pub provider: FillProviderKind,
    pub remote_url: Option<String>,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self {
            mask_pct: 0.30,
            w_steps: 2,
            provider: FillProviderKind::Unigram,
            remote_url: None,
        }
    }
}

impl VariationConfig {
    pub fn identity() -> Self {
        Self {
            mask_pct: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_pct) {
            return Err(Error::InvalidConfig(format!(
                "mask_pct must lie in [0, 1], got {}",
                self.mask_pct
            )));
        }
        if self.provider == FillProviderKind::Remote
            && sidecar::resolve_url(self.remote_url.as_deref()).is_none()
        {
            return Err(Error::InvalidConfig(
                "remote variation provider needs remote_url".into(),
            ));
        }
        Ok(())
    }
}

/// Number of positions masked per step. The small epsilon keeps
/// `0.3 * 10` from rounding up to 4 through float error.
pub fn mask_count(mask_pct: f64, n_tokens: usize) -> usize {
    let raw = (mask_pct * n_tokens as f64 - 1e-9).ceil();
    (raw.max(0.0) as usize).min(n_tokens)
}

/// Unigram fill distribution estimated from public text.
#[derive(Debug, Clone)]
pub struct FillModel {
    vocabulary: Vec<String>,
    weights: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl FillModel {
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.vocabulary[self.sampler.sample(rng)]
    }
}

/// Builds the fill model from public samples. Vocabulary is sorted so the
/// model does not depend on corpus order.
pub fn train_fill_model(public_samples: &[Sample]) -> Result<FillModel> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for s in public_samples {
        for t in &s.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(Error::EmptyCorpus(
            "fill model needs at least one non-empty public sample".into(),
        ));
    }
    let vocabulary: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
    let weights: Vec<f64> = counts.values().map(|&c| c as f64 / total as f64).collect();
    let sampler =
        WeightedIndex::new(counts.values().map(|&c| c as f64)).expect("positive total weight");
    Ok(FillModel {
        vocabulary,
        weights,
        sampler,
    })
}

/// One unigram-filled variation of `s`.
pub fn vary(s: &Sample, fill: &FillModel, cfg: &VariationConfig, seed: u64) -> Sample {
    let mut rng = rng::stream(seed, "vary", &[]);
    let mut tokens = s.tokens.clone();
    let n = tokens.len();
    let m = mask_count(cfg.mask_pct, n);
    if m > 0 {
        for _ in 0..cfg.w_steps {
            for pos in index::sample(&mut rng, n, m) {
                tokens[pos] = fill.draw(&mut rng).to_owned();
            }
        }
    }
    if m == 0 {
        return Sample::new(format!("{}-var", s.id), s.text.clone());
    }
    Sample::from_tokens(format!("{}-var", s.id), tokens)
}

/// A configured variation source, built-in or remote.
#[derive(Debug, Clone)]
pub enum Variator {
    Unigram {
        fill: FillModel,
        cfg: VariationConfig,
    },
    Remote {
        client: SidecarClient,
        cfg: VariationConfig,
    },
}

impl Variator {
    /// Builds the variator for `cfg`. The unigram provider is trained on
    /// `public_samples`, which must never contain private client text.
    pub fn new(cfg: &VariationConfig, public_samples: &[Sample]) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.provider {
            FillProviderKind::Unigram => Variator::Unigram {
                fill: train_fill_model(public_samples)?,
                cfg: cfg.clone(),
            },
            FillProviderKind::Remote => Variator::Remote {
                client: SidecarClient::new(
                    sidecar::resolve_url(cfg.remote_url.as_deref()).expect("validated"),
                ),
                cfg: cfg.clone(),
            },
        })
    }

    pub fn config(&self) -> &VariationConfig {
        match self {
            Variator::Unigram { cfg, .. } | Variator::Remote { cfg, .. } => cfg,
        }
    }

    pub fn vary(&self, s: &Sample, seed: u64) -> Result<Sample> {
        match self {
            Variator::Unigram { fill, cfg } => Ok(vary(s, fill, cfg, seed)),
            Variator::Remote { client, cfg } => {
                let texts = client.variation(
                    std::slice::from_ref(&s.text),
                    cfg.mask_pct,
                    cfg.w_steps,
                    seed,
                )?;
                Ok(Sample::new(
                    format!("{}-var", s.id),
                    texts.into_iter().next().expect("length checked"),
                ))
            }
        }
    }
}
