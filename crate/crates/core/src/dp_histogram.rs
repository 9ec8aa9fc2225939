//! Private nearest-neighbor voting histogram.
//!
//! Each client counts, for every candidate, how many of its private samples
//! have that candidate as nearest neighbor, then adds Gaussian noise with
//! variance `sigma^2 / n_clients`. The server only learns the sum of the
//! noisy histograms, which carries total noise variance `sigma^2`, and
//! thresholds it at `H`.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClientDataset, Sample};
use crate::embedder::{Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::rng;

/// Synthetic candidates and the lookahead vectors clients vote against.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    samples: Vec<Sample>,
    lookahead: Vec<EmbeddingVector>,
}

impl CandidateSet {
    pub fn new(samples: Vec<Sample>, lookahead: Vec<EmbeddingVector>) -> Result<Self> {
        if samples.len() != lookahead.len() {
            return Err(Error::LengthMismatch {
                expected: samples.len(),
                actual: lookahead.len(),
            });
        }
        if let Some(first) = lookahead.first() {
            if let Some(v) = lookahead.iter().find(|v| v.dim() != first.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    actual: v.dim(),
                });
            }
        }
        Ok(Self { samples, lookahead })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn lookahead(&self) -> &[EmbeddingVector] {
        &self.lookahead
    }

    pub fn dim(&self) -> Option<usize> {
        self.lookahead.first().map(EmbeddingVector::dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Raw,
    Noisy,
    Aggregated,
    Thresholded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteHistogram {
    counts: Vec<f64>,
    stage: Stage,
}

impl VoteHistogram {
    pub fn new(counts: Vec<f64>, stage: Stage) -> Self {
        Self { counts, stage }
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn into_counts(self) -> Vec<f64> {
        self.counts
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    fn expect_stage(&self, expected: Stage) -> Result<()> {
        if self.stage != expected {
            return Err(Error::WrongStage {
                expected,
                actual: self.stage,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Standard deviation of the aggregate noise.
    pub sigma: f64,
    pub n_train_clients: usize,
    pub threshold_h: f64,
    /// Per-client sample cap, which is also the L2 sensitivity.
    pub cap: usize,
}

impl NoiseParams {
    pub fn per_client_std(&self) -> f64 {
        self.sigma / (self.n_train_clients.max(1) as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.n_train_clients == 0 {
            return Err(Error::InvalidConfig(
                "need at least one training client".into(),
            ));
        }
        if !(self.threshold_h >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold must be >= 0, got {}",
                self.threshold_h
            )));
        }
        if self.cap == 0 {
            return Err(Error::InvalidConfig("cap must be >= 1".into()));
        }
        Ok(())
    }
}

/// Squared distances closer than this count as ties. Orthogonal unit
/// vectors, common with sparse hashed embeddings, sit at exactly `2` but
/// round either side of it.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Index of the nearest candidate; ties go to the lowest index.
pub fn nearest(x: &EmbeddingVector, candidates: &[EmbeddingVector]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in candidates.iter().enumerate() {
        let d = x.sq_dist_unchecked(c);
        if d < best_d - TIE_TOLERANCE {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Counts nearest-neighbor votes from already embedded private samples.
pub fn vote_embedded(private: &[EmbeddingVector], cands: &CandidateSet) -> Result<VoteHistogram> {
    if cands.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let dim = cands.dim().expect("non-empty");
    let mut counts = vec![0.0; cands.len()];
    for x in private {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.dim(),
            });
        }
        counts[nearest(x, cands.lookahead())] += 1.0;
    }
    Ok(VoteHistogram::new(counts, Stage::Raw))
}

/// One client's raw vote histogram over at most `cap` of its samples.
pub fn client_vote(
    client: &ClientDataset,
    cands: &CandidateSet,
    embedder: &Embedder,
) -> Result<VoteHistogram> {
    if cands.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let private = embedder.embed_samples(client.voting_samples())?;
    vote_embedded(&private, cands)
}

pub fn add_client_noise(
    hist: VoteHistogram,
    params: &NoiseParams,
    seed: u64,
) -> Result<VoteHistogram> {
    hist.expect_stage(Stage::Raw)?;
    let std = params.per_client_std();
    let mut counts = hist.counts;
    if std > 0.0 {
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut r = rng::stream(seed, "client-noise", &[]);
        for c in counts.iter_mut() {
            *c += normal.sample(&mut r);
        }
    }
    Ok(VoteHistogram::new(counts, Stage::Noisy))
}

/// Simulated secure aggregation: consumes the noisy client histograms and
/// returns only their sum, accumulated in client order.
pub fn secure_aggregate(hists: Vec<VoteHistogram>) -> Result<VoteHistogram> {
    let mut iter = hists.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidConfig("no client histograms to aggregate".into()))?;
    first.expect_stage(Stage::Noisy)?;
    let mut sum = first.counts;
    for h in iter {
        h.expect_stage(Stage::Noisy)?;
        if h.len() != sum.len() {
            return Err(Error::LengthMismatch {
                expected: sum.len(),
                actual: h.len(),
            });
        }
        for (s, v) in sum.iter_mut().zip(h.counts) {
            *s += v;
        }
    }
    Ok(VoteHistogram::new(sum, Stage::Aggregated))
}

pub fn threshold(hist: VoteHistogram, h: f64) -> Result<VoteHistogram> {
    hist.expect_stage(Stage::Aggregated)?;
    let counts = hist.counts.into_iter().map(|x| (x - h).max(0.0)).collect();
    Ok(VoteHistogram::new(counts, Stage::Thresholded))
}

/// Aggregate before and after thresholding, as observed by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundHistograms {
    pub aggregated: VoteHistogram,
    pub thresholded: VoteHistogram,
}

/// Full private histogram release. Client `i` draws its noise from the
/// stream `(seed, "client", i)`.
pub fn dp_histogram_round_detailed(
    clients: &[ClientDataset],
    cands: &CandidateSet,
    params: &NoiseParams,
    embedder: &Embedder,
    seed: u64,
) -> Result<RoundHistograms> {
    params.validate()?;
    if cands.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let noisy: Vec<VoteHistogram> = clients
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let raw = client_vote(c, cands, embedder)?;
            add_client_noise(raw, params, client_noise_seed(seed, i))
        })
        .collect::<Result<_>>()?;
    let aggregated = secure_aggregate(noisy)?;
    let thresholded = threshold(aggregated.clone(), params.threshold_h)?;
    Ok(RoundHistograms {
        aggregated,
        thresholded,
    })
}

pub fn dp_histogram_round(
    clients: &[ClientDataset],
    cands: &CandidateSet,
    params: &NoiseParams,
    embedder: &Embedder,
    seed: u64,
) -> Result<VoteHistogram> {
    Ok(dp_histogram_round_detailed(clients, cands, params, embedder, seed)?.thresholded)
}

pub fn client_noise_seed(round_seed: u64, client_index: usize) -> u64 {
    rng::derive_seed(round_seed, "client", &[client_index as u64])
}
