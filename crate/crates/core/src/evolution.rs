//! The evolution loop: vote, resample, vary, and collect survivors.
//!
//! Round `t` (1-based) releases one private histogram over the population
//! `S_t`, draws `n_syn` survivors `S_t'` from it, merges `Set(S_t')` into the
//! seed union and varies the survivors into `S_{t+1}`. The last round stops
//! after the survivor draw since only the survivors feed the seed union.

use indexmap::IndexMap;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{self, PrivacyReport};
use crate::corpus::{ClientDataset, Sample};
use crate::dp_histogram::{self, CandidateSet, NoiseParams, Stage, VoteHistogram};
use crate::embedder::{lookahead_embedding, Embedder, EmbeddingProviderConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::variation::{VariationConfig, Variator};

pub const DEFAULT_DELTA: f64 = 3e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub t_rounds: usize,
    pub n_syn: usize,
    pub k_lookahead: usize,
    pub noise: NoiseParams,
    pub variation: VariationConfig,
    pub embed: EmbeddingProviderConfig,
    pub delta: f64,
    pub master_seed: u64,
}

impl EvolutionConfig {
    /// Full-scale defaults for the strict or loose privacy level:
    /// `N_syn = 1024` at the stricter level and 2048 otherwise, with the
    /// matching threshold for sensitivity 8.
    pub fn for_privacy_level(strict: bool, sigma: f64, n_train_clients: usize) -> Self {
        let base_h = 8.0 * 1.541 * std::f64::consts::SQRT_2;
        let (n_syn, threshold_h) = if strict {
            (1024, 5.9 * base_h)
        } else {
            (2048, base_h)
        };
        Self {
            t_rounds: 11,
            n_syn,
            k_lookahead: 4,
            noise: NoiseParams {
                sigma,
                n_train_clients,
                threshold_h,
                cap: 8,
            },
            variation: VariationConfig::default(),
            embed: EmbeddingProviderConfig::default(),
            delta: DEFAULT_DELTA,
            master_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_rounds == 0 {
            return Err(Error::InvalidConfig("t_rounds must be >= 1".into()));
        }
        if self.n_syn == 0 {
            return Err(Error::InvalidConfig("n_syn must be >= 1".into()));
        }
        if self.k_lookahead == 0 {
            return Err(Error::InvalidConfig("k_lookahead must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        self.noise.validate()?;
        self.variation.validate()?;
        self.embed.validate()
    }
}

/// Embedding and variation providers shared by every round.
#[derive(Debug, Clone)]
pub struct Providers {
    pub embedder: Embedder,
    pub variator: Variator,
}

impl Providers {
    pub fn new(cfg: &EvolutionConfig, public_samples: &[Sample]) -> Result<Self> {
        Ok(Self {
            embedder: Embedder::new(&cfg.embed)?,
            variator: Variator::new(&cfg.variation, public_samples)?,
        })
    }
}

/// Floats each client downloads (lookahead vectors) and uploads (its
/// histogram) in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunicationCost {
    pub download_floats: u64,
    pub upload_floats: u64,
}

pub fn communication_cost(n_syn: usize, dim: usize) -> CommunicationCost {
    CommunicationCost {
        download_floats: n_syn as u64 * dim as u64,
        upload_floats: n_syn as u64,
    }
}

/// Per-round progress record, one JSON line per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub hist_sum_before_threshold: f64,
    pub hist_sum_after_threshold: f64,
    pub distinct_survivors: usize,
    pub seed_union_size: usize,
    pub client_download_floats: u64,
    pub client_upload_floats: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    /// Completed rounds.
    pub round: usize,
    /// `S_{round+1}`, the population the next round votes on.
    pub population: CandidateSet,
    pub surviving_history: Vec<Vec<Sample>>,
    /// `Set(S_1') ∪ ... ∪ Set(S_round')`, keyed by text, in first-seen order.
    pub seed_union: IndexMap<String, Sample>,
    /// Private histogram releases so far.
    pub releases: usize,
}

impl EvolutionState {
    pub fn new(population: CandidateSet) -> Self {
        Self {
            round: 0,
            population,
            surviving_history: Vec::new(),
            seed_union: IndexMap::new(),
            releases: 0,
        }
    }

    pub fn seed_union_samples(&self) -> Vec<Sample> {
        self.seed_union.values().cloned().collect()
    }
}

/// Computes lookahead vectors for `samples` as the population of `round`.
pub fn build_candidates(
    samples: Vec<Sample>,
    round: usize,
    k: usize,
    providers: &Providers,
    master_seed: u64,
) -> Result<CandidateSet> {
    let lookahead = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let seed = rng::derive_seed(master_seed, "lookahead", &[round as u64, i as u64]);
            lookahead_embedding(s, k, &providers.embedder, &providers.variator, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    CandidateSet::new(samples, lookahead)
}

/// `S_1`: `n_syn` public samples drawn uniformly with replacement.
pub fn init_population(
    public_samples: &[Sample],
    n_syn: usize,
    k: usize,
    providers: &Providers,
    seed: u64,
) -> Result<CandidateSet> {
    if public_samples.is_empty() {
        return Err(Error::EmptyCorpus(
            "initial population needs a public pool".into(),
        ));
    }
    let mut r = rng::stream(seed, "init", &[]);
    let samples = (0..n_syn)
        .map(|i| public_samples[r.gen_range(0..public_samples.len())].with_id(format!("syn-1-{i}")))
        .collect();
    build_candidates(samples, 1, k, providers, seed)
}

/// Draws `n_syn` survivors i.i.d. from the normalized histogram, or
/// uniformly over the population when the histogram is all zeros.
pub fn sample_survivors(
    hist: &VoteHistogram,
    population: &CandidateSet,
    n_syn: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    if hist.len() != population.len() {
        return Err(Error::LengthMismatch {
            expected: population.len(),
            actual: hist.len(),
        });
    }
    if population.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if hist.stage() != Stage::Thresholded {
        return Err(Error::WrongStage {
            expected: Stage::Thresholded,
            actual: hist.stage(),
        });
    }
    let mut r = rng::stream(seed, "survivors", &[]);
    let samples = population.samples();
    let picks: Vec<usize> = if hist.total() > 0.0 {
        let dist =
            WeightedIndex::new(hist.counts()).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        (0..n_syn).map(|_| dist.sample(&mut r)).collect()
    } else {
        (0..n_syn).map(|_| r.gen_range(0..samples.len())).collect()
    };
    Ok(picks.into_iter().map(|i| samples[i].clone()).collect())
}

fn check_clients(clients: &[ClientDataset], cfg: &EvolutionConfig) -> Result<()> {
    if clients.is_empty() {
        return Err(Error::InvalidConfig("no training clients".into()));
    }
    if clients.len() != cfg.noise.n_train_clients {
        return Err(Error::InvalidConfig(format!(
            "noise calibrated for {} clients but {} are voting",
            cfg.noise.n_train_clients,
            clients.len()
        )));
    }
    if let Some(c) = clients
        .iter()
        .find(|c| c.voting_samples().len() > cfg.noise.cap)
    {
        return Err(Error::InvalidConfig(format!(
            "client {} votes with {} samples, above the sensitivity cap {}",
            c.client_id,
            c.voting_samples().len(),
            cfg.noise.cap
        )));
    }
    Ok(())
}

/// Releases the round's histogram and draws survivors; merges them into the
/// seed union. Does not vary.
fn vote_and_select(
    state: &mut EvolutionState,
    clients: &[ClientDataset],
    cfg: &EvolutionConfig,
    providers: &Providers,
) -> Result<(Vec<Sample>, RoundRecord)> {
    let t = state.round + 1;
    let hists = dp_histogram::dp_histogram_round_detailed(
        clients,
        &state.population,
        &cfg.noise,
        &providers.embedder,
        rng::derive_seed(cfg.master_seed, "histogram", &[t as u64]),
    )?;
    state.releases += 1;
    let survivors = sample_survivors(
        &hists.thresholded,
        &state.population,
        cfg.n_syn,
        rng::derive_seed(cfg.master_seed, "survivors", &[t as u64]),
    )?;
    let before = state.seed_union.len();
    for s in &survivors {
        if !state.seed_union.contains_key(&s.text) {
            state.seed_union.insert(s.text.clone(), s.clone());
        }
    }
    let distinct = {
        let mut texts: Vec<&str> = survivors.iter().map(|s| s.text.as_str()).collect();
        texts.sort_unstable();
        texts.dedup();
        texts.len()
    };
    let cost = communication_cost(state.population.len(), providers.embedder.dim());
    let record = RoundRecord {
        round: t,
        hist_sum_before_threshold: hists.aggregated.total(),
        hist_sum_after_threshold: hists.thresholded.total(),
        distinct_survivors: distinct,
        seed_union_size: state.seed_union.len(),
        client_download_floats: cost.download_floats,
        client_upload_floats: cost.upload_floats,
    };
    log::debug!(
        "round {t}: hist {:.2} -> {:.2}, {distinct} distinct survivors, seed union {before} -> {}",
        record.hist_sum_before_threshold,
        record.hist_sum_after_threshold,
        record.seed_union_size
    );
    state.surviving_history.push(survivors.clone());
    state.round = t;
    Ok((survivors, record))
}

/// Varies survivors of round `t` into the population of round `t + 1`.
fn next_population(
    survivors: &[Sample],
    t: usize,
    cfg: &EvolutionConfig,
    providers: &Providers,
) -> Result<CandidateSet> {
    let varied = survivors
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let seed = rng::derive_seed(cfg.master_seed, "variation", &[t as u64, i as u64]);
            Ok(providers
                .variator
                .vary(s, seed)?
                .with_id(format!("syn-{}-{i}", t + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    build_candidates(varied, t + 1, cfg.k_lookahead, providers, cfg.master_seed)
}

/// One full round: histogram, survivor draw, variation, fresh lookahead.
pub fn evolve_round(
    mut state: EvolutionState,
    clients: &[ClientDataset],
    cfg: &EvolutionConfig,
    providers: &Providers,
) -> Result<(EvolutionState, RoundRecord)> {
    if state.round >= cfg.t_rounds {
        return Err(Error::InvalidConfig(format!(
            "all {} rounds already ran",
            cfg.t_rounds
        )));
    }
    check_clients(clients, cfg)?;
    let (survivors, record) = vote_and_select(&mut state, clients, cfg, providers)?;
    state.population = next_population(&survivors, state.round, cfg, providers)?;
    Ok((state, record))
}

#[derive(Debug, Clone)]
pub struct EvolutionOutput {
    /// Deduplicated union of all survivor sets.
    pub seed_union: Vec<Sample>,
    pub report: PrivacyReport,
    pub rounds: Vec<RoundRecord>,
    pub initial_population: Vec<Sample>,
}

/// Runs all rounds and returns the seed union with its privacy report.
pub fn run(
    clients: &[ClientDataset],
    public_samples: &[Sample],
    cfg: &EvolutionConfig,
    providers: &Providers,
) -> Result<EvolutionOutput> {
    cfg.validate()?;
    check_clients(clients, cfg)?;
    let population = init_population(
        public_samples,
        cfg.n_syn,
        cfg.k_lookahead,
        providers,
        cfg.master_seed,
    )?;
    let initial_population = population.samples().to_vec();
    let mut state = EvolutionState::new(population);
    let mut rounds = Vec::with_capacity(cfg.t_rounds);
    for _ in 1..cfg.t_rounds {
        let (next, record) = evolve_round(state, clients, cfg, providers)?;
        state = next;
        rounds.push(record);
    }
    let (_, record) = vote_and_select(&mut state, clients, cfg, providers)?;
    rounds.push(record);
    let report = accountant::account(cfg.noise.sigma, cfg.noise.cap, state.releases, cfg.delta)?;
    Ok(EvolutionOutput {
        seed_union: state.seed_union_samples(),
        report,
        rounds,
        initial_population,
    })
}
