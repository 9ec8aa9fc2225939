//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pretext::corpus::{self, ClientDataset, Sample};
use pretext::dp_histogram::NoiseParams;
use pretext::embedder::{EmbeddingProviderConfig, EmbeddingVector};
use pretext::evolution::{self, EvolutionConfig, Providers};
use pretext::fidelity::mean_nn_distance;
use pretext::toy::{self, ToyCorpus, ToyParams};
use pretext::variation::VariationConfig;
use pretext::Embedder;

/// Mask rate for toy runs: one token per step on the 10-token toy texts.
pub const TOY_MASK_PCT: f64 = 0.1;

pub fn toy_config(
    n_clients: usize,
    n_syn: usize,
    t_rounds: usize,
    sigma: f64,
    seed: u64,
) -> EvolutionConfig {
    EvolutionConfig {
        t_rounds,
        n_syn,
        k_lookahead: 4,
        noise: NoiseParams {
            sigma,
            n_train_clients: n_clients,
            threshold_h: 0.0,
            cap: 8,
        },
        variation: VariationConfig {
            mask_pct: TOY_MASK_PCT,
            ..VariationConfig::default()
        },
        embed: EmbeddingProviderConfig::default(),
        delta: 3e-6,
        master_seed: seed,
    }
}

pub fn toy_federation(seed: u64) -> (ToyCorpus, Vec<ClientDataset>) {
    let c = toy::clustered_corpus(&ToyParams::default(), seed);
    let clients = corpus::partition_uniform(&c.train, 20, 8, seed).unwrap();
    (c, clients)
}

/// Mean NN distance from eval samples to (seed union, initial population)
/// after a noiseless toy run.
pub fn convergence_distances(seed: u64) -> (f64, f64) {
    let (c, clients) = toy_federation(seed);
    let cfg = toy_config(20, 64, 5, 0.0, seed);
    let providers = Providers::new(&cfg, &c.public).unwrap();
    let out = evolution::run(&clients, &c.public, &cfg, &providers).unwrap();
    let e = Embedder::new(&cfg.embed).unwrap();
    let ev = e.embed_samples(&c.eval).unwrap();
    let su = e.embed_samples(&out.seed_union).unwrap();
    let init = e.embed_samples(&out.initial_population).unwrap();
    (mean_nn_distance(&ev, &su), mean_nn_distance(&ev, &init))
}

pub fn samples(texts: &[&str]) -> Vec<Sample> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Sample::new(format!("s{i}"), *t))
        .collect()
}

// ---------------------------------------------------------------------------
// oracles

/// Brute-force nearest-neighbor counts: full squared-distance table, then
/// the first index within `tol` of the row minimum.
pub fn brute_force_counts(private: &[EmbeddingVector], cands: &[EmbeddingVector]) -> Vec<f64> {
    let tol = pretext::dp_histogram::TIE_TOLERANCE;
    let table: Vec<Vec<f64>> = private
        .iter()
        .map(|x| {
            cands
                .iter()
                .map(|c| {
                    x.values()
                        .iter()
                        .zip(c.values())
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    let mut counts = vec![0.0; cands.len()];
    for row in table {
        let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let j = row.iter().position(|&d| d <= min + tol).unwrap();
        counts[j] += 1.0;
    }
    counts
}

/// Two-sided one-sample Kolmogorov–Smirnov statistic against `cdf`.
pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

pub fn chi_square(observed: &[f64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum()
}

/// Default accountant grid refined 10x: nine extra points between every
/// pair of neighboring orders.
pub fn fine_orders() -> Vec<f64> {
    let coarse: Vec<f64> = (1..100)
        .map(|x| 1.0 + x as f64 / 10.0)
        .chain((12..64).map(|x| x as f64))
        .collect();
    let mut out = Vec::new();
    for w in coarse.windows(2) {
        for k in 0..10 {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / 10.0);
        }
    }
    out.push(*coarse.last().unwrap());
    out
}

/// Independent RDP -> (eps, delta) for `steps` Gaussian releases at
/// multiplier `z`, minimized over `orders`.
pub fn oracle_epsilon(z: f64, steps: usize, delta: f64, orders: &[f64]) -> f64 {
    orders
        .iter()
        .map(|&a| {
            let rdp = steps as f64 * a / (2.0 * z * z);
            rdp + (1.0 - 1.0 / a).ln() - (delta.ln() + a.ln()) / (a - 1.0)
        })
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

// ---------------------------------------------------------------------------
// pipeline fixtures

pub fn write_toy_corpus(dir: &Path, seed: u64) {
    let c = toy::clustered_corpus(&ToyParams::default(), seed);
    corpus::write_jsonl(dir.join("train.jsonl"), &c.train).unwrap();
    corpus::write_jsonl(dir.join("eval.jsonl"), &c.eval).unwrap();
    corpus::write_jsonl(dir.join("public.jsonl"), &c.public).unwrap();
}

/// Toy run config as JSON; `patch` edits it before it is written.
pub fn toy_run_config(
    dir: &Path,
    out: &str,
    patch: impl FnOnce(&mut serde_json::Value),
) -> PathBuf {
    let mut v = serde_json::json!({
        "corpus": {
            "private_train": "train.jsonl",
            "private_eval": "eval.jsonl",
            "public_pool": "public.jsonl"
        },
        "partition": { "n_clients": 20, "per_client": 8, "cap": 8 },
        "evolution": {
            "t_rounds": 5,
            "n_syn": 64,
            "k_lookahead": 4,
            "variation": { "mask_pct": TOY_MASK_PCT }
        },
        "privacy": { "target_epsilon": 7.58, "delta": 3e-6, "threshold_h": "8.0 × 1.541 × sqrt(2)" },
        "expand": { "target_count": 500, "generator": "markov", "max_new_tokens": 32 },
        "output_dir": out,
        "master_seed": 7
    });
    patch(&mut v);
    let path = dir.join(format!("{out}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

pub fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}
