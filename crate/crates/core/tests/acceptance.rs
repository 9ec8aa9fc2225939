//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::fs;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use pretext::accountant;
use pretext::corpus::ClientDataset;
use pretext::dp_histogram::{self, CandidateSet, NoiseParams, Stage, VoteHistogram};
use pretext::evolution::{self, RoundRecord};
use pretext::pipeline::{self, RunConfig, PRIVACY_FILE, ROUNDS_FILE, SYNTHETIC_FILE};
use pretext::{rng, Embedder, EmbeddingProviderConfig, Sample};

use common::*;

type Outcome = (bool, String);

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

const WORDS: [&str; 8] = [
    "red", "green", "blue", "cyan", "plum", "gold", "teal", "navy",
];

fn random_text<R: Rng>(r: &mut R) -> String {
    let n = r.gen_range(1..=4);
    (0..n)
        .map(|_| *WORDS.choose(r).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random clients over a small vocabulary (so duplicate texts and exact
/// ties occur) plus a candidate set whose lookahead is the plain embedding.
fn random_instance(
    seed: u64,
    embedder: &Embedder,
) -> (Vec<ClientDataset>, CandidateSet, Vec<Sample>) {
    let mut r = rng::stream(seed, "instance", &[]);
    let n_priv = r.gen_range(1..=64);
    let n_cand = r.gen_range(1..=32);
    let private: Vec<Sample> = (0..n_priv)
        .map(|i| Sample::new(format!("p{i}"), random_text(&mut r)))
        .collect();
    let cands: Vec<Sample> = (0..n_cand)
        .map(|i| Sample::new(format!("c{i}"), random_text(&mut r)))
        .collect();
    let n_clients = r.gen_range(1..=n_priv.min(8));
    let mut clients: Vec<ClientDataset> = (0..n_clients)
        .map(|i| ClientDataset {
            client_id: i,
            samples: Vec::new(),
            cap: usize::MAX,
        })
        .collect();
    for (i, s) in private.iter().enumerate() {
        let c = if i < n_clients {
            i
        } else {
            r.gen_range(0..n_clients)
        };
        clients[c].samples.push(s.clone());
    }
    for c in &mut clients {
        c.cap = c.samples.len();
    }
    let look = embedder.embed_samples(&cands).unwrap();
    (clients, CandidateSet::new(cands, look).unwrap(), private)
}

fn noiseless_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let embedder = Embedder::new(&EmbeddingProviderConfig::default()).unwrap();
    let mut mismatches = 0;
    for seed in 0..200 {
        let (clients, cands, private) = random_instance(seed, &embedder);
        let params = NoiseParams {
            sigma: 0.0,
            n_train_clients: clients.len(),
            threshold_h: 0.0,
            cap: 64,
        };
        let got =
            dp_histogram::dp_histogram_round(&clients, &cands, &params, &embedder, seed).unwrap();
        let priv_e = embedder.embed_samples(&private).unwrap();
        let want = brute_force_counts(&priv_e, cands.lookahead());
        if got.counts() != want.as_slice() {
            mismatches += 1;
        }
    }
    let t = start.elapsed();
    (
        mismatches == 0 && within(t, 10),
        format!("{mismatches}/200 mismatches, {:.2}s", t.as_secs_f64()),
    )
}

fn noise_law() -> Outcome {
    let embedder = Embedder::new(&EmbeddingProviderConfig::default()).unwrap();
    let sigma = 3.0;
    let mut residuals = Vec::with_capacity(10_000);
    let mut seed = 0;
    while residuals.len() < 10_000 {
        let (clients, cands, private) = random_instance(seed, &embedder);
        let params = NoiseParams {
            sigma,
            n_train_clients: clients.len(),
            threshold_h: 0.0,
            cap: 64,
        };
        let h = dp_histogram::dp_histogram_round_detailed(
            &clients,
            &cands,
            &params,
            &embedder,
            seed + 1000,
        )
        .unwrap();
        let exact = brute_force_counts(
            &embedder.embed_samples(&private).unwrap(),
            cands.lookahead(),
        );
        residuals.extend(h.aggregated.counts().iter().zip(&exact).map(|(a, e)| a - e));
        seed += 1;
    }
    residuals.truncate(10_000);
    let normal = Normal::new(0.0, sigma).unwrap();
    let d = ks_statistic(residuals, |x| normal.cdf(x));
    let crit = ks_critical_001(10_000);

    let n_clients = 25;
    let params = NoiseParams {
        sigma,
        n_train_clients: n_clients,
        threshold_h: 0.0,
        cap: 8,
    };
    let raw = VoteHistogram::new(vec![0.0; 100_000], Stage::Raw);
    let noisy = dp_histogram::add_client_noise(raw, &params, 42).unwrap();
    let xs = noisy.counts();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    let want = sigma * sigma / n_clients as f64;
    let rel = (var - want).abs() / want;

    (
        d < crit && rel < 0.02,
        format!("KS D={d:.5} < {crit:.5}; per-client var {var:.5} vs {want:.5} (rel {rel:.4})"),
    )
}

fn accountant_round_trip() -> Outcome {
    let start = Instant::now();
    let fine = fine_orders();
    let mut worst_gap: f64 = 0.0;
    let mut all_in = true;
    let mut lines = Vec::new();
    for target in [1.29, 7.58] {
        for cap in [8, 16] {
            let r = accountant::calibrate_sigma(target, 3e-6, 11, cap).unwrap();
            let re = accountant::account(r.sigma, cap, 11, 3e-6).unwrap();
            let ok = re.epsilon >= target - 1e-3 && re.epsilon <= target;
            all_in &= ok;
            let oracle = oracle_epsilon(r.sigma / cap as f64, 11, 3e-6, &fine);
            let gap = (re.epsilon - oracle).abs() / oracle;
            worst_gap = worst_gap.max(gap);
            lines.push(format!(
                "eps={target} cap={cap} sigma={:.4} -> {:.5}",
                r.sigma, re.epsilon
            ));
        }
    }
    let t = start.elapsed();
    (
        all_in && worst_gap <= 0.02 && within(t, 5),
        format!(
            "{}; coarse vs fine worst rel gap {worst_gap:.5}; {:.2}s",
            lines.join("; "),
            t.as_secs_f64()
        ),
    )
}

fn thresholding_and_sampling() -> Outcome {
    // exhaustive threshold check over a small value lattice
    let values: Vec<f64> = (-4..=8).map(|x| x as f64 * 0.5).collect();
    let mut threshold_ok = true;
    let mut checked = 0;
    for &a in &values {
        for &b in &values {
            for &c in &values {
                for h in (0..=6).map(|x| x as f64 * 0.5) {
                    let got = dp_histogram::threshold(
                        VoteHistogram::new(vec![a, b, c], Stage::Aggregated),
                        h,
                    )
                    .unwrap();
                    let want: Vec<f64> = [a, b, c]
                        .iter()
                        .map(|x| if x - h > 0.0 { x - h } else { 0.0 })
                        .collect();
                    threshold_ok &=
                        got.counts() == want.as_slice() && got.stage() == Stage::Thresholded;
                    checked += 1;
                }
            }
        }
    }

    let pop = |n: usize| {
        let s: Vec<Sample> = (0..n)
            .map(|i| Sample::new(format!("c{i}"), format!("t{i}")))
            .collect();
        CandidateSet::new(s, vec![pretext::EmbeddingVector::zeros(4); n]).unwrap()
    };
    let counts = vec![1.0, 2.5, 0.0, 4.0, 2.5];
    let total: f64 = counts.iter().sum();
    let p5 = pop(5);
    let draws = 100_000;
    let s = evolution::sample_survivors(
        &VoteHistogram::new(counts.clone(), Stage::Thresholded),
        &p5,
        draws,
        9,
    )
    .unwrap();
    let mut freq = [0.0; 5];
    for x in &s {
        freq[x.id[1..].parse::<usize>().unwrap()] += 1.0 / draws as f64;
    }
    let freq_gap = freq
        .iter()
        .zip(&counts)
        .map(|(f, c)| (f - c / total).abs())
        .fold(0.0, f64::max);

    let p4 = pop(4);
    let zero = VoteHistogram::new(vec![0.0; 4], Stage::Thresholded);
    let mut observed = vec![0.0; 4];
    for rep in 0..10_000 {
        for x in evolution::sample_survivors(&zero, &p4, 8, rep).unwrap() {
            observed[x.id[1..].parse::<usize>().unwrap()] += 1.0;
        }
    }
    let chi = chi_square(&observed, &[20_000.0; 4]);
    // chi-square critical value, 3 degrees of freedom, 0.01
    let chi_crit = 11.345;

    (
        threshold_ok && freq_gap <= 0.01 && chi < chi_crit,
        format!(
            "{checked} threshold cases ok={threshold_ok}; max frequency gap {freq_gap:.4}; uniform fallback chi2 {chi:.3} < {chi_crit}"
        ),
    )
}

fn convergence_property() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..10 {
        let (syn, init) = convergence_distances(seed);
        if syn < init {
            wins += 1;
        }
        detail.push(format!("{syn:.3}/{init:.3}"));
    }
    let t = start.elapsed();
    (
        wins >= 9 && within(t, 60),
        format!(
            "{wins}/10 seeds improve [{}], {:.2}s",
            detail.join(" "),
            t.as_secs_f64()
        ),
    )
}

fn run_toy(
    dir: &std::path::Path,
    name: &str,
    patch: impl FnOnce(&mut serde_json::Value),
) -> std::path::PathBuf {
    let cfg_path = toy_run_config(dir, name, patch);
    let cfg = RunConfig::load(&cfg_path).unwrap();
    pipeline::run_pipeline(&cfg).unwrap();
    cfg.output_dir
}

fn post_processing_invariance() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    write_toy_corpus(dir.path(), 3);
    let mut reports = Vec::new();
    for (target, k) in [(0, 4), (2000, 4), (0, 1), (2000, 1)] {
        let out = run_toy(dir.path(), &format!("pp-{target}-{k}"), |v| {
            v["expand"]["target_count"] = target.into();
            v["evolution"]["k_lookahead"] = k.into();
        });
        reports.push(fs::read(out.join(PRIVACY_FILE)).unwrap());
    }
    let identical = reports.windows(2).all(|w| w[0] == w[1]);
    let v: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    (
        identical && v["steps"] == 5,
        format!(
            "4 runs (target_count 0/2000 x K 1/4) identical={identical}, steps={}",
            v["steps"]
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    write_toy_corpus(dir.path(), 4);
    let a = run_toy(dir.path(), "det-a", |_| {});
    let b = run_toy(dir.path(), "det-b", |_| {});
    let same = |f: &str| fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap();
    let (syn, privacy) = (same(SYNTHETIC_FILE), same(PRIVACY_FILE));
    (
        syn && privacy,
        format!("synthetic identical={syn}, privacy report identical={privacy}"),
    )
}

fn communication_cost() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    write_toy_corpus(dir.path(), 5);
    let out = run_toy(dir.path(), "comm", |v| {
        v["evolution"]["n_syn"] = 2048.into();
        v["evolution"]["t_rounds"] = 1.into();
        v["evolution"]["k_lookahead"] = 1.into();
        v["expand"]["target_count"] = 0.into();
    });
    let log = fs::read_to_string(out.join(ROUNDS_FILE)).unwrap();
    let rounds: Vec<RoundRecord> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let ok = !rounds.is_empty()
        && rounds
            .iter()
            .all(|r| r.client_download_floats == 786_432 && r.client_upload_floats == 2048);
    (
        ok,
        format!(
            "{} round(s): download {} floats, upload {} floats",
            rounds.len(),
            rounds[0].client_download_floats,
            rounds[0].client_upload_floats
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("noiseless-oracle-equivalence", noiseless_oracle_equivalence),
        ("noise-law", noise_law),
        ("accountant-round-trip", accountant_round_trip),
        ("thresholding-and-sampling", thresholding_and_sampling),
        ("convergence", convergence_property),
        ("post-processing-invariance", post_processing_invariance),
        ("determinism", determinism),
        ("communication-cost", communication_cost),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let (ok, detail) =
            std::panic::catch_unwind(f).unwrap_or_else(|_| (false, "panicked".to_owned()));
        println!(
            "ACCEPTANCE {name}: {} ({detail})",
            if ok { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!ok);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
