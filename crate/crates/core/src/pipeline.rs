//! End-to-end driver: partition, evolve, expand, evaluate, write outputs.
//!
//! Output directory layout:
//!
//! | file                   | content                                   |
//! |------------------------|-------------------------------------------|
//! | `synthetic.jsonl`      | expanded synthetic samples (`id`, `text`) |
//! | `seeds.jsonl`          | deduplicated seed union                   |
//! | `privacy_report.json`  | [`PrivacyReport`]                         |
//! | `fidelity_report.json` | [`FidelityReport`]                        |
//! | `rounds.log.jsonl`     | one [`RoundRecord`] per round             |

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accountant::{self, PrivacyReport};
use crate::corpus::{self, ClientDataset, Sample};
use crate::dp_histogram::NoiseParams;
use crate::embedder::EmbeddingProviderConfig;
use crate::error::{Error, Result};
use crate::evolution::{self, EvolutionConfig, Providers, RoundRecord, DEFAULT_DELTA};
use crate::expand::{self, ExpandConfig, Generator};
use crate::fidelity::{self, FidelityReport};
use crate::rng;
use crate::variation::VariationConfig;

pub const SYNTHETIC_FILE: &str = "synthetic.jsonl";
pub const SEEDS_FILE: &str = "seeds.jsonl";
pub const PRIVACY_FILE: &str = "privacy_report.json";
pub const FIDELITY_FILE: &str = "fidelity_report.json";
pub const ROUNDS_FILE: &str = "rounds.log.jsonl";

pub const OUTPUT_FILES: [&str; 5] = [
    SYNTHETIC_FILE,
    SEEDS_FILE,
    PRIVACY_FILE,
    FIDELITY_FILE,
    ROUNDS_FILE,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub private_train: PathBuf,
    pub private_eval: PathBuf,
    pub public_pool: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub n_clients: usize,
    pub per_client: usize,
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub t_rounds: usize,
    pub n_syn: usize,
    pub k_lookahead: usize,
    pub embed: EmbeddingProviderConfig,
    pub variation: VariationConfig,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        Self {
            t_rounds: 11,
            n_syn: 1024,
            k_lookahead: 4,
            embed: EmbeddingProviderConfig::default(),
            variation: VariationConfig::default(),
        }
    }
}

/// A threshold given as a number or as a product expression such as
/// `"8.0 × 1.541 × sqrt(2)"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Value(f64),
    Expr(String),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Value(0.0)
    }
}

impl Threshold {
    pub fn value(&self) -> Result<f64> {
        match self {
            Threshold::Value(v) => Ok(*v),
            Threshold::Expr(e) => eval_product(e),
        }
    }
}

/// Evaluates a product of factors. A factor is a number, `sqrt(x)` or `√x`;
/// factors are separated by `×` or `*`.
pub fn eval_product(expr: &str) -> Result<f64> {
    let bad = |why: &str| Error::InvalidConfig(format!("threshold expression {expr:?}: {why}"));
    let mut product = 1.0;
    for factor in expr.split(['×', '*']) {
        let f = factor.trim();
        if f.is_empty() {
            return Err(bad("empty factor"));
        }
        let (inner, root) = if let Some(rest) = f.strip_prefix('√') {
            (rest.trim(), true)
        } else if let Some(rest) = f.strip_prefix("sqrt") {
            let rest = rest.trim();
            let inner = rest
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| bad("sqrt needs parentheses"))?;
            (inner.trim(), true)
        } else {
            (f, false)
        };
        let inner = inner
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .unwrap_or(inner)
            .trim();
        let v: f64 = inner
            .parse()
            .map_err(|_| bad(&format!("not a number: {inner:?}")))?;
        product *= if root { v.sqrt() } else { v };
    }
    if !product.is_finite() {
        return Err(bad("not finite"));
    }
    Ok(product)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    #[serde(default)]
    pub target_epsilon: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub threshold_h: Threshold,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusPaths,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub evolution: EvolutionSection,
    pub privacy: PrivacyConfig,
    #[serde(default)]
    pub expand: ExpandConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub master_seed: u64,
}

impl RunConfig {
    /// Parses and validates a config file. Relative paths are resolved
    /// against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.corpus.private_train,
            &mut cfg.corpus.private_eval,
            &mut cfg.corpus.public_pool,
            &mut cfg.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.privacy.target_epsilon, self.privacy.sigma) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "set exactly one of privacy.target_epsilon and privacy.sigma, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "set one of privacy.target_epsilon or privacy.sigma".into(),
                ))
            }
            (Some(e), None) if !(e > 0.0) => {
                return Err(Error::InvalidConfig(format!(
                    "target_epsilon must be > 0, got {e}"
                )))
            }
            _ => {}
        }
        let p = &self.partition;
        if p.n_clients == 0 || p.per_client == 0 || p.cap == 0 {
            return Err(Error::InvalidConfig(
                "partition sizes and cap must all be >= 1".into(),
            ));
        }
        self.privacy.threshold_h.value()?;
        self.expand.validate()?;
        self.evolution_config(self.privacy.sigma.unwrap_or(0.0), 0.0)?
            .validate()
    }

    fn evolution_config(&self, sigma: f64, threshold_h: f64) -> Result<EvolutionConfig> {
        let ev = &self.evolution;
        Ok(EvolutionConfig {
            t_rounds: ev.t_rounds,
            n_syn: ev.n_syn,
            k_lookahead: ev.k_lookahead,
            noise: NoiseParams {
                sigma,
                n_train_clients: self.partition.n_clients,
                threshold_h,
                cap: self.partition.cap,
            },
            variation: ev.variation.clone(),
            embed: ev.embed.clone(),
            delta: self.privacy.delta,
            master_seed: self.master_seed,
        })
    }

    /// Aggregate noise: given directly, or calibrated to the target epsilon
    /// over `t_rounds` releases.
    pub fn resolve_sigma(&self) -> Result<f64> {
        match (self.privacy.sigma, self.privacy.target_epsilon) {
            (Some(s), _) => Ok(s),
            (None, Some(eps)) => Ok(accountant::calibrate_sigma(
                eps,
                self.privacy.delta,
                self.evolution.t_rounds,
                self.partition.cap,
            )?
            .sigma),
            (None, None) => Err(Error::InvalidConfig("no privacy level set".into())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub synthetic: Vec<Sample>,
    pub seeds: Vec<Sample>,
    pub privacy: PrivacyReport,
    pub fidelity: FidelityReport,
    pub rounds: Vec<RoundRecord>,
}

/// Partitions the private train corpus and clips every client to `cap`.
pub fn build_clients(train: &[Sample], cfg: &RunConfig) -> Result<Vec<ClientDataset>> {
    let p = &cfg.partition;
    let clients = corpus::partition_uniform(
        train,
        p.n_clients,
        p.per_client,
        rng::derive_seed(cfg.master_seed, "partition", &[]),
    )?;
    let clip_seed = rng::derive_seed(cfg.master_seed, "clip", &[]);
    Ok(clients
        .iter()
        .map(|c| corpus::clip_client(c, p.cap, clip_seed))
        .collect())
}

/// Runs the pipeline in memory.
pub fn execute(cfg: &RunConfig) -> Result<PipelineOutput> {
    let train = corpus::load_jsonl(&cfg.corpus.private_train)?;
    let eval = corpus::load_jsonl(&cfg.corpus.private_eval)?;
    let public = corpus::load_jsonl(&cfg.corpus.public_pool)?;
    let clients = build_clients(&train, cfg)?;
    corpus::Federation::new(clients.clone(), eval.clone())?;

    let sigma = cfg.resolve_sigma()?;
    let ev_cfg = cfg.evolution_config(sigma, cfg.privacy.threshold_h.value()?)?;
    let providers = Providers::new(&ev_cfg, &public)?;
    let evo = evolution::run(&clients, &public, &ev_cfg, &providers)?;

    let expand_cfg = ExpandConfig {
        seed: rng::derive_seed(cfg.master_seed, "expand", &[cfg.expand.seed]),
        ..cfg.expand.clone()
    };
    let generator = Generator::new(&expand_cfg)?;
    let synthetic = expand::expand_seed_set(&evo.seed_union, &expand_cfg, &generator)?;

    let fidelity = fidelity::evaluate_fidelity(
        &synthetic,
        &eval,
        &evo.initial_population,
        &providers.embedder,
    )?;
    Ok(PipelineOutput {
        synthetic,
        seeds: evo.seed_union,
        privacy: evo.report,
        fidelity,
        rounds: evo.rounds,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_outputs(dir: &Path, out: &PipelineOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    corpus::write_jsonl(dir.join(SYNTHETIC_FILE), &out.synthetic)?;
    corpus::write_jsonl(dir.join(SEEDS_FILE), &out.seeds)?;
    write_json(&dir.join(PRIVACY_FILE), &out.privacy)?;
    write_json(&dir.join(FIDELITY_FILE), &out.fidelity)?;
    let mut rounds = String::new();
    for r in &out.rounds {
        rounds.push_str(&serde_json::to_string(r)?);
        rounds.push('\n');
    }
    let path = dir.join(ROUNDS_FILE);
    fs::write(&path, rounds).map_err(|e| Error::io(&path, e))
}

fn remove_outputs(dir: &Path) {
    for f in OUTPUT_FILES {
        let _ = fs::remove_file(dir.join(f));
    }
}

/// Runs the pipeline and writes every output file; on failure none of the
/// output files are left behind.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    let result = execute(cfg).and_then(|out| {
        for r in &out.rounds {
            log::info!("{}", serde_json::to_string(r)?);
        }
        write_outputs(&cfg.output_dir, &out)?;
        Ok(out)
    });
    if result.is_err() {
        remove_outputs(&cfg.output_dir);
    }
    result
}
