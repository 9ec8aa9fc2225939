use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pretext::accountant;
use pretext::corpus;
use pretext::embedder::{EmbeddingKind, EmbeddingProviderConfig, DEFAULT_DIM};
use pretext::fidelity;
use pretext::pipeline::{self, RunConfig};
use pretext::toy;
use pretext::{Embedder, Error};

#[derive(Parser)]
#[command(
    name = "pretext",
    version,
    about = "Federated DP synthetic text generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides master_seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Caps worker threads.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Find the aggregate noise sigma that reaches a target epsilon.
    Calibrate {
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 3e-6)]
        delta: f64,
        #[arg(long, default_value_t = 11)]
        steps: usize,
        #[arg(long, default_value_t = 8)]
        cap: usize,
    },
    /// Report epsilon for a given aggregate noise sigma.
    Account {
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 8)]
        cap: usize,
        #[arg(long, default_value_t = 11)]
        steps: usize,
        #[arg(long, default_value_t = 3e-6)]
        delta: f64,
    },
    /// Fidelity of an existing synthetic set against an eval set.
    Evaluate {
        #[arg(long)]
        synthetic: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        /// Baseline pool, typically the initial population or public data.
        #[arg(long)]
        init: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        ngram_min: usize,
        #[arg(long, default_value_t = 5)]
        ngram_max: usize,
        /// Use the sidecar's /embed instead of hashed n-grams.
        #[arg(long)]
        remote_url: Option<String>,
    },
    /// Write a clustered toy corpus (train/eval/public JSONL).
    GenToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Failure::Config(e),
            e => Failure::Runtime(e),
        }
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Failure> {
    println!(
        "{}",
        serde_json::to_string_pretty(v).map_err(|e| Failure::Runtime(e.into()))?
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            seed,
            threads,
        } => {
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build_global()
                    .map_err(|e| Failure::Config(Error::InvalidConfig(e.to_string())))?;
            }
            let mut cfg = RunConfig::load(&config).map_err(|e| match e {
                Error::Io { .. } => Failure::Runtime(e),
                e => Failure::Config(e),
            })?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let out = pipeline::run_pipeline(&cfg).map_err(Failure::Runtime)?;
            eprintln!(
                "wrote {} synthetic samples ({} seeds) to {}; epsilon = {}",
                out.synthetic.len(),
                out.seeds.len(),
                cfg.output_dir.display(),
                out.privacy.epsilon
            );
            Ok(())
        }
        Command::Calibrate {
            epsilon,
            delta,
            steps,
            cap,
        } => print_json(
            &accountant::calibrate_sigma(epsilon, delta, steps, cap).map_err(Failure::Config)?,
        ),
        Command::Account {
            sigma,
            cap,
            steps,
            delta,
        } => print_json(&accountant::account(sigma, cap, steps, delta).map_err(Failure::Config)?),
        Command::Evaluate {
            synthetic,
            eval,
            init,
            dim,
            ngram_min,
            ngram_max,
            remote_url,
        } => {
            let cfg = EmbeddingProviderConfig {
                kind: if remote_url.is_some() {
                    EmbeddingKind::Remote
                } else {
                    EmbeddingKind::HashedNgram
                },
                dim,
                ngram_min,
                ngram_max,
                remote_url,
            };
            let embedder = Embedder::new(&cfg)?;
            let report = fidelity::evaluate_fidelity(
                &corpus::load_jsonl(synthetic).map_err(Failure::Runtime)?,
                &corpus::load_jsonl(eval).map_err(Failure::Runtime)?,
                &corpus::load_jsonl(init).map_err(Failure::Runtime)?,
                &embedder,
            )
            .map_err(Failure::Runtime)?;
            print_json(&report)
        }
        Command::GenToy { out, seed } => {
            let c = toy::clustered_corpus(&toy::ToyParams::default(), seed);
            std::fs::create_dir_all(&out).map_err(|e| {
                Failure::Runtime(Error::Io {
                    path: out.display().to_string(),
                    source: e,
                })
            })?;
            corpus::write_jsonl(out.join("train.jsonl"), &c.train).map_err(Failure::Runtime)?;
            corpus::write_jsonl(out.join("eval.jsonl"), &c.eval).map_err(Failure::Runtime)?;
            corpus::write_jsonl(out.join("public.jsonl"), &c.public).map_err(Failure::Runtime)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("pretext: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("pretext: {e}");
            ExitCode::from(1)
        }
    }
}
