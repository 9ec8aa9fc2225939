//! Seed-set expansion with few-shot prompts.
//!
//! Every output slot picks three distinct seeds, renders them into the
//! prompt template and asks a generator to continue after the fourth
//! sample header. The continuation is cut at the fifth sample header.
//! Expansion only reads the released seed union, so it costs no privacy.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::rng;
use crate::sidecar::{self, SidecarClient};

/// The prompt template, with `{sample_1}`..`{sample_3}` placeholders.
pub const PROMPT_TEMPLATE: &str = include_str!("../assets/expand_prompt.txt");

/// Header that terminates a generated sample.
pub const STOP_HEADER: &str = "Original Text Sample 5";

const PLACEHOLDERS: [&str; 3] = ["{sample_1}", "{sample_2}", "{sample_3}"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Markov,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpandConfig {
    /// Number of samples to produce; 0 disables expansion.
    pub target_count: usize,
    pub generator: GeneratorKind,
    pub remote_url: Option<String>,
    pub max_new_tokens: usize,
    pub seed: u64,
    /// Attempts per output slot before giving up.
    pub max_retries: usize,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        Self {
            target_count: 2000,
            generator: GeneratorKind::Markov,
            remote_url: None,
            max_new_tokens: 64,
            seed: 0,
            max_retries: 10,
        }
    }
}

impl ExpandConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(Error::InvalidConfig("max_new_tokens must be >= 1".into()));
        }
        if self.max_retries == 0 {
            return Err(Error::InvalidConfig("max_retries must be >= 1".into()));
        }
        if self.generator == GeneratorKind::Remote
            && sidecar::resolve_url(self.remote_url.as_deref()).is_none()
        {
            return Err(Error::InvalidConfig(
                "remote generator needs remote_url".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandPrompt {
    pub seeds: [Sample; 3],
    pub rendered: String,
}

/// Renders the template in one pass, so seed text that happens to contain
/// a placeholder is copied verbatim.
pub fn build_prompt(seeds: &[Sample]) -> Result<ExpandPrompt> {
    let seeds: [Sample; 3] = seeds.to_vec().try_into().map_err(|v: Vec<Sample>| {
        Error::InvalidConfig(format!("a prompt needs exactly 3 seeds, got {}", v.len()))
    })?;
    let mut rendered = String::with_capacity(PROMPT_TEMPLATE.len() + 256);
    let mut rest = PROMPT_TEMPLATE;
    for (ph, seed) in PLACEHOLDERS.iter().zip(&seeds) {
        let at = rest.find(ph).expect("template has every placeholder");
        rendered.push_str(&rest[..at]);
        rendered.push_str(&seed.text);
        rest = &rest[at + ph.len()..];
    }
    rendered.push_str(rest);
    Ok(ExpandPrompt { seeds, rendered })
}

/// Text before the fifth sample header, trimmed; `None` when nothing is left.
pub fn parse_generation(raw: &str) -> Option<String> {
    let body = raw.find(STOP_HEADER).map_or(raw, |at| &raw[..at]);
    let body = body.trim();
    (!body.is_empty()).then(|| body.to_owned())
}

/// Bigram random walk over the three seed texts. Starts at a uniformly
/// chosen seed token and stops at `max_new_tokens` or at a token with no
/// successor.
pub fn markov_generate(seeds: &[Sample], max_new_tokens: usize, seed: u64) -> Option<String> {
    let mut transitions: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut all: Vec<&str> = Vec::new();
    for s in seeds {
        all.extend(s.tokens.iter().map(String::as_str));
        for w in s.tokens.windows(2) {
            transitions.entry(&w[0]).or_default().push(&w[1]);
        }
    }
    if all.is_empty() || max_new_tokens == 0 {
        return None;
    }
    let mut r = rng::stream(seed, "markov", &[]);
    let mut cur = all[r.gen_range(0..all.len())];
    let mut out = vec![cur];
    while out.len() < max_new_tokens {
        match transitions.get(cur) {
            Some(next) => {
                cur = next[r.gen_range(0..next.len())];
                out.push(cur);
            }
            None => break,
        }
    }
    Some(out.join(" "))
}

#[derive(Debug, Clone)]
pub enum Generator {
    Markov,
    Remote(SidecarClient),
}

impl Generator {
    pub fn new(cfg: &ExpandConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.generator {
            GeneratorKind::Markov => Generator::Markov,
            GeneratorKind::Remote => Generator::Remote(SidecarClient::new(
                sidecar::resolve_url(cfg.remote_url.as_deref()).expect("validated"),
            )),
        })
    }

    /// Raw continuation of `prompt`, or `None` when nothing was produced.
    pub fn generate(
        &self,
        prompt: &ExpandPrompt,
        max_new_tokens: usize,
        seed: u64,
    ) -> Result<Option<String>> {
        match self {
            Generator::Markov => Ok(markov_generate(&prompt.seeds, max_new_tokens, seed)),
            Generator::Remote(client) => client
                .expand(&prompt.rendered, max_new_tokens, seed)
                .map(Some),
        }
    }
}

fn fill_slot(
    seeds: &[Sample],
    cfg: &ExpandConfig,
    generator: &Generator,
    slot: usize,
) -> Result<Sample> {
    for attempt in 0..cfg.max_retries {
        let mut r = rng::stream(cfg.seed, "expand", &[slot as u64, attempt as u64]);
        let picked: Vec<Sample> = index::sample(&mut r, seeds.len(), 3)
            .into_iter()
            .map(|i| seeds[i].clone())
            .collect();
        let prompt = build_prompt(&picked)?;
        let gen_seed = r.gen::<u64>();
        if let Some(text) = generator
            .generate(&prompt, cfg.max_new_tokens, gen_seed)?
            .as_deref()
            .and_then(parse_generation)
        {
            return Ok(Sample::new(format!("exp-{slot}"), text));
        }
    }
    Err(Error::RetryExhausted {
        slot,
        retries: cfg.max_retries,
    })
}

/// Grows `seeds` into exactly `cfg.target_count` generated samples.
pub fn expand_seed_set(
    seeds: &[Sample],
    cfg: &ExpandConfig,
    generator: &Generator,
) -> Result<Vec<Sample>> {
    if cfg.target_count == 0 {
        return Ok(seeds.to_vec());
    }
    cfg.validate()?;
    if seeds.len() < 3 {
        return Err(Error::InsufficientSamples {
            required: 3,
            available: seeds.len(),
        });
    }
    (0..cfg.target_count)
        .into_par_iter()
        .map(|slot| fill_slot(seeds, cfg, generator, slot))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}
