//! Text corpora and their federated partitioning.
//!
//! Corpus files are JSON Lines: one object per line with string keys `id`
//! and `text`. Unknown keys are ignored and blank lines are skipped.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One text record. `tokens` is the whitespace split of `text`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Self {
            id: id.into(),
            text,
            tokens,
        }
    }

    /// Builds a sample from tokens; the text is the tokens joined by single spaces.
    pub fn from_tokens(id: impl Into<String>, tokens: Vec<String>) -> Self {
        Self {
            id: id.into(),
            text: tokens.join(" "),
            tokens,
        }
    }

    pub fn with_id(&self, id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ..self.clone()
        }
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

#[derive(Serialize, Deserialize)]
struct Record<'a> {
    #[serde(borrow)]
    id: std::borrow::Cow<'a, str>,
    #[serde(borrow)]
    text: std::borrow::Cow<'a, str>,
}

/// Reads a JSONL corpus.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.id.is_empty() {
            return Err(Error::MalformedLine {
                line: i + 1,
                message: "empty id".into(),
            });
        }
        if !seen.insert(rec.id.to_string()) {
            return Err(Error::DuplicateId(rec.id.into_owned()));
        }
        out.push(Sample::new(rec.id.into_owned(), rec.text.into_owned()));
    }
    Ok(out)
}

/// Writes samples as JSONL with keys `id` and `text`.
pub fn write_jsonl(path: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let rec = Record {
            id: s.id.as_str().into(),
            text: s.text.as_str().into(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// The private data of one federated client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub samples: Vec<Sample>,
    /// Maximum number of samples that count toward votes.
    pub cap: usize,
}

impl ClientDataset {
    /// The samples that enter the vote: at most `cap` of them.
    pub fn voting_samples(&self) -> &[Sample] {
        &self.samples[..self.samples.len().min(self.cap)]
    }
}

#[derive(Debug, Clone)]
pub struct Federation {
    pub train_clients: Vec<ClientDataset>,
    pub eval_samples: Vec<Sample>,
}

impl Federation {
    /// Assembles a federation, checking that client ids are `0..N` and that
    /// no sample id appears on both the train and eval side.
    pub fn new(train_clients: Vec<ClientDataset>, eval_samples: Vec<Sample>) -> Result<Self> {
        for (i, c) in train_clients.iter().enumerate() {
            if c.client_id != i {
                return Err(Error::InvalidConfig(format!(
                    "client ids must be 0..N without gaps; position {i} holds client {}",
                    c.client_id
                )));
            }
        }
        let train_ids: HashSet<&str> = train_clients
            .iter()
            .flat_map(|c| c.samples.iter().map(|s| s.id.as_str()))
            .collect();
        if let Some(s) = eval_samples
            .iter()
            .find(|s| train_ids.contains(s.id.as_str()))
        {
            return Err(Error::InvalidConfig(format!(
                "sample {:?} appears in both train and eval sets",
                s.id
            )));
        }
        Ok(Self {
            train_clients,
            eval_samples,
        })
    }
}

/// Splits `samples` into `n_clients` clients of exactly `per_client` samples
/// using a seeded uniform permutation.
pub fn partition_uniform(
    samples: &[Sample],
    n_clients: usize,
    per_client: usize,
    seed: u64,
) -> Result<Vec<ClientDataset>> {
    let required = n_clients
        .checked_mul(per_client)
        .ok_or_else(|| Error::InvalidConfig("n_clients * per_client overflows".into()))?;
    if samples.len() < required {
        return Err(Error::InsufficientSamples {
            required,
            available: samples.len(),
        });
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng::stream(seed, "partition", &[]));
    Ok(order[..required]
        .chunks(per_client.max(1))
        .take(n_clients)
        .enumerate()
        .map(|(client_id, idx)| ClientDataset {
            client_id,
            samples: idx.iter().map(|&i| samples[i].clone()).collect(),
            cap: per_client.max(1),
        })
        .collect())
}

/// Keeps a seeded uniform subset of at most `cap` samples, preserving order.
pub fn clip_client(client: &ClientDataset, cap: usize, seed: u64) -> ClientDataset {
    let cap = cap.max(1);
    let samples = if client.samples.len() > cap {
        let mut keep = index::sample(
            &mut rng::stream(seed, "clip", &[client.client_id as u64]),
            client.samples.len(),
            cap,
        )
        .into_vec();
        keep.sort_unstable();
        keep.into_iter()
            .map(|i| client.samples[i].clone())
            .collect()
    } else {
        client.samples.clone()
    };
    ClientDataset {
        client_id: client.client_id,
        samples,
        cap,
    }
}
