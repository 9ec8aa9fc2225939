//! Embedding-space fidelity proxy for a synthetic set.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::embedder::{Embedder, EmbeddingVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub mean_nn_distance_eval_to_syn: f64,
    pub mean_nn_distance_eval_to_init: f64,
    pub distinct_fraction_of_syn: f64,
}

/// Mean over `from` of the distance to the nearest member of `to`.
pub fn mean_nn_distance(from: &[EmbeddingVector], to: &[EmbeddingVector]) -> f64 {
    let total: f64 = from
        .par_iter()
        .map(|x| {
            to.iter()
                .map(|y| x.sq_dist_unchecked(y))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / from.len() as f64
}

pub fn evaluate_fidelity(
    syn: &[Sample],
    eval_set: &[Sample],
    init_pool: &[Sample],
    embedder: &Embedder,
) -> Result<FidelityReport> {
    for (name, set) in [
        ("synthetic", syn),
        ("eval", eval_set),
        ("initial", init_pool),
    ] {
        if set.is_empty() {
            return Err(Error::EmptyCorpus(format!("{name} set is empty")));
        }
    }
    let syn_e = embedder.embed_samples(syn)?;
    let eval_e = embedder.embed_samples(eval_set)?;
    let init_e = embedder.embed_samples(init_pool)?;
    let distinct: HashSet<&str> = syn.iter().map(|s| s.text.as_str()).collect();
    Ok(FidelityReport {
        mean_nn_distance_eval_to_syn: mean_nn_distance(&eval_e, &syn_e),
        mean_nn_distance_eval_to_init: mean_nn_distance(&eval_e, &init_e),
        distinct_fraction_of_syn: distinct.len() as f64 / syn.len() as f64,
    })
}
