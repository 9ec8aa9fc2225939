//! Federated differentially-private synthetic text generation.
//!
//! Clients vote privately for the synthetic candidates nearest their data,
//! an evolution loop steers the candidate population toward the private
//! distribution, and a post-processing step expands the released seed set
//! with a generator. A Rényi-DP accountant reports and calibrates the
//! `(epsilon, delta)` guarantee of the whole run.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod corpus;
pub mod dp_histogram;
pub mod embedder;
pub mod error;
pub mod evolution;
pub mod expand;
pub mod fidelity;
pub mod pipeline;
pub mod rng;
pub mod sidecar;
pub mod toy;
pub mod variation;

pub use accountant::{AccountantState, PrivacyReport};
pub use corpus::{ClientDataset, Federation, Sample};
pub use dp_histogram::{CandidateSet, NoiseParams, Stage, VoteHistogram};
pub use embedder::{Embedder, EmbeddingProviderConfig, EmbeddingVector};
pub use error::{Error, Result};
pub use evolution::{EvolutionConfig, EvolutionState, Providers, RoundRecord};
pub use expand::{ExpandConfig, Generator};
pub use fidelity::FidelityReport;
pub use pipeline::RunConfig;
pub use variation::{FillModel, VariationConfig, Variator};
