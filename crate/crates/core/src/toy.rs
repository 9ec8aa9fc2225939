//! Clustered synthetic corpora for smoke runs and convergence checks.
//!
//! Words belong to topics. Private samples are pure draws from a couple of
//! "private" topics; public samples mix one topic (any topic) with shared
//! filler words at a random purity. Evolution should move the population
//! from mixed public text toward the pure private topics.

use rand::Rng;

use crate::corpus::Sample;
use crate::rng;

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "to", "vi", "xe", "zu", "bar", "dil", "fon", "gup", "hes",
    "jor", "kel", "mur", "pim", "qua",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyParams {
    pub n_topics: usize,
    pub n_private_topics: usize,
    pub words_per_topic: usize,
    pub filler_words: usize,
    pub tokens_per_sample: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub n_public: usize,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            n_topics: 6,
            n_private_topics: 2,
            words_per_topic: 12,
            filler_words: 30,
            tokens_per_sample: 10,
            n_train: 160,
            n_eval: 40,
            n_public: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub train: Vec<Sample>,
    pub eval: Vec<Sample>,
    pub public: Vec<Sample>,
}

fn make_word<R: Rng>(r: &mut R, prefix: &str) -> String {
    let n = r.gen_range(2..=3);
    let mut w = prefix.to_owned();
    for _ in 0..n {
        w.push_str(SYLLABLES[r.gen_range(0..SYLLABLES.len())]);
    }
    w
}

pub fn clustered_corpus(params: &ToyParams, seed: u64) -> ToyCorpus {
    let mut r = rng::stream(seed, "toy-vocab", &[]);
    let topics: Vec<Vec<String>> = (0..params.n_topics)
        .map(|t| {
            (0..params.words_per_topic)
                .map(|_| make_word(&mut r, &format!("{}", (b'a' + t as u8) as char)))
                .collect()
        })
        .collect();
    let filler: Vec<String> = (0..params.filler_words)
        .map(|_| make_word(&mut r, "w"))
        .collect();

    let mut r = rng::stream(seed, "toy-text", &[]);
    let private = |r: &mut rand_chacha::ChaCha20Rng, id: String| {
        let topic = &topics[r.gen_range(0..params.n_private_topics)];
        let tokens = (0..params.tokens_per_sample)
            .map(|_| topic[r.gen_range(0..topic.len())].clone())
            .collect();
        Sample::from_tokens(id, tokens)
    };
    let train = (0..params.n_train)
        .map(|i| private(&mut r, format!("priv-{i}")))
        .collect();
    let eval = (0..params.n_eval)
        .map(|i| private(&mut r, format!("eval-{i}")))
        .collect();
    let public = (0..params.n_public)
        .map(|i| {
            let topic = &topics[r.gen_range(0..params.n_topics)];
            let purity: f64 = r.gen_range(0.1..0.6);
            let tokens = (0..params.tokens_per_sample)
                .map(|_| {
                    if r.gen_bool(purity) {
                        topic[r.gen_range(0..topic.len())].clone()
                    } else {
                        filler[r.gen_range(0..filler.len())].clone()
                    }
                })
                .collect();
            Sample::from_tokens(format!("pub-{i}"), tokens)
        })
        .collect();
    ToyCorpus {
        train,
        eval,
        public,
    }
}
