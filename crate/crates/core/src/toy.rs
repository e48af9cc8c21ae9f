//! A small synthetic news corpus with a learnable congruence signal.
//!
//! Articles come from two topics with disjoint token vocabularies, and
//! each topic's tokens are further partitioned into a handful of
//! *subclass pools*. Every article draws its headline and all of its
//! body tokens from one pool, so a paragraph lifted from another
//! article almost surely uses a different pool. The companion embedding
//! writer makes pool membership linearly visible: all vectors of a
//! topic share a half-space (a constant offset), and each pool adds its
//! own ±1 sign pattern along a few fixed random directions — one binary
//! code dimension per bit of the pool index. Agreement between a
//! headline and a paragraph is then a conjunction of sign matches along
//! those directions, each as directly readable by an encoder as the
//! topic offset itself, so a recurrent encoder feeding an edge scorer
//! picks the rule up within a few gradient steps instead of memorizing
//! article identities. Magnitudes are kept small enough that the
//! encoders operate far from their saturated range. Together corpus and
//! embeddings form an end-to-end fixture on which the full pipeline
//! (ingest → swap-generate → train → evaluate) reaches high accuracy in
//! well under ten minutes on a laptop CPU.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::RawArticle;
use crate::error::{Error, Result};

/// Knobs for the generator; the defaults are what the bundled fixture and
/// the end-to-end tests use.
#[derive(Debug, Clone)]
pub struct ToyConfig {
    pub articles: usize,
    /// Body length range in sentences (inclusive).
    pub sentences_min: usize,
    pub sentences_max: usize,
    /// Sentence length range in tokens (inclusive).
    pub sentence_tokens_min: usize,
    pub sentence_tokens_max: usize,
    /// Headline length range in tokens (inclusive).
    pub headline_tokens_min: usize,
    pub headline_tokens_max: usize,
    /// Distinct tokens per topic.
    pub topic_vocab: usize,
    /// Disjoint token pools per topic; must divide `topic_vocab` and be a
    /// power of two (each bit of the pool index becomes one embedding
    /// code direction).
    pub subclasses_per_topic: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            articles: 600,
            sentences_min: 11,
            sentences_max: 13,
            sentence_tokens_min: 8,
            sentence_tokens_max: 8,
            headline_tokens_min: 8,
            headline_tokens_max: 8,
            topic_vocab: 200,
            subclasses_per_topic: 8,
            seed: 0,
        }
    }
}

const TOPICS: [&str; 2] = ["red", "blue"];

fn token_name(topic: &str, index: usize) -> String {
    format!("{topic}{index:03}")
}

/// All token names of both topics, topic-major then index order.
pub fn toy_token_names(config: &ToyConfig) -> Vec<String> {
    TOPICS
        .iter()
        .flat_map(|topic| (0..config.topic_vocab).map(move |i| token_name(topic, i)))
        .collect()
}

fn pool_size(config: &ToyConfig) -> usize {
    assert!(
        config.subclasses_per_topic.is_power_of_two()
            && config.topic_vocab.is_multiple_of(config.subclasses_per_topic),
        "subclasses must be a power of two dividing the topic vocabulary"
    );
    config.topic_vocab / config.subclasses_per_topic
}

/// Generate the corpus. Articles alternate topics and cycle through the
/// subclass pools, so both are exactly balanced; article `i` is drawn
/// from its own RNG stream, making every article a pure function of
/// `(seed, i)`.
pub fn toy_corpus(config: &ToyConfig) -> Vec<RawArticle> {
    let pool = pool_size(config);
    (0..config.articles)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let topic_idx = i % 2;
            let topic = TOPICS[topic_idx];
            let subclass = (i / 2) % config.subclasses_per_topic;
            let base = subclass * pool;

            let line = |rng: &mut ChaCha8Rng, len: usize| -> String {
                let words: Vec<String> = (0..len)
                    .map(|_| token_name(topic, base + rng.gen_range(0..pool)))
                    .collect();
                words.join(" ")
            };

            let headline_len =
                rng.gen_range(config.headline_tokens_min..=config.headline_tokens_max);
            let headline = line(&mut rng, headline_len);
            let n_sentences = rng.gen_range(config.sentences_min..=config.sentences_max);
            let sentences: Vec<String> = (0..n_sentences)
                .map(|_| {
                    let len = rng
                        .gen_range(config.sentence_tokens_min..=config.sentence_tokens_max);
                    line(&mut rng, len)
                })
                .collect();

            RawArticle {
                id: format!("toy-{i:04}"),
                headline,
                body: sentences.join("। ") + "।",
            }
        })
        .collect()
}

/// Write the corpus in the line-delimited JSON layout the ingest step reads.
pub fn write_toy_corpus(path: impl AsRef<Path>, articles: &[RawArticle]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for article in articles {
        let line = serde_json::to_string(article).expect("article serialize");
        writeln!(writer, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Stable 64-bit FNV-1a, so a token's vector never depends on file or
/// vocabulary order.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn gaussian_from_key(key: &str, seed: u64, std: f64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(key.as_bytes()));
    let gaussian = Normal::new(0.0, std).expect("valid normal");
    (0..dim).map(|_| gaussian.sample(&mut rng)).collect()
}

/// The toy vector for one token: a topic offset (+0.75 everywhere for
/// the first topic, −0.75 for the second), the token pool's sign code,
/// and a per-token Gaussian. Pool codes are Hadamard rows — pool `s`
/// contributes `(−1)^popcount(s & d)` along the fixed random direction
/// `d` for every nonzero `d` — so any two distinct pools disagree on
/// exactly half of all code directions. Tokens of one pool thus share a
/// linear signature that a single projection can read off, exactly like
/// the topic offset, and every pool pair is equally far apart.
pub fn toy_vector(config: &ToyConfig, token: &str, dim: usize) -> Vec<f64> {
    let (topic_idx, topic) = TOPICS
        .iter()
        .enumerate()
        .find(|(_, t)| token.starts_with(*t))
        .map(|(i, t)| (i, *t))
        .unwrap_or((1, TOPICS[1]));
    let offset = if topic_idx == 0 { 0.7 } else { -0.7 };
    let index: usize = token[topic.len()..].parse().unwrap_or(0);
    let subclass = index / pool_size(config);

    let mut vector = vec![offset; dim];
    // Walsh code over the subclass index: any two distinct subclasses disagree
    // on exactly half of the masks, so every wrong-subclass pairing is equally
    // far from the matched one regardless of which subclasses collide.
    for mask in 1..config.subclasses_per_topic {
        let sign = if (subclass & mask).count_ones() % 2 == 1 {
            1.0
        } else {
            -1.0
        };
        let direction = gaussian_from_key(&format!("code-{mask}"), config.seed, 1.0, dim);
        for (v, u) in vector.iter_mut().zip(&direction) {
            *v += sign * u;
        }
    }
    let noise = gaussian_from_key(token, config.seed, 0.25, dim);
    for (v, n) in vector.iter_mut().zip(&noise) {
        *v += n;
    }
    vector
}

/// Write a text embedding file (token then `dim` reals per line) covering
/// every token of both topic vocabularies.
pub fn write_toy_embeddings(
    path: impl AsRef<Path>,
    config: &ToyConfig,
    dim: usize,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for token in toy_token_names(config) {
        let values: Vec<String> = toy_vector(config, &token, dim)
            .into_iter()
            .map(|v| format!("{v:.6}"))
            .collect();
        writeln!(writer, "{token} {}", values.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
