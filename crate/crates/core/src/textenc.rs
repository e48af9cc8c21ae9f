//! Tokenization, vocabulary construction and pre-trained embedding loading.
//!
//! The vocabulary reserves index 0 for padding and index 1 for
//! out-of-vocabulary tokens; everything else is admitted only when it occurs
//! at least `min_count` times in the training split. Embedding rows are
//! frozen: they are looked up during encoding but never updated by training.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::SENTENCE_TERMINATORS;
use crate::error::{Error, Result};
use crate::synthgen::LabeledSample;

pub const PAD_INDEX: usize = 0;
pub const OOV_INDEX: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";

/// Default minimum corpus frequency for a token to enter the vocabulary.
pub const DEFAULT_MIN_COUNT: usize = 8;

/// Default embedding dimensionality.
pub const DEFAULT_EMBED_DIM: usize = 300;

/// Whitespace tokenizer over cleaned text. Sentence terminators are dropped
/// and canonical composition is applied, so the output is stable whether or
/// not the input still carries terminators.
pub fn tokenize(text: &str) -> Vec<String> {
    text.nfc()
        .collect::<String>()
        .split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| !SENTENCE_TERMINATORS.contains(c))
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Dense token index space with reserved PAD (0) and OOV (1) entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    pub min_count: usize,
}

impl Vocabulary {
    /// Assemble a vocabulary from an explicit token list whose first two
    /// entries must be the PAD and OOV sentinels.
    pub fn from_tokens(tokens: Vec<String>, min_count: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            index,
            min_count,
        }
    }

    /// Rebuild the lookup map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    /// Index of a token, or the OOV index when absent.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV_INDEX)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    /// All tokens in index order, including the two reserved entries.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn map_tokens(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t)).collect()
    }
}

/// Count token frequencies over headlines and paragraphs and admit tokens
/// occurring at least `min_count` times. Index order is descending count
/// with lexicographic tie-breaking, so the same corpus always yields the
/// same assignment.
pub fn build_vocab(samples: &[LabeledSample], min_count: usize) -> Vocabulary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for sample in samples {
        for token in sample
            .headline_tokens
            .iter()
            .chain(sample.paragraphs.iter().flatten())
        {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
    }
    let mut admitted: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    admitted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens = Vec::with_capacity(admitted.len() + 2);
    tokens.push(PAD_TOKEN.to_string());
    tokens.push(OOV_TOKEN.to_string());
    tokens.extend(admitted.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens, min_count)
}

/// Frozen `|V| x d` embedding matrix plus the fraction of vocabulary tokens
/// that were found in the pre-trained file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub matrix: Array2<f64>,
    pub coverage_rate: f64,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Coverage as a percentage string with two decimals, e.g. "43.34%".
    pub fn coverage_percent(&self) -> String {
        format!("{:.2}%", self.coverage_rate * 100.0)
    }
}

/// Load pre-trained vectors for the vocabulary from a text embedding file
/// (token followed by `dim` reals per line). Tokens missing from the file,
/// and the OOV row, are drawn from a zero-mean Gaussian with scale 0.1 under
/// the seed; the PAD row stays exactly zero. The first occurrence of a token
/// wins when the file repeats it.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut file_vectors: HashMap<String, Vec<f64>> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line has a first field");
        let values: Vec<f64> = parts
            .map(|v| {
                v.parse::<f64>().map_err(|e| Error::EmbeddingParse {
                    line: line_no,
                    msg: format!("bad value `{v}`: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::EmbeddingDimMismatch {
                line: line_no,
                expected: dim,
                got: values.len(),
            });
        }
        if vocab.contains(token) {
            file_vectors.entry(token.to_string()).or_insert(values);
        }
    }

    build_table(vocab, dim, seed, &file_vectors)
}

/// Build an embedding table without a pre-trained file: every non-PAD row is
/// Gaussian-initialized and the coverage rate is 0.
pub fn random_embeddings(vocab: &Vocabulary, dim: usize, seed: u64) -> EmbeddingTable {
    build_table(vocab, dim, seed, &HashMap::new()).expect("random init cannot fail")
}

fn build_table(
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
    file_vectors: &HashMap<String, Vec<f64>>,
) -> Result<EmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = Normal::new(0.0, 0.1).expect("valid normal");
    let mut matrix = Array2::<f64>::zeros((vocab.len(), dim));
    let mut found = 0usize;
    for i in 1..vocab.len() {
        let token = vocab.token(i).expect("index within vocabulary");
        match (i != OOV_INDEX).then(|| file_vectors.get(token)).flatten() {
            Some(values) => {
                found += 1;
                for (j, v) in values.iter().enumerate() {
                    matrix[[i, j]] = *v;
                }
            }
            None => {
                for j in 0..dim {
                    matrix[[i, j]] = gaussian.sample(&mut rng);
                }
            }
        }
    }
    let real_tokens = vocab.len().saturating_sub(2);
    let coverage_rate = if real_tokens == 0 {
        0.0
    } else {
        found as f64 / real_tokens as f64
    };
    Ok(EmbeddingTable {
        matrix,
        coverage_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::GenType;
    use std::io::Write as _;

    fn sample_from(tokens: &[&str]) -> LabeledSample {
        let half = tokens.len() / 2;
        LabeledSample {
            id: "s".into(),
            headline_tokens: tokens[..half].iter().map(|t| t.to_string()).collect(),
            paragraphs: vec![tokens[half..].iter().map(|t| t.to_string()).collect()],
            para_labels: vec![0],
            doc_label: 0,
            gen_type: GenType::None,
            provenance: Vec::new(),
        }
    }

    #[test]
    fn tokenize_empty_is_empty() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn tokenize_drops_trailing_danda() {
        let tokens = tokenize("আজ আকাশ ভারী মেঘে ঢাকা।");
        assert_eq!(tokens.len(), 5);
        assert_eq!(tokens[4], "ঢাকা");
    }

    #[test]
    fn tokenize_is_stable() {
        let text = "এক দুই তিন?";
        assert_eq!(tokenize(text), tokenize(text));
    }

    #[test]
    fn min_count_boundary() {
        // "x" appears 8 times, "y" 7 times.
        let mut tokens = vec!["x"; 8];
        tokens.extend(vec!["y"; 7]);
        let vocab = build_vocab(&[sample_from(&tokens)], 8);
        assert!(vocab.contains("x"));
        assert!(!vocab.contains("y"));
        assert_eq!(vocab.lookup("y"), OOV_INDEX);
    }

    #[test]
    fn empty_corpus_gives_reserved_only() {
        let vocab = build_vocab(&[], 8);
        assert_eq!(vocab.len(), 2);
        assert!(vocab.is_empty());
    }

    #[test]
    fn vocab_assignment_is_deterministic() {
        let samples = vec![
            sample_from(&["b", "b", "a", "a", "c", "c", "c", "a", "b", "a", "b"]),
            sample_from(&["a", "b", "c", "c", "a", "b", "a", "b", "c", "c"]),
        ];
        let v1 = build_vocab(&samples, 2);
        let v2 = build_vocab(&samples, 2);
        assert_eq!(v1.tokens(), v2.tokens());
    }

    #[test]
    fn vocab_ties_break_lexicographically() {
        let vocab = build_vocab(&[sample_from(&["b", "a", "b", "a"])], 2);
        // Equal counts: "a" before "b".
        assert_eq!(vocab.lookup("a"), 2);
        assert_eq!(vocab.lookup("b"), 3);
    }

    fn vocab_of(words: &[&str]) -> Vocabulary {
        let repeated: Vec<&str> = words.iter().flat_map(|w| std::iter::repeat_n(*w, 3)).collect();
        build_vocab(&[sample_from(&repeated)], 3)
    }

    #[test]
    fn coverage_is_found_over_real_tokens() {
        let vocab = vocab_of(&["aa", "bb", "cc", "dd"]);
        assert_eq!(vocab.len(), 6);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "aa 1.0 2.0 3.0").unwrap();
        writeln!(f, "cc -1.0 0.5 0.25").unwrap();
        writeln!(f, "zz 9.0 9.0 9.0").unwrap();
        f.flush().unwrap();
        let table = load_embeddings(f.path(), &vocab, 3, 1).unwrap();
        assert_eq!(table.coverage_rate, 0.5);
        assert_eq!(table.coverage_percent(), "50.00%");
        let aa = vocab.lookup("aa");
        assert_eq!(table.matrix[[aa, 0]], 1.0);
        assert_eq!(table.matrix[[aa, 2]], 3.0);
    }

    #[test]
    fn coverage_of_empty_vocab_is_zero() {
        let vocab = build_vocab(&[], 8);
        let f = tempfile::NamedTempFile::new().unwrap();
        let table = load_embeddings(f.path(), &vocab, 3, 1).unwrap();
        assert_eq!(table.coverage_rate, 0.0);
    }

    #[test]
    fn dimension_mismatch_names_line() {
        let vocab = vocab_of(&["aa"]);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "aa 1.0 2.0 3.0").unwrap();
        writeln!(f, "bb 1.0 2.0").unwrap();
        f.flush().unwrap();
        match load_embeddings(f.path(), &vocab, 3, 1) {
            Err(Error::EmbeddingDimMismatch { line, expected, got }) => {
                assert_eq!((line, expected, got), (2, 3, 2));
            }
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn pad_row_is_zero_and_loads_are_reproducible() {
        let vocab = vocab_of(&["aa", "bb"]);
        let f = tempfile::NamedTempFile::new().unwrap();
        let t1 = load_embeddings(f.path(), &vocab, 4, 7).unwrap();
        let t2 = load_embeddings(f.path(), &vocab, 4, 7).unwrap();
        assert_eq!(t1.matrix, t2.matrix);
        assert!(t1.matrix.row(PAD_INDEX).iter().all(|&v| v == 0.0));
        assert!(t1.matrix.row(OOV_INDEX).iter().any(|&v| v != 0.0));
    }
}
