//! Corpus ingestion: loading raw news records, text cleaning, sentence
//! splitting and paragraph segmentation.
//!
//! Raw articles arrive as line-delimited JSON records with string fields
//! `id`, `headline` and `content`. Cleaning strips punctuation but keeps the
//! sentence terminators (the Bangla danda `।` plus `?`, `!`, `.`) so the body
//! can be split into sentences, which are then chunked into fixed-size
//! paragraphs.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::textenc::tokenize;

/// Characters that end a sentence. Kept by [`clean_text`], consumed by
/// [`split_sentences`].
pub const SENTENCE_TERMINATORS: [char; 4] = ['।', '?', '!', '.'];

/// Punctuation stripped by [`clean_text`]. Kept deliberately explicit; the
/// terminator set above is never part of it.
const STRIPPED_PUNCTUATION: &[char] = &[
    ',', ';', ':', '\'', '"', '`', '(', ')', '[', ']', '{', '}', '<', '>', '/', '\\', '|', '@',
    '#', '$', '%', '^', '&', '*', '_', '+', '=', '~', '-', '‘', '’', '“', '”', '«', '»', '‹', '›',
    '„', '‚', '—', '–', '‐', '…', '•', '·', '৷', '॥',
];

/// One raw news record as found in a corpus file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawArticle {
    pub id: String,
    pub headline: String,
    #[serde(rename = "content")]
    pub body: String,
}

/// An article after cleaning, sentence splitting and paragraph segmentation.
///
/// `paragraphs[i]` holds the tokens of paragraph `i` and `sentence_counts[i]`
/// how many sentences it was built from. Articles that reach the sample
/// generator always have at least two paragraphs; [`filter_articles`]
/// enforces that together with the other thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentedArticle {
    pub id: String,
    pub headline_tokens: Vec<String>,
    pub paragraphs: Vec<Vec<String>>,
    pub sentence_counts: Vec<usize>,
}

impl SegmentedArticle {
    pub fn paragraph_count(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn sentence_count(&self) -> usize {
        self.sentence_counts.iter().sum()
    }

    pub fn body_token_count(&self) -> usize {
        self.paragraphs.iter().map(Vec::len).sum()
    }
}

/// Token-count statistics over a corpus, one row of the stats table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub samples: usize,
    pub headline_len_avg: f64,
    pub headline_len_std: f64,
    pub content_len_avg: f64,
    pub content_len_std: f64,
}

/// Paragraph segmentation thresholds.
///
/// The paragraph size depends on how long the article is: short articles get
/// 5-sentence paragraphs, medium ones 10, long ones 20. The breakpoints (30
/// and 100 sentences) are chosen so that typical articles of each band end up
/// with at least two paragraphs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub small_max_sentences: usize,
    pub medium_max_sentences: usize,
    pub small_paragraph: usize,
    pub medium_paragraph: usize,
    pub large_paragraph: usize,
    /// Articles with fewer body sentences than this are discarded.
    pub min_body_sentences: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            small_max_sentences: 30,
            medium_max_sentences: 100,
            small_paragraph: 5,
            medium_paragraph: 10,
            large_paragraph: 20,
            min_body_sentences: 5,
        }
    }
}

/// Load a line-delimited JSON corpus. Order is preserved; blank lines are
/// skipped. A malformed line or a duplicate id is an error.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<RawArticle>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut seen = HashSet::new();
    let mut articles = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let article: RawArticle =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: line_no,
                msg: e.to_string(),
            })?;
        if !seen.insert(article.id.clone()) {
            return Err(Error::DuplicateId { id: article.id });
        }
        articles.push(article);
    }
    Ok(articles)
}

/// Write segmented articles as line-delimited JSON.
pub fn write_segmented(path: impl AsRef<Path>, articles: &[SegmentedArticle]) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    for article in articles {
        let line = serde_json::to_string(article).expect("segmented article serializes");
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Normalize to composed Unicode, strip punctuation (terminators stay) and
/// collapse whitespace runs. Total and idempotent.
pub fn clean_text(text: &str) -> String {
    let stripped: String = text
        .nfc()
        .filter(|ch| !STRIPPED_PUNCTUATION.contains(ch))
        .collect();
    // Stripping can make combining marks adjacent that were not before;
    // normalize again so the output is canonical (and cleaning idempotent).
    let renormalized: String = stripped.nfc().collect();
    renormalized.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Split cleaned text on sentence terminators. Terminators are dropped,
/// fragments are trimmed, empty fragments discarded. Text without any
/// terminator counts as a single sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if SENTENCE_TERMINATORS.contains(&ch) {
            let trimmed = current.trim();
            if !trimmed.is_empty() {
                sentences.push(trimmed.to_string());
            }
            current.clear();
        } else {
            current.push(ch);
        }
    }
    let trimmed = current.trim();
    if !trimmed.is_empty() {
        sentences.push(trimmed.to_string());
    }
    sentences
}

/// Paragraph sizes for an article of `n_sentences` sentences: consecutive
/// chunks of the band's paragraph size, with a remainder shorter than two
/// sentences merged into the previous paragraph.
pub fn paragraph_sizes(n_sentences: usize, cfg: &SegmentConfig) -> Vec<usize> {
    if n_sentences == 0 {
        return Vec::new();
    }
    let size = if n_sentences <= cfg.small_max_sentences {
        cfg.small_paragraph
    } else if n_sentences <= cfg.medium_max_sentences {
        cfg.medium_paragraph
    } else {
        cfg.large_paragraph
    };
    let mut sizes: Vec<usize> = Vec::new();
    let mut remaining = n_sentences;
    while remaining > 0 {
        let chunk = remaining.min(size);
        sizes.push(chunk);
        remaining -= chunk;
    }
    if sizes.len() >= 2 && *sizes.last().unwrap() < 2 {
        let last = sizes.pop().unwrap();
        *sizes.last_mut().unwrap() += last;
    }
    sizes
}

/// Chunk a sentence sequence into paragraphs according to [`paragraph_sizes`].
pub fn segment_paragraphs<T>(sentences: Vec<T>, cfg: &SegmentConfig) -> Vec<Vec<T>> {
    let sizes = paragraph_sizes(sentences.len(), cfg);
    let mut iter = sentences.into_iter();
    sizes
        .iter()
        .map(|&s| iter.by_ref().take(s).collect())
        .collect()
}

/// Clean and segment one raw article. Returns `None` when the cleaned
/// headline or body is empty; length thresholds are left to
/// [`filter_articles`].
pub fn segment_article(raw: &RawArticle, cfg: &SegmentConfig) -> Option<SegmentedArticle> {
    let headline_tokens = tokenize(&clean_text(&raw.headline));
    let body = clean_text(&raw.body);
    let sentences = split_sentences(&body);
    let sentence_tokens: Vec<Vec<String>> = sentences
        .iter()
        .map(|s| tokenize(s))
        .filter(|t| !t.is_empty())
        .collect();
    if headline_tokens.is_empty() || sentence_tokens.is_empty() {
        return None;
    }
    let chunks = segment_paragraphs(sentence_tokens, cfg);
    let sentence_counts: Vec<usize> = chunks.iter().map(Vec::len).collect();
    let paragraphs: Vec<Vec<String>> = chunks
        .into_iter()
        .map(|chunk| chunk.into_iter().flatten().collect())
        .collect();
    Some(SegmentedArticle {
        id: raw.id.clone(),
        headline_tokens,
        paragraphs,
        sentence_counts,
    })
}

/// Clean and segment a whole corpus, dropping articles whose cleaned
/// headline or body is empty.
pub fn segment_corpus(raw: &[RawArticle], cfg: &SegmentConfig) -> Vec<SegmentedArticle> {
    raw.iter().filter_map(|a| segment_article(a, cfg)).collect()
}

/// Keep only articles with enough body (at least `min_body_sentences`
/// sentences and two paragraphs) and a non-empty headline.
pub fn filter_articles(articles: Vec<SegmentedArticle>, cfg: &SegmentConfig) -> Vec<SegmentedArticle> {
    articles
        .into_iter()
        .filter(|a| {
            !a.headline_tokens.is_empty()
                && a.sentence_count() >= cfg.min_body_sentences
                && a.paragraph_count() >= 2
        })
        .collect()
}

/// Token-count mean and population standard deviation for headlines and body
/// content.
pub fn corpus_stats(articles: &[SegmentedArticle]) -> Result<CorpusStats> {
    if articles.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let headline_lens: Vec<f64> = articles
        .iter()
        .map(|a| a.headline_tokens.len() as f64)
        .collect();
    let content_lens: Vec<f64> = articles
        .iter()
        .map(|a| a.body_token_count() as f64)
        .collect();
    let (h_avg, h_std) = mean_and_population_std(&headline_lens);
    let (c_avg, c_std) = mean_and_population_std(&content_lens);
    Ok(CorpusStats {
        samples: articles.len(),
        headline_len_avg: h_avg,
        headline_len_std: h_std,
        content_len_avg: c_avg,
        content_len_std: c_std,
    })
}

fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Render stats rows as an aligned table (Samples, Headline Avg/Std,
/// Content Avg/Std).
pub fn format_stats_table(rows: &[(String, CorpusStats)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>8} {:>14} {:>14} {:>14} {:>14}\n",
        "Dataset", "Samples", "Headline Avg.", "Headline Std", "Content Avg.", "Content Std"
    ));
    for (name, s) in rows {
        out.push_str(&format!(
            "{:<12} {:>8} {:>14.2} {:>14.2} {:>14.2} {:>14.2}\n",
            name, s.samples, s.headline_len_avg, s.headline_len_std, s.content_len_avg,
            s.content_len_std
        ));
    }
    out
}
