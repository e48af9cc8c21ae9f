//! Labeled-sample generation by paragraph mixing.
//!
//! Target articles are altered by pulling paragraphs out of a disjoint pool
//! of donor articles. Four mix-up types exist: Type I inserts donor
//! paragraphs at random positions and Type II appends a whole donor body
//! (both grow the article), while Type III replaces paragraphs at scattered
//! positions and Type IV replaces one contiguous run (both preserve length).
//! Only the length-preserving types are enabled by default so generated and
//! original articles stay on the same length distribution.
//!
//! Every sample draws its randomness from a ChaCha stream indexed by the
//! target's position under a master seed, so generation is reproducible and
//! order-independent.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SegmentedArticle;
use crate::error::{Error, Result};

/// Which mix-up process produced a sample; `None` marks untouched articles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GenType {
    #[serde(rename = "NONE")]
    None,
    I,
    II,
    III,
    IV,
}

impl std::fmt::Display for GenType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GenType::None => "NONE",
            GenType::I => "I",
            GenType::II => "II",
            GenType::III => "III",
            GenType::IV => "IV",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for GenType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NONE" => Ok(GenType::None),
            "I" | "1" => Ok(GenType::I),
            "II" | "2" => Ok(GenType::II),
            "III" | "3" => Ok(GenType::III),
            "IV" | "4" => Ok(GenType::IV),
            other => Err(format!("unknown generation type `{other}`")),
        }
    }
}

/// Where a swapped-in paragraph came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Paragraph position in the generated sample.
    pub position: usize,
    /// Donor article id.
    pub source_id: String,
    /// Paragraph index within the donor article.
    pub source_paragraph: usize,
}

/// A (possibly manipulated) article with per-paragraph incongruity labels.
///
/// `para_labels[i] = 1` marks paragraph `i` as swapped-in; the document label
/// is 1 exactly when any paragraph label is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: String,
    #[serde(rename = "headline")]
    pub headline_tokens: Vec<String>,
    pub paragraphs: Vec<Vec<String>>,
    pub para_labels: Vec<u8>,
    pub doc_label: u8,
    pub gen_type: GenType,
    pub provenance: Vec<Provenance>,
}

impl LabeledSample {
    /// Expose an untouched article as a congruent sample.
    pub fn congruent(article: &SegmentedArticle) -> Self {
        LabeledSample {
            id: article.id.clone(),
            headline_tokens: article.headline_tokens.clone(),
            paragraphs: article.paragraphs.clone(),
            para_labels: vec![0; article.paragraphs.len()],
            doc_label: 0,
            gen_type: GenType::None,
            provenance: Vec::new(),
        }
    }

    pub fn paragraph_count(&self) -> usize {
        self.paragraphs.len()
    }
}

/// Articles sliced into the three target splits plus the donor pool.
#[derive(Debug, Clone)]
pub struct PartitionedCorpus {
    pub train: Vec<SegmentedArticle>,
    pub dev: Vec<SegmentedArticle>,
    pub test: Vec<SegmentedArticle>,
    pub pool: Vec<SegmentedArticle>,
}

/// Generated samples for each split plus the donor id set. The four
/// underlying article-id sets are pairwise disjoint by construction.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<LabeledSample>,
    pub dev: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub sample_pool_ids: BTreeSet<String>,
}

/// Deterministically shuffle under the seed, then slice into train, dev,
/// test and pool. Counts come from the fractions by largest remainder, so
/// they always sum to the corpus size.
pub fn partition_corpus(
    articles: Vec<SegmentedArticle>,
    ratios: [f64; 4],
    seed: u64,
) -> Result<PartitionedCorpus> {
    if ratios.iter().any(|&r| r <= 0.0) {
        return Err(Error::InvalidRatios {
            msg: format!("all fractions must be positive, got {ratios:?}"),
        });
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidRatios {
            msg: format!("fractions must sum to 1, got {sum}"),
        });
    }
    let n = articles.len();
    let counts = largest_remainder_counts(n, &ratios);
    if counts.contains(&0) {
        return Err(Error::InvalidRatios {
            msg: format!("{n} articles cannot fill all four splits with ratios {ratios:?}"),
        });
    }

    let mut shuffled = articles;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let mut iter = shuffled.into_iter();
    let mut take = |count: usize| iter.by_ref().take(count).collect::<Vec<_>>();
    Ok(PartitionedCorpus {
        train: take(counts[0]),
        dev: take(counts[1]),
        test: take(counts[2]),
        pool: take(counts[3]),
    })
}

fn largest_remainder_counts(n: usize, ratios: &[f64; 4]) -> [usize; 4] {
    let mut counts = [0usize; 4];
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(4);
    let mut assigned = 0usize;
    for (i, &r) in ratios.iter().enumerate() {
        let exact = r * n as f64;
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        remainders.push((i, exact - exact.floor()));
    }
    // Ties go to the earlier split.
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders.iter().take(n - assigned) {
        counts[*i] += 1;
    }
    counts
}

/// Generate one incongruent sample from a target article.
///
/// The draw order under the seed is fixed: (1) the swap budget `m` uniform
/// in `1..=ceil(k/2)` (skipped for Type II, which takes the whole donor
/// body), capped by the largest donor paragraph count; (2) the donor,
/// uniform among pool articles with at least `m` paragraphs, in pool order;
/// (3) the donor paragraph indices, an `m`-subset kept in original order;
/// (4) the positions for the type. Changing that order changes every
/// downstream dataset, so it is part of the format.
pub fn generate_incongruent(
    target: &SegmentedArticle,
    pool: &[SegmentedArticle],
    gen_type: GenType,
    seed: u64,
) -> Result<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_incongruent_with_rng(target, pool, gen_type, &mut rng)
}

pub fn generate_incongruent_with_rng(
    target: &SegmentedArticle,
    pool: &[SegmentedArticle],
    gen_type: GenType,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledSample> {
    let k = target.paragraph_count();
    if k < 2 {
        return Err(Error::TooFewParagraphs {
            id: target.id.clone(),
            got: k,
            min: 2,
        });
    }
    if pool.is_empty() {
        return Err(Error::PoolExhausted {
            msg: "the donor pool is empty".into(),
        });
    }
    if gen_type == GenType::None {
        return Ok(LabeledSample::congruent(target));
    }

    let max_donor_paragraphs = pool.iter().map(|a| a.paragraph_count()).max().unwrap();
    if max_donor_paragraphs == 0 {
        return Err(Error::PoolExhausted {
            msg: "no pool article has any paragraph".into(),
        });
    }

    let (donor, donor_indices, positions, final_len) = match gen_type {
        GenType::II => {
            let donor = &pool[rng.gen_range(0..pool.len())];
            let donor_k = donor.paragraph_count();
            let indices: Vec<usize> = (0..donor_k).collect();
            let positions: Vec<usize> = (k..k + donor_k).collect();
            (donor, indices, positions, k + donor_k)
        }
        GenType::I | GenType::III | GenType::IV => {
            let m_cap = k.div_ceil(2);
            let m = rng.gen_range(1..=m_cap).min(max_donor_paragraphs);
            let eligible: Vec<&SegmentedArticle> = pool
                .iter()
                .filter(|a| a.paragraph_count() >= m)
                .collect();
            let donor = eligible[rng.gen_range(0..eligible.len())];
            let donor_indices = sorted_subset(rng, donor.paragraph_count(), m);
            let (positions, final_len) = match gen_type {
                GenType::I => (sorted_subset(rng, k + m, m), k + m),
                GenType::III => (sorted_subset(rng, k, m), k),
                GenType::IV => {
                    let start = rng.gen_range(0..=k - m);
                    ((start..start + m).collect(), k)
                }
                _ => unreachable!(),
            };
            (donor, donor_indices, positions, final_len)
        }
        GenType::None => unreachable!(),
    };

    Ok(assemble(
        target,
        donor,
        gen_type,
        &donor_indices,
        &positions,
        final_len,
    ))
}

/// Uniform `m`-subset of `0..n`, ascending.
fn sorted_subset(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<usize> {
    let mut indices = rand::seq::index::sample(rng, n, m).into_vec();
    indices.sort_unstable();
    indices
}

fn assemble(
    target: &SegmentedArticle,
    donor: &SegmentedArticle,
    gen_type: GenType,
    donor_indices: &[usize],
    positions: &[usize],
    final_len: usize,
) -> LabeledSample {
    let mut paragraphs: Vec<Vec<String>> = Vec::with_capacity(final_len);
    let mut para_labels = Vec::with_capacity(final_len);
    let mut provenance = Vec::with_capacity(positions.len());
    let mut target_iter = target.paragraphs.iter();
    let replacing = matches!(gen_type, GenType::III | GenType::IV);

    let mut swap_cursor = 0usize;
    for position in 0..final_len {
        if swap_cursor < positions.len() && positions[swap_cursor] == position {
            let donor_paragraph = donor_indices[swap_cursor];
            paragraphs.push(donor.paragraphs[donor_paragraph].clone());
            para_labels.push(1);
            provenance.push(Provenance {
                position,
                source_id: donor.id.clone(),
                source_paragraph: donor_paragraph,
            });
            if replacing {
                // The target paragraph at this slot is dropped.
                target_iter.next();
            }
            swap_cursor += 1;
        } else {
            paragraphs.push(target_iter.next().expect("target paragraphs cover slots").clone());
            para_labels.push(0);
        }
    }

    LabeledSample {
        id: target.id.clone(),
        headline_tokens: target.headline_tokens.clone(),
        paragraphs,
        para_labels,
        doc_label: 1,
        gen_type,
        provenance,
    }
}

/// Build a labeled dataset over target articles: each target independently
/// becomes incongruent with probability `incongruent_fraction` (type chosen
/// uniformly from `allowed_types`) or is emitted verbatim. Target `i` uses
/// ChaCha stream `i` under the master seed.
pub fn build_dataset(
    targets: &[SegmentedArticle],
    pool: &[SegmentedArticle],
    incongruent_fraction: f64,
    allowed_types: &[GenType],
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    if !(0.0 < incongruent_fraction && incongruent_fraction < 1.0) {
        return Err(Error::InvalidRatios {
            msg: format!("incongruent fraction must be in (0,1), got {incongruent_fraction}"),
        });
    }
    let mut types: Vec<GenType> = allowed_types
        .iter()
        .copied()
        .filter(|t| *t != GenType::None)
        .collect();
    types.sort_unstable();
    types.dedup();
    if types.is_empty() {
        return Err(Error::InvalidRatios {
            msg: "allowed_types must name at least one generation type".into(),
        });
    }

    let mut samples = Vec::with_capacity(targets.len());
    for (i, target) in targets.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let incongruent = rng.gen_bool(incongruent_fraction);
        if incongruent {
            let gen_type = types[rng.gen_range(0..types.len())];
            samples.push(generate_incongruent_with_rng(target, pool, gen_type, &mut rng)?);
        } else {
            samples.push(LabeledSample::congruent(target));
        }
    }
    Ok(samples)
}

/// Default mix-up types: the length-preserving pair.
pub fn default_types() -> Vec<GenType> {
    vec![GenType::III, GenType::IV]
}

/// Partition then generate all three splits. Each split gets its own master
/// seed derived from `seed` so streams never collide across splits.
pub fn build_split(
    partitioned: &PartitionedCorpus,
    incongruent_fraction: f64,
    allowed_types: &[GenType],
    seed: u64,
) -> Result<DatasetSplit> {
    let pool = &partitioned.pool;
    Ok(DatasetSplit {
        train: build_dataset(&partitioned.train, pool, incongruent_fraction, allowed_types, seed)?,
        dev: build_dataset(
            &partitioned.dev,
            pool,
            incongruent_fraction,
            allowed_types,
            seed.wrapping_add(1),
        )?,
        test: build_dataset(
            &partitioned.test,
            pool,
            incongruent_fraction,
            allowed_types,
            seed.wrapping_add(2),
        )?,
        sample_pool_ids: pool.iter().map(|a| a.id.clone()).collect(),
    })
}

/// Serialize samples as line-delimited JSON, one record per line.
pub fn write_samples(path: impl AsRef<Path>, samples: &[LabeledSample]) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    let body = samples_to_jsonl(samples);
    file.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// The exact byte representation used by [`write_samples`].
pub fn samples_to_jsonl(samples: &[LabeledSample]) -> String {
    let mut out = String::new();
    for sample in samples {
        out.push_str(&serde_json::to_string(sample).expect("sample serializes"));
        out.push('\n');
    }
    out
}

/// Read samples from line-delimited JSON, validating label shape.
pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: LabeledSample =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: line_no,
                msg: e.to_string(),
            })?;
        if sample.para_labels.len() != sample.paragraphs.len() {
            return Err(Error::MalformedRecord {
                line: line_no,
                msg: format!(
                    "{} paragraphs but {} labels",
                    sample.paragraphs.len(),
                    sample.para_labels.len()
                ),
            });
        }
        let expected_doc = sample.para_labels.iter().copied().max().unwrap_or(0);
        if sample.doc_label != expected_doc {
            return Err(Error::MalformedRecord {
                line: line_no,
                msg: "doc_label disagrees with paragraph labels".into(),
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(id: &str, paragraphs: usize) -> SegmentedArticle {
        SegmentedArticle {
            id: id.to_string(),
            headline_tokens: vec![format!("hl-{id}")],
            paragraphs: (0..paragraphs)
                .map(|p| vec![format!("{id}-p{p}-a"), format!("{id}-p{p}-b")])
                .collect(),
            sentence_counts: vec![1; paragraphs],
        }
    }

    fn pool(n: usize, paragraphs: usize) -> Vec<SegmentedArticle> {
        (0..n).map(|i| article(&format!("pool{i}"), paragraphs)).collect()
    }

    #[test]
    fn partition_sizes_follow_ratios() {
        let articles: Vec<_> = (0..10).map(|i| article(&format!("a{i}"), 2)).collect();
        let split = partition_corpus(articles, [0.4, 0.2, 0.2, 0.2], 7).unwrap();
        assert_eq!(split.train.len(), 4);
        assert_eq!(split.dev.len(), 2);
        assert_eq!(split.test.len(), 2);
        assert_eq!(split.pool.len(), 2);
    }

    #[test]
    fn partition_is_deterministic() {
        let articles: Vec<_> = (0..10).map(|i| article(&format!("a{i}"), 2)).collect();
        let s1 = partition_corpus(articles.clone(), [0.4, 0.2, 0.2, 0.2], 7).unwrap();
        let s2 = partition_corpus(articles, [0.4, 0.2, 0.2, 0.2], 7).unwrap();
        let ids = |v: &[SegmentedArticle]| v.iter().map(|a| a.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&s1.train), ids(&s2.train));
        assert_eq!(ids(&s1.pool), ids(&s2.pool));
    }

    #[test]
    fn different_seeds_permute_differently() {
        let articles: Vec<_> = (0..100).map(|i| article(&format!("a{i}"), 2)).collect();
        let s7 = partition_corpus(articles.clone(), [0.4, 0.2, 0.2, 0.2], 7).unwrap();
        let s8 = partition_corpus(articles, [0.4, 0.2, 0.2, 0.2], 8).unwrap();
        let ids = |v: &[SegmentedArticle]| v.iter().map(|a| a.id.clone()).collect::<Vec<_>>();
        assert_ne!(ids(&s7.train), ids(&s8.train));
    }

    #[test]
    fn impossible_ratios_error() {
        let articles: Vec<_> = (0..3).map(|i| article(&format!("a{i}"), 2)).collect();
        assert!(partition_corpus(articles, [0.97, 0.01, 0.01, 0.01], 1).is_err());
        let articles: Vec<_> = (0..10).map(|i| article(&format!("a{i}"), 2)).collect();
        assert!(partition_corpus(articles, [0.5, 0.2, 0.2, 0.2], 1).is_err());
    }

    /// Re-derive the documented draw order and compare with the generator.
    #[test]
    fn type_iii_matches_rng_rederivation() {
        let target = article("t", 4);
        let donors = pool(5, 3);
        let seed = 42u64;
        let sample = generate_incongruent(&target, &donors, GenType::III, seed).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(1..=2usize);
        let donor_idx = rng.gen_range(0..5usize);
        let mut donor_paras = rand::seq::index::sample(&mut rng, 3, m).into_vec();
        donor_paras.sort_unstable();
        let mut positions = rand::seq::index::sample(&mut rng, 4, m).into_vec();
        positions.sort_unstable();

        let mut expected_labels = vec![0u8; 4];
        for &p in &positions {
            expected_labels[p] = 1;
        }
        assert_eq!(sample.para_labels, expected_labels);
        assert_eq!(sample.doc_label, 1);
        assert_eq!(sample.provenance.len(), m);
        for (prov, (&pos, &dp)) in sample
            .provenance
            .iter()
            .zip(positions.iter().zip(donor_paras.iter()))
        {
            assert_eq!(prov.position, pos);
            assert_eq!(prov.source_id, format!("pool{donor_idx}"));
            assert_eq!(prov.source_paragraph, dp);
            assert_eq!(
                sample.paragraphs[pos],
                donors[donor_idx].paragraphs[dp],
                "swapped paragraph must equal the donor paragraph"
            );
        }
    }

    #[test]
    fn type_iv_flags_contiguous_run() {
        let target = article("t", 4);
        let donors = pool(3, 4);
        for seed in 0..50 {
            let sample = generate_incongruent(&target, &donors, GenType::IV, seed).unwrap();
            assert_eq!(sample.paragraph_count(), 4);
            let flagged: Vec<usize> = sample
                .para_labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == 1)
                .map(|(i, _)| i)
                .collect();
            assert!(!flagged.is_empty());
            for pair in flagged.windows(2) {
                assert_eq!(pair[1], pair[0] + 1, "run must be contiguous");
            }
        }
    }

    #[test]
    fn types_iii_iv_preserve_length_types_i_ii_grow() {
        let target = article("t", 5);
        let donors = pool(4, 3);
        for seed in 0..25 {
            for (ty, preserves) in [
                (GenType::I, false),
                (GenType::II, false),
                (GenType::III, true),
                (GenType::IV, true),
            ] {
                let sample = generate_incongruent(&target, &donors, ty, seed).unwrap();
                if preserves {
                    assert_eq!(sample.paragraph_count(), 5, "{ty} must preserve length");
                } else {
                    assert!(sample.paragraph_count() > 5, "{ty} must grow the article");
                }
                assert_eq!(sample.doc_label, *sample.para_labels.iter().max().unwrap());
            }
        }
    }

    #[test]
    fn empty_pool_is_an_error() {
        let target = article("t", 4);
        assert!(matches!(
            generate_incongruent(&target, &[], GenType::III, 1),
            Err(Error::PoolExhausted { .. })
        ));
    }

    #[test]
    fn swap_budget_caps_at_donor_paragraphs() {
        // Donors have a single paragraph, so m collapses to 1 even when the
        // draw asks for more.
        let target = article("t", 6);
        let donors = pool(3, 1);
        for seed in 0..20 {
            let sample = generate_incongruent(&target, &donors, GenType::III, seed).unwrap();
            assert_eq!(sample.provenance.len(), 1);
        }
    }

    #[test]
    fn dataset_class_support_near_half() {
        let targets: Vec<_> = (0..6000).map(|i| article(&format!("t{i}"), 2)).collect();
        let donors = pool(10, 3);
        let samples = build_dataset(&targets, &donors, 0.5, &default_types(), 9).unwrap();
        let incongruent = samples.iter().filter(|s| s.doc_label == 1).count();
        let congruent = samples.len() - incongruent;
        assert!(
            (incongruent as i64 - 3000).abs() <= 200,
            "support [{congruent} {incongruent}] too far from [3000 3000]"
        );
    }

    #[test]
    fn dataset_is_reproducible() {
        let targets: Vec<_> = (0..10).map(|i| article(&format!("t{i}"), 3)).collect();
        let donors = pool(4, 3);
        let a = build_dataset(&targets, &donors, 0.5, &default_types(), 3).unwrap();
        let b = build_dataset(&targets, &donors, 0.5, &default_types(), 3).unwrap();
        assert_eq!(samples_to_jsonl(&a), samples_to_jsonl(&b));
    }

    #[test]
    fn restricting_types_restricts_outputs() {
        let targets: Vec<_> = (0..200).map(|i| article(&format!("t{i}"), 4)).collect();
        let donors = pool(6, 3);
        let samples = build_dataset(&targets, &donors, 0.5, &[GenType::III], 11).unwrap();
        for sample in samples.iter().filter(|s| s.doc_label == 1) {
            assert_eq!(sample.gen_type, GenType::III);
            assert_eq!(sample.paragraph_count(), 4);
        }
        assert!(samples.iter().any(|s| s.doc_label == 1));
    }

    #[test]
    fn each_target_appears_exactly_once() {
        let targets: Vec<_> = (0..50).map(|i| article(&format!("t{i}"), 3)).collect();
        let donors = pool(5, 3);
        let samples = build_dataset(&targets, &donors, 0.4, &default_types(), 5).unwrap();
        let mut ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 50);
    }

    #[test]
    fn samples_roundtrip_through_jsonl() {
        let targets: Vec<_> = (0..8).map(|i| article(&format!("t{i}"), 3)).collect();
        let donors = pool(3, 3);
        let samples = build_dataset(&targets, &donors, 0.5, &default_types(), 13).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        write_samples(file.path(), &samples).unwrap();
        let back = read_samples(file.path()).unwrap();
        assert_eq!(back, samples);
    }
}
