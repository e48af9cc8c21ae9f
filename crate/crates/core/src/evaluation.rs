//! Metrics and reports: paragraph/document accuracy, AUC,
//! precision/recall/F1 with class support, and a tabular report that
//! round-trips through CSV.
//!
//! The positive class is "incongruent" throughout. Document predictions
//! threshold the model probability at 0.5 with ties predicted positive;
//! paragraph predictions call a paragraph incongruent exactly when its
//! edge weight is below 0.5.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NewsGraph;
use crate::model::{forward, ModelConfig, ModelParams};
use crate::textenc::EmbeddingTable;

/// Binary confusion counts with the incongruent class positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Threshold probabilities and count the four outcomes. A probability
/// exactly at the threshold is predicted positive.
pub fn confusion_counts(probs: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion> {
    if probs.is_empty() {
        return Err(Error::EmptyInput { what: "predictions" });
    }
    assert_eq!(probs.len(), labels.len(), "probs and labels must align");
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&p, &l) in probs.iter().zip(labels) {
        match (p >= threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Area under the ROC curve via the rank statistic: the probability that a
/// random positive outscores a random negative, ties counting one half.
pub fn auc(probs: &[f64], labels: &[u8]) -> Result<f64> {
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    assert_eq!(probs.len(), labels.len(), "probs and labels must align");

    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).expect("finite scores"));

    // Average ranks over tied scores (1-based ranks).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let n_pos = positives as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * negatives as f64))
}

/// Everything the metrics need, flattened over an evaluated dataset.
#[derive(Debug, Clone, Default)]
pub struct ModelOutputs {
    pub doc_probs: Vec<f64>,
    pub doc_labels: Vec<u8>,
    pub edge_weights: Vec<f64>,
    pub edge_congruity: Vec<u8>,
}

/// Run the model over a graph list in fixed-size chunks and flatten the
/// outputs in input order.
pub fn collect_outputs(
    params: &ModelParams,
    embeddings: &EmbeddingTable,
    graphs: &[NewsGraph],
    config: &ModelConfig,
    batch_size: usize,
) -> Result<ModelOutputs> {
    if graphs.is_empty() {
        return Err(Error::EmptyInput { what: "evaluation dataset" });
    }
    let mut outputs = ModelOutputs::default();
    for chunk in graphs.chunks(batch_size.max(1)) {
        let batch = crate::graph::batch_graphs(chunk)?;
        let out = forward(params, embeddings, &batch, config)?;
        outputs.doc_probs.extend(out.doc_probs);
        outputs.doc_labels.extend(batch.doc_labels.iter().copied());
        outputs.edge_weights.extend(out.edge_weights);
        outputs
            .edge_congruity
            .extend(batch.edge_congruity.iter().copied());
    }
    Ok(outputs)
}

/// The Metrics row for one dataset. `support` holds the document counts
/// `[congruent, incongruent]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub acc_para: f64,
    pub acc_doc: f64,
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: [usize; 2],
}

/// Micro-averaged paragraph accuracy over every edge: a paragraph is
/// predicted incongruent exactly when its weight drops below 0.5.
pub fn paragraph_accuracy(edge_weights: &[f64], edge_congruity: &[u8]) -> Result<f64> {
    if edge_weights.is_empty() {
        return Err(Error::EmptyInput { what: "edge weights" });
    }
    assert_eq!(edge_weights.len(), edge_congruity.len(), "weights and labels must align");
    let correct = edge_weights
        .iter()
        .zip(edge_congruity)
        .filter(|&(&w, &c)| (w < 0.5) == (c == 0))
        .count();
    Ok(correct as f64 / edge_weights.len() as f64)
}

/// Document and paragraph metrics from collected outputs.
pub fn compute_metrics(outputs: &ModelOutputs) -> Result<Metrics> {
    let confusion = confusion_counts(&outputs.doc_probs, &outputs.doc_labels, 0.5)?;
    let auc = auc(&outputs.doc_probs, &outputs.doc_labels)?;
    let acc_para = paragraph_accuracy(&outputs.edge_weights, &outputs.edge_congruity)?;
    let incongruent = outputs.doc_labels.iter().filter(|&&l| l == 1).count();
    Ok(Metrics {
        acc_para,
        acc_doc: confusion.accuracy(),
        auc,
        precision: confusion.precision(),
        recall: confusion.recall(),
        f1: confusion.f1(),
        support: [outputs.doc_labels.len() - incongruent, incongruent],
    })
}

/// Forward the model over a labeled dataset and score it.
pub fn evaluate(
    params: &ModelParams,
    embeddings: &EmbeddingTable,
    graphs: &[NewsGraph],
    config: &ModelConfig,
    batch_size: usize,
) -> Result<Metrics> {
    compute_metrics(&collect_outputs(params, embeddings, graphs, config, batch_size)?)
}

/// One printed report line. The AUC is logged elsewhere; the tabular
/// report carries exactly the established column set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub size: usize,
    pub acc_para: f64,
    pub acc_doc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: [usize; 2],
}

impl ReportRow {
    pub fn new(dataset: impl Into<String>, size: usize, metrics: &Metrics) -> Self {
        ReportRow {
            dataset: dataset.into(),
            size,
            acc_para: metrics.acc_para,
            acc_doc: metrics.acc_doc,
            precision: metrics.precision,
            recall: metrics.recall,
            f1: metrics.f1,
            support: metrics.support,
        }
    }

    /// The row with every metric rounded to the emitted 4-decimal form.
    pub fn rounded(&self) -> Self {
        let r4 = |v: f64| (v * 10_000.0).round() / 10_000.0;
        ReportRow {
            dataset: self.dataset.clone(),
            size: self.size,
            acc_para: r4(self.acc_para),
            acc_doc: r4(self.acc_doc),
            precision: r4(self.precision),
            recall: r4(self.recall),
            f1: r4(self.f1),
            support: self.support,
        }
    }

    fn support_cell(&self) -> String {
        format!("[{} {}]", self.support[0], self.support[1])
    }
}

pub const REPORT_COLUMNS: [&str; 8] = [
    "Dataset",
    "Size",
    "Acc(para)",
    "Acc(doc)",
    "Precision",
    "Recall",
    "F1",
    "Support",
];

/// Fixed-width text table with 4-decimal metrics, rows in input order.
pub fn format_report(rows: &[ReportRow]) -> String {
    let mut cells: Vec<Vec<String>> = vec![REPORT_COLUMNS.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        cells.push(vec![
            row.dataset.clone(),
            row.size.to_string(),
            format!("{:.4}", row.acc_para),
            format!("{:.4}", row.acc_doc),
            format!("{:.4}", row.precision),
            format!("{:.4}", row.recall),
            format!("{:.4}", row.f1),
            row.support_cell(),
        ]);
    }
    let widths: Vec<usize> = (0..REPORT_COLUMNS.len())
        .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap())
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:<width$}", width = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Machine-readable emission: one CSV with exactly the report columns.
pub fn write_report_csv(path: impl AsRef<Path>, rows: &[ReportRow]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(REPORT_COLUMNS)
        .map_err(|e| Error::MalformedRecord {
            line: 1,
            msg: e.to_string(),
        })?;
    for (i, row) in rows.iter().enumerate() {
        writer
            .write_record([
                row.dataset.as_str(),
                &row.size.to_string(),
                &format!("{:.4}", row.acc_para),
                &format!("{:.4}", row.acc_doc),
                &format!("{:.4}", row.precision),
                &format!("{:.4}", row.recall),
                &format!("{:.4}", row.f1),
                &row.support_cell(),
            ])
            .map_err(|e| Error::MalformedRecord {
                line: i + 2,
                msg: e.to_string(),
            })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parse a report CSV back into rows (values carry the emitted rounding).
pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRecord {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if headers.iter().ne(REPORT_COLUMNS) {
        return Err(Error::MalformedRecord {
            line: 1,
            msg: format!("unexpected report columns: {headers:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::MalformedRecord {
            line,
            msg: e.to_string(),
        })?;
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::MalformedRecord {
                line,
                msg: format!("missing column {idx}"),
            })
        };
        let num = |idx: usize| -> Result<f64> {
            field(idx)?.parse().map_err(|e| Error::MalformedRecord {
                line,
                msg: format!("bad number in column {idx}: {e}"),
            })
        };
        let support_text = field(7)?.trim_matches(['[', ']']);
        let mut parts = support_text.split_whitespace();
        let parse_count = |s: Option<&str>| -> Result<usize> {
            s.and_then(|v| v.parse().ok()).ok_or_else(|| Error::MalformedRecord {
                line,
                msg: format!("bad support cell `{support_text}`"),
            })
        };
        let support = [parse_count(parts.next())?, parse_count(parts.next())?];
        rows.push(ReportRow {
            dataset: field(0)?.to_string(),
            size: field(1)?.parse().map_err(|e| Error::MalformedRecord {
                line,
                msg: format!("bad size: {e}"),
            })?,
            acc_para: num(2)?,
            acc_doc: num(3)?,
            precision: num(4)?,
            recall: num(5)?,
            f1: num(6)?,
            support,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Quadratic reference: compare every positive against every negative.
    fn auc_bruteforce(probs: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in probs.iter().enumerate() {
            if labels[i] != 1 {
                continue;
            }
            for (j, &pj) in probs.iter().enumerate() {
                if labels[j] != 0 {
                    continue;
                }
                pairs += 1.0;
                if pi > pj {
                    wins += 1.0;
                } else if pi == pj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn confusion_on_two_items() {
        let c = confusion_counts(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        assert_eq!(c, Confusion { tp: 1, fp: 0, tn: 1, fn_: 0 });
        assert_eq!(c.accuracy(), 1.0);
    }

    #[test]
    fn threshold_tie_predicts_positive() {
        let c = confusion_counts(&[0.5, 0.5], &[1, 0], 0.5).unwrap();
        assert_eq!(c.tp, 1);
        assert_eq!(c.fp, 1);
        assert_eq!(c.recall(), 1.0);
        assert_eq!(c.precision(), 0.5);
    }

    #[test]
    fn empty_predictions_error() {
        assert!(matches!(
            confusion_counts(&[], &[], 0.5),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn random_confusion_matches_bruteforce_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probs: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..100).map(|_| rng.gen_range(0..=1)).collect();
        let c = confusion_counts(&probs, &labels, 0.5).unwrap();
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for i in 0..100 {
            let pred = probs[i] >= 0.5;
            match (pred, labels[i]) {
                (true, 1) => tp += 1,
                (true, 0) => fp += 1,
                (false, 0) => tn += 1,
                (false, 1) => fn_ += 1,
                _ => unreachable!(),
            }
        }
        assert_eq!(c, Confusion { tp, fp, tn, fn_ });
    }

    #[test]
    fn auc_perfect_separation_is_one() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn auc_all_ties_is_half() {
        assert_eq!(auc(&[0.4, 0.4, 0.4, 0.4], &[1, 0, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn auc_single_class_errors() {
        assert!(matches!(auc(&[0.3, 0.7], &[1, 1]), Err(Error::SingleClass)));
    }

    proptest! {
        #[test]
        fn auc_equals_pairwise_enumeration(
            seed in 0u64..500,
            n in 2usize..100,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Coarse grid to force plenty of ties.
            let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=10) as f64 / 10.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            labels[0] = 1;
            labels[n - 1] = 0;
            let fast = auc(&probs, &labels).unwrap();
            let slow = auc_bruteforce(&probs, &labels);
            prop_assert!((fast - slow).abs() < 1e-12);
        }

        #[test]
        fn auc_is_invariant_under_monotone_transforms(
            seed in 0u64..200,
            n in 2usize..60,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(77));
            let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            labels[0] = 1;
            labels[n - 1] = 0;
            let transformed: Vec<f64> = probs.iter().map(|&p| 3.0 * p + 1.0).collect();
            let a = auc(&probs, &labels).unwrap();
            let b = auc(&transformed, &labels).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn paragraph_accuracy_uses_strict_below_half() {
        // Weight exactly 0.5 counts as congruent.
        let acc = paragraph_accuracy(&[0.5, 0.49, 0.51, 0.2], &[1, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(acc, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn perfect_outputs_score_one_everywhere() {
        let outputs = ModelOutputs {
            doc_probs: vec![0.9, 0.8, 0.1, 0.2],
            doc_labels: vec![1, 1, 0, 0],
            edge_weights: vec![0.1, 0.9, 0.8, 0.95],
            edge_congruity: vec![0, 1, 1, 1],
        };
        let m = compute_metrics(&outputs).unwrap();
        assert_eq!(m.acc_doc, 1.0);
        assert_eq!(m.acc_para, 1.0);
        assert_eq!(m.auc, 1.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.support, [2, 2]);
    }

    #[test]
    fn constant_half_probabilities_on_balanced_labels() {
        let outputs = ModelOutputs {
            doc_probs: vec![0.5; 4],
            doc_labels: vec![1, 0, 1, 0],
            edge_weights: vec![0.6; 4],
            edge_congruity: vec![1, 1, 0, 0],
        };
        // All ties → AUC needs both classes but scores are equal: 0.5;
        // thresholding predicts everything positive.
        let m = compute_metrics(&outputs).unwrap();
        assert_eq!(m.acc_doc, 0.5);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.auc, 0.5);
    }

    #[test]
    fn report_prints_exact_column_set_and_support_format() {
        let metrics = Metrics {
            acc_para: 1.0,
            acc_doc: 1.0,
            auc: 1.0,
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            support: [3000, 3000],
        };
        let row = ReportRow::new("main", 6000, &metrics);
        let text = format_report(&[row]);
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        for column in REPORT_COLUMNS {
            assert!(header.contains(column), "missing column {column}");
        }
        let data = lines.next().unwrap();
        assert!(data.contains("[3000 3000]"));
        assert_eq!(data.matches("1.0000").count(), 5);
    }

    #[test]
    fn report_preserves_row_order() {
        let m = Metrics {
            acc_para: 0.5,
            acc_doc: 0.5,
            auc: 0.5,
            precision: 0.5,
            recall: 0.5,
            f1: 0.5,
            support: [1, 1],
        };
        let rows = vec![ReportRow::new("first", 2, &m), ReportRow::new("second", 2, &m)];
        let text = format_report(&rows);
        let first_pos = text.find("first").unwrap();
        let second_pos = text.find("second").unwrap();
        assert!(first_pos < second_pos);
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn csv_report_round_trips() {
        let rows = vec![
            ReportRow {
                dataset: "dev".into(),
                size: 120,
                acc_para: 0.912345,
                acc_doc: 0.95,
                precision: 0.875,
                recall: 1.0,
                f1: 0.93333333,
                support: [60, 60],
            },
            ReportRow {
                dataset: "test".into(),
                size: 121,
                acc_para: 1.0,
                acc_doc: 0.0,
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
                support: [121, 0],
            },
        ];
        let file = tempfile::NamedTempFile::new().unwrap();
        write_report_csv(file.path(), &rows).unwrap();
        let back = read_report_csv(file.path()).unwrap();
        let expected: Vec<ReportRow> = rows.iter().map(|r| r.rounded()).collect();
        assert_eq!(back, expected);
    }
}
