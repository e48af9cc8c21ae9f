//! Score new text against a trained checkpoint.
//!
//! Two input shapes are supported. Body mode takes a headline plus running
//! body text and segments it exactly like corpus ingestion, so predictions
//! line up with what training saw. Segment mode takes pre-split free-text
//! segments (e.g., reader comments) and treats each one as a paragraph
//! node unchanged. Either way the model runs once and the report carries
//! the document incongruity probability plus one row per segment with its
//! congruity weight, verdict, and the original text for inspection.

use std::fs;
use std::path::Path;

use incongruity::checkpoint::Checkpoint;
use incongruity::corpus::{clean_text, segment_article, RawArticle};
use incongruity::graph::{batch_graphs, build_graph};
use incongruity::model::forward;
use incongruity::synthgen::{GenType, LabeledSample};
use incongruity::textenc::tokenize;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Verdict threshold: a paragraph counts as incongruent exactly when its
/// edge weight drops below 0.5, the same rule evaluation uses.
const WEIGHT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct SegmentReport {
    pub index: usize,
    pub weight: f64,
    /// `"incongruent"` iff `weight < 0.5`.
    pub verdict: &'static str,
    pub text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionReport {
    pub headline: String,
    /// Text carried by the headline node; differs from `headline` only when
    /// an anchor override was given.
    pub anchor: String,
    pub doc_probability: f64,
    pub segments: Vec<SegmentReport>,
}

fn verdict(weight: f64) -> &'static str {
    if weight < WEIGHT_THRESHOLD {
        "incongruent"
    } else {
        "congruent"
    }
}

/// The prediction input, already reduced to displayable segments.
pub struct PredictInput {
    pub headline: String,
    /// Anchor override for the headline node, if any.
    pub anchor: Option<String>,
    /// One entry per paragraph node: the text echoed in the report.
    pub segments: Vec<String>,
}

/// Segment running body text with the given corpus settings.
pub fn segments_from_body(
    headline: &str,
    body: &str,
    segment: &incongruity::corpus::SegmentConfig,
) -> Result<Vec<String>> {
    let raw = RawArticle {
        id: "input".to_string(),
        headline: headline.to_string(),
        body: body.to_string(),
    };
    let article = segment_article(&raw, segment).ok_or_else(|| {
        CliError::data("input is empty after cleaning; provide a headline and body text")
    })?;
    Ok(article
        .paragraphs
        .iter()
        .map(|tokens| tokens.join(" "))
        .collect())
}

/// Run the model over the input and assemble the report.
pub fn predict(checkpoint: &Checkpoint, input: &PredictInput) -> Result<PredictionReport> {
    if input.segments.len() < 2 {
        return Err(CliError::data(format!(
            "got {} segment(s); at least 2 are needed to form a graph — provide more segments or a longer body",
            input.segments.len()
        )));
    }
    let anchor = input
        .anchor
        .clone()
        .unwrap_or_else(|| input.headline.clone());

    let clean_tokens = |label: &str, text: &str| -> Result<Vec<String>> {
        let tokens = tokenize(&clean_text(text));
        if tokens.is_empty() {
            return Err(CliError::data(format!("{label} is empty after cleaning")));
        }
        Ok(tokens)
    };

    let sample = LabeledSample {
        id: "input".to_string(),
        headline_tokens: clean_tokens("anchor text", &anchor)?,
        paragraphs: input
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| clean_tokens(&format!("segment {i}"), s))
            .collect::<Result<_>>()?,
        para_labels: vec![0; input.segments.len()],
        doc_label: 0,
        gen_type: GenType::None,
        provenance: Vec::new(),
    };

    let graph = build_graph(&sample, &checkpoint.vocab, checkpoint.config.token_cap)?;
    let batch = batch_graphs(std::slice::from_ref(&graph))?;
    let output = forward(
        &checkpoint.params,
        &checkpoint.embeddings,
        &batch,
        &checkpoint.config,
    )?;

    let segments = output
        .edge_weights
        .iter()
        .zip(&input.segments)
        .enumerate()
        .map(|(index, (&weight, text))| SegmentReport {
            index,
            weight,
            verdict: verdict(weight),
            text: text.clone(),
        })
        .collect();

    Ok(PredictionReport {
        headline: input.headline.clone(),
        anchor,
        doc_probability: output.doc_probs[0],
        segments,
    })
}

/// Render the human-readable form emitted on standard output.
pub fn format_prediction(report: &PredictionReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("headline: {}\n", report.headline));
    if report.anchor != report.headline {
        out.push_str(&format!("anchor: {}\n", report.anchor));
    }
    out.push_str(&format!(
        "document incongruity probability: {:.4}\n",
        report.doc_probability
    ));
    for seg in &report.segments {
        out.push_str(&format!(
            "segment {:>2}  weight {:.4}  {:<11}  {}\n",
            seg.index, seg.weight, seg.verdict, seg.text
        ));
    }
    out
}

/// Write the structured report next to the printed one.
pub fn write_prediction(path: &Path, report: &PredictionReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, json)
        .map_err(|e| CliError::data(format!("write {}: {e}", path.display())))
}
