//! Star graphs over headline and paragraph nodes, and mini-batching.
//!
//! Each article becomes one graph: a single headline node joined by an
//! undirected edge to every paragraph node. Edges carry congruity labels
//! (the complement of the paragraph labels) so they can supervise learned
//! edge weights. Many graphs batch into one disjoint union for training.
//!
//! Paragraph nodes may be stored in any order: every node remembers its
//! article position, and the order-sensitive parts of the model sort by
//! that position. This makes the forward pass equivariant under node
//! storage permutation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthgen::LabeledSample;
use crate::textenc::Vocabulary;

/// Per-node token budget; sequences are truncated beyond it to bound
/// encoder cost. Typical article bodies sit well below this.
pub const DEFAULT_TOKEN_CAP: usize = 500;

/// What a node represents within its graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    Headline,
    /// A body paragraph, tagged with its position in the article.
    Paragraph { position: usize },
}

/// One article as a star graph. Node 0 is the headline; nodes `1..=k` are
/// paragraphs. `paragraph_positions[i]` gives the article position of the
/// paragraph stored at node `i+1` and `edge_congruity[i]` labels the edge
/// from the headline to that node (1 = congruent = `1 − para_label`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewsGraph {
    pub headline_ids: Vec<usize>,
    pub paragraph_ids: Vec<Vec<usize>>,
    pub paragraph_positions: Vec<usize>,
    /// Undirected `(headline, paragraph)` node-index pairs.
    pub edges: Vec<(usize, usize)>,
    pub edge_congruity: Vec<u8>,
    pub doc_label: u8,
}

impl NewsGraph {
    pub fn paragraph_count(&self) -> usize {
        self.paragraph_ids.len()
    }

    pub fn node_count(&self) -> usize {
        self.paragraph_ids.len() + 1
    }

    /// Recover paragraph labels in article order from the edge labels.
    pub fn para_labels(&self) -> Vec<u8> {
        let mut labels = vec![0u8; self.paragraph_count()];
        for (i, &congruity) in self.edge_congruity.iter().enumerate() {
            labels[self.paragraph_positions[i]] = 1 - congruity;
        }
        labels
    }

    /// Rebuild the graph with paragraph nodes stored in a new order:
    /// new node `i+1` holds what old node `perm[i]+1` held. Article
    /// positions travel with their paragraphs, so the graph still
    /// describes the same article.
    pub fn permute_paragraphs(&self, perm: &[usize]) -> NewsGraph {
        assert_eq!(perm.len(), self.paragraph_count(), "perm must cover all paragraphs");
        let k = perm.len();
        NewsGraph {
            headline_ids: self.headline_ids.clone(),
            paragraph_ids: perm.iter().map(|&i| self.paragraph_ids[i].clone()).collect(),
            paragraph_positions: perm.iter().map(|&i| self.paragraph_positions[i]).collect(),
            edges: (0..k).map(|i| (0, i + 1)).collect(),
            edge_congruity: perm.iter().map(|&i| self.edge_congruity[i]).collect(),
            doc_label: self.doc_label,
        }
    }
}

/// Map a labeled sample to its star graph: tokens become vocabulary
/// indices (unknown → OOV), each node keeps at most `token_cap` tokens,
/// and paragraph nodes are stored in article order.
pub fn build_graph(
    sample: &LabeledSample,
    vocab: &Vocabulary,
    token_cap: usize,
) -> Result<NewsGraph> {
    let k = sample.paragraphs.len();
    if k < 2 {
        return Err(Error::TooFewParagraphs {
            id: sample.id.clone(),
            got: k,
            min: 2,
        });
    }
    let map = |tokens: &[String]| -> Result<Vec<usize>> {
        if tokens.is_empty() {
            return Err(Error::EmptyTokenSequence);
        }
        Ok(tokens.iter().take(token_cap).map(|t| vocab.lookup(t)).collect())
    };

    Ok(NewsGraph {
        headline_ids: map(&sample.headline_tokens)?,
        paragraph_ids: sample
            .paragraphs
            .iter()
            .map(|p| map(p))
            .collect::<Result<Vec<_>>>()?,
        paragraph_positions: (0..k).collect(),
        edges: (0..k).map(|i| (0, i + 1)).collect(),
        edge_congruity: sample.para_labels.iter().map(|&l| 1 - l).collect(),
        doc_label: sample.doc_label,
    })
}

/// Disjoint union of several graphs: node payloads concatenated in graph
/// order (headline first within each graph), edges shifted by each graph's
/// node offset, plus enough bookkeeping to take the union apart again.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphBatch {
    pub node_tokens: Vec<Vec<usize>>,
    pub node_roles: Vec<NodeRole>,
    /// Node index of each graph's first node (its headline).
    pub graph_offsets: Vec<usize>,
    /// Node index → graph index.
    pub graph_membership: Vec<usize>,
    /// Global `(headline, paragraph)` node-index pairs.
    pub edges: Vec<(usize, usize)>,
    pub edge_congruity: Vec<u8>,
    pub doc_labels: Vec<u8>,
}

impl GraphBatch {
    pub fn num_graphs(&self) -> usize {
        self.graph_offsets.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_tokens.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Global node indices of one graph's paragraph nodes, in storage
    /// order, paired with their article positions.
    pub fn paragraph_nodes(&self, graph: usize) -> Vec<(usize, usize)> {
        let start = self.graph_offsets[graph];
        let end = if graph + 1 < self.graph_offsets.len() {
            self.graph_offsets[graph + 1]
        } else {
            self.num_nodes()
        };
        (start..end)
            .filter_map(|n| match self.node_roles[n] {
                NodeRole::Paragraph { position } => Some((n, position)),
                NodeRole::Headline => None,
            })
            .collect()
    }
}

/// Concatenate graphs into one disjoint union. Order is preserved.
pub fn batch_graphs(graphs: &[NewsGraph]) -> Result<GraphBatch> {
    if graphs.is_empty() {
        return Err(Error::EmptyInput { what: "graph batch" });
    }
    let mut batch = GraphBatch {
        node_tokens: Vec::new(),
        node_roles: Vec::new(),
        graph_offsets: Vec::with_capacity(graphs.len()),
        graph_membership: Vec::new(),
        edges: Vec::new(),
        edge_congruity: Vec::new(),
        doc_labels: Vec::with_capacity(graphs.len()),
    };
    for (g, graph) in graphs.iter().enumerate() {
        let offset = batch.node_tokens.len();
        batch.graph_offsets.push(offset);
        batch.node_tokens.push(graph.headline_ids.clone());
        batch.node_roles.push(NodeRole::Headline);
        batch.graph_membership.push(g);
        for (i, ids) in graph.paragraph_ids.iter().enumerate() {
            batch.node_tokens.push(ids.clone());
            batch.node_roles.push(NodeRole::Paragraph {
                position: graph.paragraph_positions[i],
            });
            batch.graph_membership.push(g);
        }
        for &(h, p) in &graph.edges {
            batch.edges.push((h + offset, p + offset));
        }
        batch.edge_congruity.extend_from_slice(&graph.edge_congruity);
        batch.doc_labels.push(graph.doc_label);
    }
    Ok(batch)
}

/// Invert [`batch_graphs`], reproducing the original sequence exactly.
pub fn unbatch(batch: &GraphBatch) -> Vec<NewsGraph> {
    let mut graphs = Vec::with_capacity(batch.num_graphs());
    let mut edge_cursor = 0usize;
    for g in 0..batch.num_graphs() {
        let start = batch.graph_offsets[g];
        let end = if g + 1 < batch.num_graphs() {
            batch.graph_offsets[g + 1]
        } else {
            batch.num_nodes()
        };
        let k = end - start - 1;
        let mut paragraph_ids = Vec::with_capacity(k);
        let mut paragraph_positions = Vec::with_capacity(k);
        for n in start + 1..end {
            paragraph_ids.push(batch.node_tokens[n].clone());
            match batch.node_roles[n] {
                NodeRole::Paragraph { position } => paragraph_positions.push(position),
                NodeRole::Headline => unreachable!("headline only at graph offset"),
            }
        }
        graphs.push(NewsGraph {
            headline_ids: batch.node_tokens[start].clone(),
            paragraph_ids,
            paragraph_positions,
            edges: (0..k).map(|i| (0, i + 1)).collect(),
            edge_congruity: batch.edge_congruity[edge_cursor..edge_cursor + k].to_vec(),
            doc_label: batch.doc_labels[g],
        });
        edge_cursor += k;
    }
    graphs
}
