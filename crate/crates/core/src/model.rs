//! The incongruity network: hierarchical text encoders feeding an
//! edge-weighted graph convolution and a fusion classifier.
//!
//! Per batch the forward pass composes five stages on one autodiff tape:
//!
//! 1. A single shared word-level GRU encodes every node's token sequence
//!    (headline and paragraphs alike) into a fixed vector.
//! 2. Per graph, a bidirectional GRU re-reads the paragraph vectors in
//!    article order, giving each paragraph context from its neighbours.
//! 3. An edge scorer turns each (headline, paragraph) pair into a weight
//!    in (0,1) — trained to be high for congruent paragraphs.
//! 4. Three graph-convolution layers propagate node features over the
//!    weighted star adjacency with self-loops and symmetric degree
//!    normalization.
//! 5. A gated fusion of the headline node (local) with the mean readout
//!    (global) feeds a small fully-connected head ending in a logistic
//!    document incongruity probability.
//!
//! The GRU follows the usual fused-gate convention: with gate order
//! (reset, update, candidate) in the columns of `w_x`/`w_h`,
//!
//! ```text
//! r  = σ(x·W_ir + b_ir + h·W_hr + b_hr)
//! z  = σ(x·W_iz + b_iz + h·W_hz + b_hz)
//! n  = tanh(x·W_in + b_in + r ⊙ (h·W_hn + b_hn))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{GraphBatch, DEFAULT_TOKEN_CAP};
use crate::textenc::{EmbeddingTable, PAD_INDEX};

/// Learned edge weights are floored at this value inside the adjacency so
/// degree normalization never divides by zero.
pub const EDGE_WEIGHT_FLOOR: f64 = 1e-6;

/// Architecture hyperparameters. Defaults follow the reference setup:
/// 300-d frozen embeddings, a 200-unit word GRU, a bidirectional paragraph
/// GRU with 100 units per direction, three 200-unit graph-convolution
/// layers, a 200-unit edge scorer, fully-connected widths [200, 200, 100],
/// and an edge-loss tradeoff of 0.1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub word_gru_hidden: usize,
    pub para_bigru_hidden: usize,
    pub gnn_layers: usize,
    pub gnn_hidden: usize,
    pub fc_dims: Vec<usize>,
    pub edge_scorer_hidden: usize,
    pub edge_loss_weight: f64,
    /// Dropout rate on the fully-connected hidden activations during
    /// training; 0 disables it.
    pub dropout: f64,
    /// Per-node token budget carried into graph construction.
    pub token_cap: usize,
    /// Encode headlines with their own GRU instead of the shared one.
    pub separate_headline_encoder: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 300,
            word_gru_hidden: 200,
            para_bigru_hidden: 100,
            gnn_layers: 3,
            gnn_hidden: 200,
            fc_dims: vec![200, 200, 100],
            edge_scorer_hidden: 200,
            edge_loss_weight: 0.1,
            dropout: 0.0,
            token_cap: DEFAULT_TOKEN_CAP,
            separate_headline_encoder: false,
        }
    }
}

impl ModelConfig {
    /// A deliberately tiny configuration for finite-difference gradient
    /// checks and fast structural tests.
    pub fn micro() -> Self {
        ModelConfig {
            embed_dim: 4,
            word_gru_hidden: 6,
            para_bigru_hidden: 3,
            gnn_layers: 2,
            gnn_hidden: 6,
            fc_dims: vec![5, 4, 3],
            edge_scorer_hidden: 4,
            edge_loss_weight: 0.1,
            dropout: 0.0,
            token_cap: 16,
            separate_headline_encoder: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("word_gru_hidden", self.word_gru_hidden),
            ("para_bigru_hidden", self.para_bigru_hidden),
            ("gnn_layers", self.gnn_layers),
            ("gnn_hidden", self.gnn_hidden),
            ("edge_scorer_hidden", self.edge_scorer_hidden),
            ("token_cap", self.token_cap),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::InvalidConfig {
                    msg: format!("{name} must be positive"),
                });
            }
        }
        if self.fc_dims.is_empty() || self.fc_dims.contains(&0) {
            return Err(Error::InvalidConfig {
                msg: "fc_dims must be a non-empty list of positive widths".into(),
            });
        }
        // Headline nodes carry word-encoder outputs and paragraph nodes
        // carry bidirectional concatenations; they share one feature space.
        if self.word_gru_hidden != 2 * self.para_bigru_hidden {
            return Err(Error::InvalidConfig {
                msg: format!(
                    "word_gru_hidden ({}) must equal 2 × para_bigru_hidden ({}) so headline \
                     and paragraph node features have the same dimension",
                    self.word_gru_hidden, self.para_bigru_hidden
                ),
            });
        }
        if self.edge_loss_weight < 0.0 {
            return Err(Error::InvalidConfig {
                msg: "edge_loss_weight must be non-negative".into(),
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig {
                msg: "dropout must lie in [0, 1)".into(),
            });
        }
        Ok(())
    }
}

/// One named parameter matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub value: Array2<f64>,
}

/// All trainable parameters, in a fixed declaration order. The frozen
/// embedding table lives outside (see `textenc`) and is never updated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    tensors: Vec<Tensor>,
}

/// Shapes of every parameter group for a configuration, in declaration
/// order. The graph-convolution input equals the node feature width.
fn parameter_shapes(config: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let mut shapes = Vec::new();
    let h = config.word_gru_hidden;
    let pb = config.para_bigru_hidden;
    let gru = |prefix: &str, input: usize, hidden: usize, out: &mut Vec<_>| {
        out.push((format!("{prefix}.w_x"), (input, 3 * hidden)));
        out.push((format!("{prefix}.w_h"), (hidden, 3 * hidden)));
        out.push((format!("{prefix}.b_x"), (1, 3 * hidden)));
        out.push((format!("{prefix}.b_h"), (1, 3 * hidden)));
    };
    gru("word_gru", config.embed_dim, h, &mut shapes);
    if config.separate_headline_encoder {
        gru("headline_gru", config.embed_dim, h, &mut shapes);
    }
    gru("para_fwd", h, pb, &mut shapes);
    gru("para_bwd", h, pb, &mut shapes);

    shapes.push(("edge_scorer.w".into(), (4 * h, config.edge_scorer_hidden)));
    shapes.push(("edge_scorer.b".into(), (1, config.edge_scorer_hidden)));
    shapes.push(("edge_scorer.v".into(), (config.edge_scorer_hidden, 1)));

    let mut dim = h;
    for layer in 0..config.gnn_layers {
        shapes.push((format!("gcn.{layer}.w"), (dim, config.gnn_hidden)));
        shapes.push((format!("gcn.{layer}.b"), (1, config.gnn_hidden)));
        dim = config.gnn_hidden;
    }

    shapes.push(("fusion.w".into(), (2 * config.gnn_hidden, config.gnn_hidden)));
    shapes.push(("fusion.b".into(), (1, config.gnn_hidden)));

    let mut fc_in = config.gnn_hidden;
    for (i, &width) in config.fc_dims.iter().enumerate() {
        shapes.push((format!("fc.{i}.w"), (fc_in, width)));
        shapes.push((format!("fc.{i}.b"), (1, width)));
        fc_in = width;
    }
    shapes.push(("out.w".into(), (fc_in, 1)));
    shapes.push(("out.b".into(), (1, 1)));
    shapes
}

impl ModelParams {
    /// Xavier-uniform weights (zero biases) under a seeded generator.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = parameter_shapes(config)
            .into_iter()
            .map(|(name, (rows, cols))| {
                let value = if name.ends_with(".b") || name.contains(".b_") {
                    Array2::zeros((rows, cols))
                } else {
                    let bound = (6.0 / (rows + cols) as f64).sqrt();
                    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
                };
                Tensor { name, value }
            })
            .collect();
        Ok(ModelParams { tensors })
    }

    /// All-zero parameters; useful for closed-form tests.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = parameter_shapes(config)
            .into_iter()
            .map(|(name, shape)| Tensor {
                name,
                value: Array2::zeros(shape),
            })
            .collect();
        Ok(ModelParams { tensors })
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn index_of(&self, name: &str) -> usize {
        self.tensors
            .iter()
            .position(|t| t.name == name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        &self.tensors[self.index_of(name)].value
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        let idx = self.index_of(name);
        &mut self.tensors[idx].value
    }

    /// Number of trainable scalars (embeddings excluded).
    pub fn count_params(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    /// Name and shape of every tensor, in order.
    pub fn manifest(&self) -> Vec<(String, (usize, usize))> {
        self.tensors
            .iter()
            .map(|t| (t.name.clone(), t.value.dim()))
            .collect()
    }
}

/// Model outputs as plain values, detached from the tape.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// One document incongruity probability per graph, in batch order.
    pub doc_probs: Vec<f64>,
    /// One congruity weight per edge, in batch edge order.
    pub edge_weights: Vec<f64>,
    /// Final node representations after propagation.
    pub node_features: Array2<f64>,
}

/// A live forward computation: outputs as tape variables, ready for
/// [`Tape::backward`], plus the tape handle of every parameter tensor in
/// `ModelParams` order.
pub struct ForwardPass {
    pub tape: Tape,
    pub doc_probs: Var,
    pub edge_weights: Var,
    pub node_features: Var,
    pub param_vars: Vec<Var>,
}

/// Parameter tensors staged on a tape, addressable by name.
struct Staged<'p> {
    params: &'p ModelParams,
    vars: Vec<Var>,
}

impl<'p> Staged<'p> {
    fn new(tape: &mut Tape, params: &'p ModelParams) -> Self {
        let vars = params
            .tensors()
            .iter()
            .map(|t| tape.param(t.value.clone()))
            .collect();
        Staged { params, vars }
    }

    fn var(&self, name: &str) -> Var {
        self.vars[self.params.index_of(name)]
    }

    fn gru(&self, prefix: &str, hidden: usize) -> GruVars {
        GruVars {
            w_x: self.var(&format!("{prefix}.w_x")),
            w_h: self.var(&format!("{prefix}.w_h")),
            b_x: self.var(&format!("{prefix}.b_x")),
            b_h: self.var(&format!("{prefix}.b_h")),
            hidden,
        }
    }
}

struct GruVars {
    w_x: Var,
    w_h: Var,
    b_x: Var,
    b_h: Var,
    hidden: usize,
}

/// One step of the gated recurrence for a stack of sequences: `x` is
/// `(a × input)`, `h` is `(a × hidden)`; returns the next `(a × hidden)`.
fn gru_cell(tape: &mut Tape, x: Var, h: Var, g: &GruVars) -> Var {
    let n = g.hidden;
    let gx = tape.matmul(x, g.w_x);
    let gx = tape.add_row(gx, g.b_x);
    let gh = tape.matmul(h, g.w_h);
    let gh = tape.add_row(gh, g.b_h);

    let gx_r = tape.slice_cols(gx, 0, n);
    let gh_r = tape.slice_cols(gh, 0, n);
    let pre_r = tape.add(gx_r, gh_r);
    let r = tape.sigmoid(pre_r);

    let gx_z = tape.slice_cols(gx, n, 2 * n);
    let gh_z = tape.slice_cols(gh, n, 2 * n);
    let pre_z = tape.add(gx_z, gh_z);
    let z = tape.sigmoid(pre_z);

    let gx_n = tape.slice_cols(gx, 2 * n, 3 * n);
    let gh_n = tape.slice_cols(gh, 2 * n, 3 * n);
    let gated = tape.mul(r, gh_n);
    let pre_n = tape.add(gx_n, gated);
    let cand = tape.tanh(pre_n);

    let keep = tape.mul(z, h);
    let one_minus_z = tape.affine(z, -1.0, 1.0);
    let take = tape.mul(one_minus_z, cand);
    tape.add(take, keep)
}

/// Encode many variable-length sequences with one GRU in lock-step.
///
/// Sequences are processed sorted by length (descending) so each time step
/// runs a single matrix product over the still-active prefix; final hidden
/// states are collected as sequences finish and un-sorted at the end.
/// Returns an `(S × hidden)` matrix in the input order.
fn encode_sequences(tape: &mut Tape, emb: Var, seqs: &[&[usize]], g: &GruVars) -> Var {
    assert!(!seqs.is_empty(), "encode_sequences needs at least one sequence");
    assert!(seqs.iter().all(|s| !s.is_empty()), "sequences must be non-empty");
    let s = seqs.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(seqs[i].len()));
    let lens: Vec<usize> = order.iter().map(|&i| seqs[i].len()).collect();

    let mut h = tape.constant(Array2::zeros((s, g.hidden)));
    let mut finished: Vec<(usize, Var)> = Vec::new();
    let mut active = s;
    // `t` is a time step across *all* sequences, not an index into one.
    #[allow(clippy::needless_range_loop)]
    for t in 0..lens[0] {
        let still_active = lens.iter().take_while(|&&l| l > t).count();
        if still_active < active {
            // Rows still_active..active hold final states of sequences of
            // length exactly t.
            let done = tape.gather_rows(h, (still_active..active).collect());
            finished.push((still_active, done));
            h = tape.gather_rows(h, (0..still_active).collect());
            active = still_active;
        }
        let ids: Vec<usize> = (0..active).map(|j| seqs[order[j]][t]).collect();
        let x = tape.gather_rows(emb, ids);
        h = gru_cell(tape, x, h, g);
    }
    finished.push((0, h));
    finished.sort_by_key(|&(start, _)| start);

    let blocks: Vec<Var> = finished.into_iter().map(|(_, v)| v).collect();
    let sorted_finals = tape.concat_rows(&blocks);
    // Row j of sorted_finals belongs to original sequence order[j].
    let mut sorted_pos = vec![0usize; s];
    for (j, &i) in order.iter().enumerate() {
        sorted_pos[i] = j;
    }
    tape.gather_rows(sorted_finals, sorted_pos)
}

/// Bidirectional pass over a `(k × input)` sequence; row `t` of the result
/// concatenates the forward state after step `t` with the backward state
/// after reading from the end down to `t`. Output is `(k × 2·hidden)`.
fn bigru_block(tape: &mut Tape, seq: Var, fwd: &GruVars, bwd: &GruVars) -> Var {
    let k = tape.value(seq).nrows();
    let run = |tape: &mut Tape, g: &GruVars, order: Vec<usize>| -> Vec<Var> {
        let mut h = tape.constant(Array2::zeros((1, g.hidden)));
        let mut states = Vec::with_capacity(k);
        for &t in &order {
            let x = tape.gather_rows(seq, vec![t]);
            h = gru_cell(tape, x, h, g);
            states.push(h);
        }
        states
    };
    let fwd_states = run(tape, fwd, (0..k).collect());
    let mut bwd_states = run(tape, bwd, (0..k).rev().collect());
    bwd_states.reverse();

    let fwd_stack = tape.concat_rows(&fwd_states);
    let bwd_stack = tape.concat_rows(&bwd_states);
    tape.concat_cols(&[fwd_stack, bwd_stack])
}

/// Edge weights from matched (headline, paragraph) feature rows, both
/// `(E × d)`: `σ(relu([h; p; h⊙p; |h−p|]·W + b)·v)`.
fn edge_scores_block(tape: &mut Tape, h_rows: Var, p_rows: Var, staged: &Staged) -> Var {
    let prod = tape.mul(h_rows, p_rows);
    let diff = tape.sub(h_rows, p_rows);
    let dist = tape.abs(diff);
    let feats = tape.concat_cols(&[h_rows, p_rows, prod, dist]);
    let pre = tape.matmul(feats, staged.var("edge_scorer.w"));
    let pre = tape.add_row(pre, staged.var("edge_scorer.b"));
    let hidden = tape.relu(pre);
    let logits = tape.matmul(hidden, staged.var("edge_scorer.v"));
    tape.sigmoid(logits)
}

/// Weighted graph convolution: floor the edge weights, scatter them into a
/// symmetric adjacency with unit self-loops, normalize by inverse
/// square-root degree on both sides, then apply the configured number of
/// `relu(Â·H·W + b)` layers.
fn propagate_block(
    tape: &mut Tape,
    mut feats: Var,
    edges: &[(usize, usize)],
    weights: Var,
    staged: &Staged,
    layers: usize,
    n: usize,
) -> Var {
    let floored = tape.clamp_min(weights, EDGE_WEIGHT_FLOOR);
    let coords: Vec<(usize, usize, usize)> = edges
        .iter()
        .enumerate()
        .flat_map(|(e, &(a, b))| [(a, b, e), (b, a, e)])
        .collect();
    let scattered = tape.scatter_entries(floored, coords, n);
    let eye = tape.constant(Array2::eye(n));
    let adjacency = tape.add(scattered, eye);
    let degree = tape.row_sum(adjacency);
    let inv_sqrt = tape.rsqrt(degree);
    let inv_sqrt_t = tape.transpose(inv_sqrt);
    let outer = tape.matmul(inv_sqrt, inv_sqrt_t);
    let normalized = tape.mul(outer, adjacency);

    for layer in 0..layers {
        let agg = tape.matmul(normalized, feats);
        let lin = tape.matmul(agg, staged.var(&format!("gcn.{layer}.w")));
        let lin = tape.add_row(lin, staged.var(&format!("gcn.{layer}.b")));
        feats = tape.relu(lin);
    }
    feats
}

/// Gate the headline-node row (local) against the mean readout (global),
/// then run the fully-connected head down to one logistic output per graph.
#[allow(clippy::too_many_arguments)]
fn fusion_block(
    tape: &mut Tape,
    node_feats: Var,
    readout: Var,
    headline_nodes: Vec<usize>,
    staged: &Staged,
    fc_layers: usize,
    dropout: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Var {
    let local = tape.gather_rows(node_feats, headline_nodes);
    let global = tape.matmul(readout, node_feats);
    let gate_in = tape.concat_cols(&[local, global]);
    let pre = tape.matmul(gate_in, staged.var("fusion.w"));
    let pre = tape.add_row(pre, staged.var("fusion.b"));
    let gate = tape.sigmoid(pre);
    let keep_local = tape.mul(gate, local);
    let inv_gate = tape.affine(gate, -1.0, 1.0);
    let keep_global = tape.mul(inv_gate, global);
    let mut x = tape.add(keep_local, keep_global);

    let mut rng = rng;
    for i in 0..fc_layers {
        let lin = tape.matmul(x, staged.var(&format!("fc.{i}.w")));
        let lin = tape.add_row(lin, staged.var(&format!("fc.{i}.b")));
        x = tape.relu(lin);
        if dropout > 0.0 {
            if let Some(r) = rng.as_deref_mut() {
                // Inverted dropout: zero with probability `dropout`, scale
                // the survivors so the expectation is unchanged.
                let scale = 1.0 / (1.0 - dropout);
                let mask = Array2::from_shape_fn(tape.value(x).dim(), |_| {
                    if r.gen_bool(dropout) {
                        0.0
                    } else {
                        scale
                    }
                });
                let mask = tape.constant(mask);
                x = tape.mul(x, mask);
            }
        }
    }
    let logits = tape.matmul(x, staged.var("out.w"));
    let logits = tape.add_row(logits, staged.var("out.b"));
    tape.sigmoid(logits)
}

/// Run the full network over a batch, keeping the tape alive for a
/// backward pass. `dropout_rng` enables dropout (training mode); pass
/// `None` for deterministic inference.
pub fn forward_pass(
    params: &ModelParams,
    embeddings: &EmbeddingTable,
    batch: &GraphBatch,
    config: &ModelConfig,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardPass> {
    if embeddings.dim() != config.embed_dim {
        return Err(Error::ShapeMismatch {
            msg: format!(
                "embedding table is {}-d but the configuration says {}",
                embeddings.dim(),
                config.embed_dim
            ),
        });
    }
    let mut tape = Tape::new();
    let staged = Staged::new(&mut tape, params);
    let emb = tape.constant(embeddings.matrix.clone());

    // 1. Word-level encoding of every node's token payload.
    let word_gru = staged.gru("word_gru", config.word_gru_hidden);
    let word_feats = if config.separate_headline_encoder {
        let headline_gru = staged.gru("headline_gru", config.word_gru_hidden);
        encode_split(&mut tape, emb, batch, &word_gru, &headline_gru)
    } else {
        let seqs: Vec<&[usize]> = batch.node_tokens.iter().map(|v| v.as_slice()).collect();
        encode_sequences(&mut tape, emb, &seqs, &word_gru)
    };

    // 2. Contextualize each graph's paragraphs in article order, then lay
    //    node features out in node-storage order.
    let para_fwd = staged.gru("para_fwd", config.para_bigru_hidden);
    let para_bwd = staged.gru("para_bwd", config.para_bigru_hidden);
    let mut per_graph_feats = Vec::with_capacity(batch.num_graphs());
    for g in 0..batch.num_graphs() {
        let headline_node = batch.graph_offsets[g];
        let paragraphs = batch.paragraph_nodes(g);
        // Article order: sort the (node, position) pairs by position.
        let mut by_position = paragraphs.clone();
        by_position.sort_by_key(|&(_, position)| position);
        let ordered_nodes: Vec<usize> = by_position.iter().map(|&(n, _)| n).collect();
        let seq = tape.gather_rows(word_feats, ordered_nodes);
        let ctx = bigru_block(&mut tape, seq, &para_fwd, &para_bwd);
        // Back to storage order: the paragraph stored at slot i sits at
        // row `rank of its position` in the contextualized stack.
        let storage_rows: Vec<usize> = paragraphs
            .iter()
            .map(|&(_, position)| by_position.iter().position(|&(_, p)| p == position).unwrap())
            .collect();
        let ctx_storage = tape.gather_rows(ctx, storage_rows);
        let head_row = tape.gather_rows(word_feats, vec![headline_node]);
        per_graph_feats.push(tape.concat_rows(&[head_row, ctx_storage]));
    }
    let node_feats = tape.concat_rows(&per_graph_feats);

    // 3. Edge weights from matched headline/paragraph feature rows.
    let h_rows = tape.gather_rows(node_feats, batch.edges.iter().map(|&(h, _)| h).collect());
    let p_rows = tape.gather_rows(node_feats, batch.edges.iter().map(|&(_, p)| p).collect());
    let edge_weights = edge_scores_block(&mut tape, h_rows, p_rows, &staged);

    // 4. Propagation over the weighted disjoint-union adjacency.
    let propagated = propagate_block(
        &mut tape,
        node_feats,
        &batch.edges,
        edge_weights,
        &staged,
        config.gnn_layers,
        batch.num_nodes(),
    );

    // 5. Per-graph readout and classification.
    let mut readout = Array2::zeros((batch.num_graphs(), batch.num_nodes()));
    for (node, &g) in batch.graph_membership.iter().enumerate() {
        readout[[g, node]] = 1.0;
    }
    for g in 0..batch.num_graphs() {
        let size = batch.graph_membership.iter().filter(|&&m| m == g).count() as f64;
        readout.row_mut(g).mapv_inplace(|v| v / size);
    }
    let readout = tape.constant(readout);
    let doc_probs = fusion_block(
        &mut tape,
        propagated,
        readout,
        batch.graph_offsets.clone(),
        &staged,
        config.fc_dims.len(),
        config.dropout,
        dropout_rng,
    );

    Ok(ForwardPass {
        tape,
        doc_probs,
        edge_weights,
        node_features: propagated,
        param_vars: staged.vars,
    })
}

/// Encode headline and paragraph sequences with separate recurrent
/// weights, then interleave the results back into node order.
fn encode_split(
    tape: &mut Tape,
    emb: Var,
    batch: &GraphBatch,
    word_gru: &GruVars,
    headline_gru: &GruVars,
) -> Var {
    use crate::graph::NodeRole;
    let mut head_seqs: Vec<&[usize]> = Vec::new();
    let mut para_seqs: Vec<&[usize]> = Vec::new();
    let mut slot = Vec::with_capacity(batch.num_nodes());
    for (tokens, role) in batch.node_tokens.iter().zip(&batch.node_roles) {
        match role {
            NodeRole::Headline => {
                slot.push(head_seqs.len());
                head_seqs.push(tokens);
            }
            NodeRole::Paragraph { .. } => {
                slot.push(para_seqs.len());
                para_seqs.push(tokens);
            }
        }
    }
    let head_feats = encode_sequences(tape, emb, &head_seqs, headline_gru);
    let para_feats = encode_sequences(tape, emb, &para_seqs, word_gru);
    let stacked = tape.concat_rows(&[head_feats, para_feats]);
    let indices = batch
        .node_roles
        .iter()
        .zip(&slot)
        .map(|(role, &s)| match role {
            NodeRole::Headline => s,
            NodeRole::Paragraph { .. } => head_seqs.len() + s,
        })
        .collect();
    tape.gather_rows(stacked, indices)
}

/// Inference-only forward: plain values, dropout off.
pub fn forward(
    params: &ModelParams,
    embeddings: &EmbeddingTable,
    batch: &GraphBatch,
    config: &ModelConfig,
) -> Result<ForwardOutput> {
    let pass = forward_pass(params, embeddings, batch, config, None)?;
    let doc_probs: Vec<f64> = pass.tape.value(pass.doc_probs).column(0).to_vec();
    let edge_weights: Vec<f64> = pass.tape.value(pass.edge_weights).column(0).to_vec();
    let node_features = pass.tape.value(pass.node_features).clone();
    debug_assert!(
        doc_probs.iter().chain(edge_weights.iter()).all(|v| v.is_finite())
            && node_features.iter().all(|v| v.is_finite()),
        "forward produced a non-finite value"
    );
    Ok(ForwardOutput {
        doc_probs,
        edge_weights,
        node_features,
    })
}

/// Encode one token sequence with the shared word-level GRU, returning the
/// final hidden state. Rejects empty and PAD-only input.
pub fn encode_words(
    token_ids: &[usize],
    params: &ModelParams,
    embeddings: &EmbeddingTable,
    config: &ModelConfig,
) -> Result<Vec<f64>> {
    if token_ids.is_empty() || token_ids.iter().all(|&id| id == PAD_INDEX) {
        return Err(Error::EmptyTokenSequence);
    }
    let mut tape = Tape::new();
    let staged = Staged::new(&mut tape, params);
    let emb = tape.constant(embeddings.matrix.clone());
    let gru = staged.gru("word_gru", config.word_gru_hidden);
    let out = encode_sequences(&mut tape, emb, &[token_ids], &gru);
    Ok(tape.value(out).row(0).to_vec())
}

/// Bidirectionally contextualize a `(k × word_gru_hidden)` stack of
/// paragraph vectors; row `i` of the result is the 2×-hidden concatenation
/// for paragraph `i`.
pub fn contextualize_paragraphs(
    para_vectors: &Array2<f64>,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Array2<f64>> {
    if para_vectors.nrows() == 0 {
        return Err(Error::EmptyInput {
            what: "paragraph sequence",
        });
    }
    if para_vectors.ncols() != config.word_gru_hidden {
        return Err(Error::ShapeMismatch {
            msg: format!(
                "paragraph vectors are {}-d, expected {}",
                para_vectors.ncols(),
                config.word_gru_hidden
            ),
        });
    }
    let mut tape = Tape::new();
    let staged = Staged::new(&mut tape, params);
    let seq = tape.constant(para_vectors.clone());
    let fwd = staged.gru("para_fwd", config.para_bigru_hidden);
    let bwd = staged.gru("para_bwd", config.para_bigru_hidden);
    let ctx = bigru_block(&mut tape, seq, &fwd, &bwd);
    Ok(tape.value(ctx).clone())
}

/// Score each paragraph row against one headline vector.
pub fn score_edges(
    headline: ArrayView1<'_, f64>,
    para_vectors: &Array2<f64>,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    if para_vectors.nrows() == 0 {
        return Err(Error::EmptyInput { what: "paragraphs" });
    }
    if headline.len() != para_vectors.ncols() {
        return Err(Error::ShapeMismatch {
            msg: format!(
                "headline is {}-d but paragraphs are {}-d",
                headline.len(),
                para_vectors.ncols()
            ),
        });
    }
    let mut tape = Tape::new();
    let staged = Staged::new(&mut tape, params);
    let k = para_vectors.nrows();
    let head = headline.insert_axis(ndarray::Axis(0)).to_owned();
    let head = tape.constant(head);
    let h_rows = tape.gather_rows(head, vec![0; k]);
    let p_rows = tape.constant(para_vectors.clone());
    let scores = edge_scores_block(&mut tape, h_rows, p_rows, &staged);
    Ok(tape.value(scores).column(0).to_vec())
}

/// Propagate node features over explicit edges and weights.
pub fn propagate(
    node_feats: &Array2<f64>,
    edges: &[(usize, usize)],
    edge_weights: &[f64],
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Array2<f64>> {
    if edges.len() != edge_weights.len() {
        return Err(Error::ShapeMismatch {
            msg: format!(
                "{} edges but {} weights",
                edges.len(),
                edge_weights.len()
            ),
        });
    }
    let n = node_feats.nrows();
    let mut tape = Tape::new();
    let staged = Staged::new(&mut tape, params);
    let feats = tape.constant(node_feats.clone());
    let weights = tape.constant(Array2::from_shape_fn((edge_weights.len(), 1), |(i, _)| {
        edge_weights[i]
    }));
    let out = propagate_block(&mut tape, feats, edges, weights, &staged, config.gnn_layers, n);
    Ok(tape.value(out).clone())
}

/// Fuse one graph's headline-node row with the mean over all of its node
/// rows and classify, returning the document probability.
pub fn fuse_and_classify(
    headline_row: ArrayView1<'_, f64>,
    all_nodes: &Array2<f64>,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<f64> {
    if all_nodes.nrows() == 0 {
        return Err(Error::EmptyInput { what: "graph nodes" });
    }
    let mut tape = Tape::new();
    let staged = Staged::new(&mut tape, params);
    let head = headline_row.insert_axis(ndarray::Axis(0)).to_owned();
    let stacked = ndarray::concatenate(
        ndarray::Axis(0),
        &[head.view(), all_nodes.view()],
    )
    .expect("dimensions agree");
    let n = all_nodes.nrows();
    let feats = tape.constant(stacked);
    let mut readout = Array2::zeros((1, n + 1));
    // Mean over the graph's own nodes (rows 1..), headline row 0 is local.
    for j in 1..=n {
        readout[[0, j]] = 1.0 / n as f64;
    }
    let readout = tape.constant(readout);
    let probs = fusion_block(
        &mut tape,
        feats,
        readout,
        vec![0],
        &staged,
        config.fc_dims.len(),
        0.0,
        None,
    );
    Ok(tape.scalar(probs))
}
