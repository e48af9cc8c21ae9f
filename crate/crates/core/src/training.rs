//! Joint optimization of the document and edge objectives.
//!
//! The loss is `L = BCE(doc) + λ·BCE(edge)` with mean reduction inside
//! each term. Optimization follows a fixed recipe: seeded shuffling,
//! mini-batches of 120 with the final partial batch kept, global-norm
//! gradient clipping at 1.0, and an adaptive-moment update whose learning
//! rate starts at 0.001 and shrinks tenfold every three epochs. After each
//! epoch the development split is scored; the returned parameters are from
//! the epoch with the best dev document accuracy (ties keep the earlier
//! epoch). A finite-difference gradient checker validates the analytic
//! gradients parameter-by-parameter on micro configurations.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::BCE_EPS;
use crate::error::{Error, Result};
use crate::evaluation::{collect_outputs, confusion_counts, paragraph_accuracy};
use crate::graph::{batch_graphs, GraphBatch, NewsGraph};
use crate::model::{forward, forward_pass, ForwardPass, ModelConfig, ModelParams};
use crate::textenc::EmbeddingTable;

/// Optimization hyperparameters. Defaults: learning rate 0.001 decayed
/// tenfold every 3 epochs, batches of 120, global-norm clip 1.0, moment
/// coefficients (0.9, 0.999), stability epsilon 1e−8, 9 epochs (three full
/// decay stages).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_decay_every: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
    /// Clamp each gradient element to ±grad_clip instead of scaling by the
    /// global norm.
    pub clip_per_element: bool,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.001,
            lr_decay_every: 3,
            batch_size: 120,
            grad_clip: 1.0,
            clip_per_element: false,
            epochs: 9,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 || self.grad_clip <= 0.0 || self.adam_eps <= 0.0 {
            return Err(Error::InvalidConfig {
                msg: "lr0, grad_clip and adam_eps must be positive".into(),
            });
        }
        if self.batch_size == 0 || self.epochs == 0 || self.lr_decay_every == 0 {
            return Err(Error::InvalidConfig {
                msg: "batch_size, epochs and lr_decay_every must be at least 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig {
                msg: "moment coefficients must lie in [0, 1)".into(),
            });
        }
        Ok(())
    }
}

/// Learning rate for a 0-based epoch: `lr0 × 10^(−floor(epoch/every))`.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    let stage = (epoch / config.lr_decay_every) as i32;
    config.lr0 / 10f64.powi(stage)
}

/// The joint loss and its two components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub total: f64,
    pub doc: f64,
    pub edge: f64,
}

fn bce_mean(probs: &[f64], labels: &[u8]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (&p, &l) in probs.iter().zip(labels) {
        let q = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        let t = f64::from(l);
        total -= t * q.ln() + (1.0 - t) * (1.0 - q).ln();
    }
    total / probs.len() as f64
}

/// `L = BCE(doc_probs, doc_labels) + λ·BCE(edge_weights, edge_congruity)`,
/// each term the mean over its own items.
pub fn total_loss(
    doc_probs: &[f64],
    doc_labels: &[u8],
    edge_weights: &[f64],
    edge_congruity: &[u8],
    lambda: f64,
) -> LossComponents {
    assert_eq!(doc_probs.len(), doc_labels.len(), "document shapes must align");
    assert_eq!(edge_weights.len(), edge_congruity.len(), "edge shapes must align");
    let doc = bce_mean(doc_probs, doc_labels);
    let edge = bce_mean(edge_weights, edge_congruity);
    LossComponents {
        total: doc + lambda * edge,
        doc,
        edge,
    }
}

/// Scale all gradients so their joint L2 norm is at most `max_norm`;
/// returns the pre-clip norm. A norm of exactly 5.0 against a threshold of
/// 1.0 scales every element by exactly 0.2.
pub fn clip_gradients(grads: &mut [Array2<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|v| v * scale);
        }
    }
    norm
}

/// Clamp every gradient element to `[−bound, bound]`.
pub fn clip_elements(grads: &mut [Array2<f64>], bound: f64) {
    for g in grads.iter_mut() {
        g.mapv_inplace(|v| v.clamp(-bound, bound));
    }
}

/// Adaptive-moment optimizer state, one moment pair per parameter tensor.
pub struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Array2<f64>> = params
            .tensors()
            .iter()
            .map(|t| Array2::zeros(t.value.dim()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of every tensor.
    pub fn step(
        &mut self,
        params: &mut ModelParams,
        grads: &[Array2<f64>],
        lr: f64,
        config: &TrainConfig,
    ) {
        self.t += 1;
        let b1 = config.beta1;
        let b2 = config.beta2;
        let bias1 = 1.0 - b1.powi(self.t as i32);
        let bias2 = 1.0 - b2.powi(self.t as i32);
        for ((tensor, grad), (m, v)) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut tensor.value)
                .and(grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *w -= lr * m_hat / (v_hat.sqrt() + config.adam_eps);
                });
        }
    }
}

/// One completed epoch's record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    pub train_loss: f64,
    pub train_doc_loss: f64,
    pub train_edge_loss: f64,
    pub val_loss: f64,
    pub val_doc_acc: f64,
    pub val_para_acc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// Write the history as line-delimited JSON, one epoch per line.
pub fn write_history(path: impl AsRef<Path>, history: &TrainHistory) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    for epoch in &history.epochs {
        let line = serde_json::to_string(epoch).expect("epoch stats serialize");
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Final parameters (best dev document accuracy) plus the full run record.
pub struct TrainedModel {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub best_epoch: usize,
    pub best_dev_acc: f64,
}

/// Attach the joint loss to a finished forward pass.
fn loss_on_tape(pass: &mut ForwardPass, batch: &GraphBatch, lambda: f64) -> crate::autodiff::Var {
    let doc_targets =
        Array2::from_shape_fn((batch.num_graphs(), 1), |(g, _)| f64::from(batch.doc_labels[g]));
    let edge_targets = Array2::from_shape_fn((batch.num_edges(), 1), |(e, _)| {
        f64::from(batch.edge_congruity[e])
    });
    let doc_bce = pass.tape.bce_mean(pass.doc_probs, doc_targets);
    let edge_bce = pass.tape.bce_mean(pass.edge_weights, edge_targets);
    let scaled = pass.tape.scale(edge_bce, lambda);
    pass.tape.add(doc_bce, scaled)
}

/// Gradients per parameter tensor, in `ModelParams` order; tensors the
/// loss does not reach get zeros.
fn tensor_gradients(pass: &ForwardPass, params: &ModelParams, loss: crate::autodiff::Var) -> Vec<Array2<f64>> {
    let grads = pass.tape.backward(loss);
    pass.param_vars
        .iter()
        .zip(params.tensors())
        .map(|(&var, tensor)| {
            grads
                .wrt(var)
                .cloned()
                .unwrap_or_else(|| Array2::zeros(tensor.value.dim()))
        })
        .collect()
}

/// Train on pre-built graphs. The vocabulary and embeddings are inputs:
/// this function never sees raw text, so dev/test text can never leak into
/// them. Returns the parameters from the best-dev-accuracy epoch.
pub fn train(
    train_graphs: &[NewsGraph],
    dev_graphs: &[NewsGraph],
    init_params: ModelParams,
    embeddings: &EmbeddingTable,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainedModel> {
    train_config.validate()?;
    model_config.validate()?;
    if train_graphs.is_empty() {
        return Err(Error::EmptyInput { what: "training split" });
    }
    if dev_graphs.is_empty() {
        return Err(Error::EmptyInput { what: "development split" });
    }

    let lambda = model_config.edge_loss_weight;
    let mut params = init_params;
    let mut adam = AdamState::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    dropout_rng.set_stream(1);

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 0..train_config.epochs {
        let started = Instant::now();
        let lr = lr_at(epoch, train_config);
        let mut order: Vec<usize> = (0..train_graphs.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut weighted_loss = 0.0;
        let mut weighted_doc = 0.0;
        let mut weighted_edge = 0.0;
        let mut steps = 0usize;
        for (batch_idx, chunk) in order.chunks(train_config.batch_size).enumerate() {
            let graphs: Vec<NewsGraph> =
                chunk.iter().map(|&i| train_graphs[i].clone()).collect();
            let batch = batch_graphs(&graphs)?;
            let mut pass = forward_pass(
                &params,
                embeddings,
                &batch,
                model_config,
                Some(&mut dropout_rng),
            )?;
            let loss = loss_on_tape(&mut pass, &batch, lambda);
            let loss_value = pass.tape.scalar(loss);
            if !loss_value.is_finite() {
                return Err(Error::TrainingAborted {
                    epoch,
                    batch: batch_idx,
                });
            }
            let mut grads = tensor_gradients(&pass, &params, loss);
            if train_config.clip_per_element {
                clip_elements(&mut grads, train_config.grad_clip);
            } else {
                clip_gradients(&mut grads, train_config.grad_clip);
            }
            adam.step(&mut params, &grads, lr, train_config);
            steps += 1;

            let weight = chunk.len() as f64;
            weighted_loss += loss_value * weight;
            let doc_probs: Vec<f64> = pass.tape.value(pass.doc_probs).column(0).to_vec();
            let edge_weights: Vec<f64> = pass.tape.value(pass.edge_weights).column(0).to_vec();
            let parts = total_loss(
                &doc_probs,
                &batch.doc_labels,
                &edge_weights,
                &batch.edge_congruity,
                lambda,
            );
            weighted_doc += parts.doc * weight;
            weighted_edge += parts.edge * weight;
        }
        let n = train_graphs.len() as f64;

        let dev = collect_outputs(
            &params,
            embeddings,
            dev_graphs,
            model_config,
            train_config.batch_size,
        )?;
        let dev_loss = total_loss(
            &dev.doc_probs,
            &dev.doc_labels,
            &dev.edge_weights,
            &dev.edge_congruity,
            lambda,
        );
        let dev_acc = confusion_counts(&dev.doc_probs, &dev.doc_labels, 0.5)?.accuracy();
        let dev_para = paragraph_accuracy(&dev.edge_weights, &dev.edge_congruity)?;

        history.epochs.push(EpochStats {
            epoch,
            lr,
            steps,
            train_loss: weighted_loss / n,
            train_doc_loss: weighted_doc / n,
            train_edge_loss: weighted_edge / n,
            val_loss: dev_loss.total,
            val_doc_acc: dev_acc,
            val_para_acc: dev_para,
            seconds: started.elapsed().as_secs_f64(),
        });

        let improved = match &best {
            Some((acc, _, _)) => dev_acc > *acc,
            None => true,
        };
        if improved {
            best = Some((dev_acc, epoch, params.clone()));
        }
    }

    let (best_dev_acc, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(TrainedModel {
        params: best_params,
        history,
        best_epoch,
        best_dev_acc,
    })
}

/// Result of a finite-difference pass over every parameter.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Tensor name and flat element index of the worst disagreement.
    pub worst: (String, usize),
    pub elements_checked: usize,
}

/// Compare analytic gradients of the joint loss against central finite
/// differences (step 1e−5) for every parameter element. The error measure
/// is `|a − n| / max(|a|, |n|, 1e−3)` — relative where gradients are
/// sizeable, absolute (floored) where both are near zero so that
/// finite-difference noise cannot dominate.
pub fn check_gradients(
    params: &ModelParams,
    embeddings: &EmbeddingTable,
    batch: &GraphBatch,
    model_config: &ModelConfig,
    lambda: f64,
) -> Result<GradCheckReport> {
    let mut pass = forward_pass(params, embeddings, batch, model_config, None)?;
    let loss = loss_on_tape(&mut pass, batch, lambda);
    let analytic = tensor_gradients(&pass, params, loss);

    let loss_of = |p: &ModelParams| -> Result<f64> {
        let out = forward(p, embeddings, batch, model_config)?;
        Ok(total_loss(
            &out.doc_probs,
            &batch.doc_labels,
            &out.edge_weights,
            &batch.edge_congruity,
            lambda,
        )
        .total)
    };

    let h = 1e-5;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (String::new(), 0),
        elements_checked: 0,
    };
    for (t_idx, tensor) in params.tensors().iter().enumerate() {
        for flat in 0..tensor.value.len() {
            let mut shifted = params.clone();
            shifted.tensors_mut()[t_idx].value.as_slice_mut().unwrap()[flat] += h;
            let plus = loss_of(&shifted)?;
            shifted.tensors_mut()[t_idx].value.as_slice_mut().unwrap()[flat] -= 2.0 * h;
            let minus = loss_of(&shifted)?;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[t_idx].as_slice().unwrap()[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (tensor.name.clone(), flat);
            }
            report.elements_checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NewsGraph;
    use crate::model::ModelConfig;
    use crate::textenc::{random_embeddings, Vocabulary};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    /// Move zero-initialized biases to a generic point. Exact zeros can
    /// park a rectifier on its kink, where the loss is not differentiable
    /// and a finite-difference probe sees only one side.
    fn jitter_biases(params: &mut ModelParams, seed: u64) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for tensor in params.tensors_mut() {
            if tensor.name.ends_with(".b") || tensor.name.contains(".b_") {
                for v in tensor.value.iter_mut() {
                    *v += rng.gen_range(-0.05..0.05);
                }
            }
        }
    }

    fn micro_emb(seed: u64, dim: usize) -> EmbeddingTable {
        let mut tokens = vec![
            crate::textenc::PAD_TOKEN.to_string(),
            crate::textenc::OOV_TOKEN.to_string(),
        ];
        tokens.extend((0..12).map(|i| format!("w{i}")));
        random_embeddings(&Vocabulary::from_tokens(tokens, 1), dim, seed)
    }

    fn star(k: usize, labels: &[u8], token_base: usize) -> NewsGraph {
        NewsGraph {
            headline_ids: vec![token_base, token_base + 1],
            paragraph_ids: (0..k)
                .map(|i| vec![2 + (token_base + i) % 10, 2 + (token_base + i + 3) % 10])
                .collect(),
            paragraph_positions: (0..k).collect(),
            edges: (0..k).map(|i| (0, i + 1)).collect(),
            edge_congruity: labels.iter().map(|&l| 1 - l).collect(),
            doc_label: labels.iter().copied().max().unwrap(),
        }
    }

    fn micro_dataset(n: usize) -> Vec<NewsGraph> {
        (0..n)
            .map(|i| {
                let labels = if i % 2 == 0 { [0u8, 0] } else { [0, 1] };
                star(2, &labels, 2 + (i % 8))
            })
            .collect()
    }

    #[test]
    fn perfect_predictions_cost_almost_nothing() {
        let loss = total_loss(&[1.0, 0.0], &[1, 0], &[1.0, 0.0], &[1, 0], 0.1);
        assert!(loss.doc <= 1e-6);
        assert!(loss.edge <= 1e-6);
        assert!(loss.total <= 1e-6);
    }

    #[test]
    fn coin_flip_predictions_cost_ln_two() {
        let loss = total_loss(&[0.5, 0.5], &[1, 0], &[0.5; 3], &[1, 0, 1], 0.1);
        assert_abs_diff_eq!(loss.doc, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(loss.edge, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(
            loss.total,
            std::f64::consts::LN_2 * 1.1,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_lambda_leaves_doc_component_only() {
        let loss = total_loss(&[0.8], &[1], &[0.1, 0.2], &[1, 1], 0.0);
        assert_eq!(loss.total, loss.doc);
        assert!(loss.edge > 0.0);
    }

    #[test]
    fn learning_rate_decays_tenfold_every_three_epochs() {
        let config = TrainConfig::default();
        assert_eq!(lr_at(0, &config), 1e-3);
        assert_eq!(lr_at(2, &config), 1e-3);
        assert_eq!(lr_at(3, &config), 1e-4);
        assert_eq!(lr_at(5, &config), 1e-4);
        assert_eq!(lr_at(6, &config), 1e-5);
        assert_eq!(lr_at(8, &config), 1e-5);
    }

    #[test]
    fn norm_five_clips_to_exactly_one_fifth() {
        let mut grads = vec![array![[3.0]], array![[4.0]]];
        let norm = clip_gradients(&mut grads, 1.0);
        assert_eq!(norm, 5.0);
        assert_eq!(grads[0][[0, 0]], 3.0 * 0.2);
        assert_eq!(grads[1][[0, 0]], 4.0 * 0.2);
    }

    #[test]
    fn small_gradients_pass_unclipped() {
        let mut grads = vec![array![[0.3, -0.4]]];
        let norm = clip_gradients(&mut grads, 1.0);
        assert_eq!(norm, 0.5);
        assert_eq!(grads[0], array![[0.3, -0.4]]);
    }

    #[test]
    fn per_element_clipping_clamps_each_entry() {
        let mut grads = vec![array![[-2.0, 0.5, 1.5]]];
        clip_elements(&mut grads, 1.0);
        assert_eq!(grads[0], array![[-1.0, 0.5, 1.0]]);
    }

    #[test]
    fn adam_first_step_moves_by_roughly_the_learning_rate() {
        let config = ModelConfig::micro();
        let mut params = ModelParams::zeros(&config).unwrap();
        let train_config = TrainConfig::default();
        let mut adam = AdamState::new(&params);
        let grads: Vec<Array2<f64>> = params
            .tensors()
            .iter()
            .map(|t| Array2::from_elem(t.value.dim(), 4.0))
            .collect();
        adam.step(&mut params, &grads, 0.001, &train_config);
        // Bias correction makes the first update ≈ lr·sign(g).
        let w = params.get("out.w")[[0, 0]];
        assert_abs_diff_eq!(w, -0.001, epsilon = 1e-9);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn one_epoch_on_240_samples_takes_two_steps() {
        let config = ModelConfig::micro();
        let params = ModelParams::init(&config, 1).unwrap();
        let emb = micro_emb(2, config.embed_dim);
        let train_set = micro_dataset(240);
        let dev_set = micro_dataset(8);
        let train_config = TrainConfig {
            epochs: 1,
            seed: 3,
            ..TrainConfig::default()
        };
        let model = train(&train_set, &dev_set, params, &emb, &config, &train_config).unwrap();
        assert_eq!(model.history.epochs.len(), 1);
        assert_eq!(model.history.epochs[0].steps, 2);
    }

    #[test]
    fn same_seed_reproduces_first_epoch_loss() {
        let config = ModelConfig::micro();
        let emb = micro_emb(5, config.embed_dim);
        let train_set = micro_dataset(12);
        let dev_set = micro_dataset(6);
        let train_config = TrainConfig {
            epochs: 1,
            batch_size: 4,
            seed: 11,
            ..TrainConfig::default()
        };
        let run = || {
            let params = ModelParams::init(&config, 7).unwrap();
            train(&train_set, &dev_set, params, &emb, &config, &train_config)
                .unwrap()
                .history
                .epochs[0]
                .train_loss
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn recorded_learning_rates_follow_the_schedule() {
        let config = ModelConfig::micro();
        let params = ModelParams::init(&config, 1).unwrap();
        let emb = micro_emb(9, config.embed_dim);
        let train_set = micro_dataset(6);
        let dev_set = micro_dataset(4);
        let train_config = TrainConfig {
            epochs: 4,
            batch_size: 6,
            seed: 5,
            ..TrainConfig::default()
        };
        let model = train(&train_set, &dev_set, params, &emb, &config, &train_config).unwrap();
        for (epoch, stats) in model.history.epochs.iter().enumerate() {
            assert_eq!(stats.lr, lr_at(epoch, &train_config));
            assert_eq!(stats.epoch, epoch);
        }
    }

    #[test]
    fn non_finite_loss_aborts_with_location() {
        let config = ModelConfig::micro();
        let mut params = ModelParams::init(&config, 1).unwrap();
        params.get_mut("out.b")[[0, 0]] = f64::NAN;
        let emb = micro_emb(13, config.embed_dim);
        let train_set = micro_dataset(4);
        let dev_set = micro_dataset(4);
        let train_config = TrainConfig {
            epochs: 1,
            batch_size: 4,
            ..TrainConfig::default()
        };
        match train(&train_set, &dev_set, params, &emb, &config, &train_config) {
            Err(Error::TrainingAborted { epoch: 0, batch: 0 }) => {}
            Err(other) => panic!("expected abort at epoch 0 batch 0, got {other:?}"),
            Ok(_) => panic!("expected abort, but training succeeded"),
        }
    }

    #[test]
    fn best_epoch_parameters_are_returned() {
        let config = ModelConfig::micro();
        let params = ModelParams::init(&config, 2).unwrap();
        let emb = micro_emb(17, config.embed_dim);
        let train_set = micro_dataset(12);
        let dev_set = micro_dataset(8);
        let train_config = TrainConfig {
            epochs: 3,
            batch_size: 6,
            seed: 9,
            ..TrainConfig::default()
        };
        let model = train(&train_set, &dev_set, params, &emb, &config, &train_config).unwrap();
        let best = &model.history.epochs[model.best_epoch];
        assert_eq!(best.val_doc_acc, model.best_dev_acc);
        for stats in &model.history.epochs {
            assert!(stats.val_doc_acc <= model.best_dev_acc);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences_without_edge_loss() {
        let config = ModelConfig::micro();
        let mut params = ModelParams::init(&config, 21).unwrap();
        jitter_biases(&mut params, 22);
        let emb = micro_emb(23, config.embed_dim);
        let batch = batch_graphs(&[star(2, &[0, 1], 2), star(3, &[0, 0, 1], 4)]).unwrap();
        let report = check_gradients(&params, &emb, &batch, &config, 0.0).unwrap();
        assert!(
            report.max_rel_err <= 1e-4,
            "λ=0 max rel err {} at {:?}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn analytic_gradients_match_finite_differences_with_edge_loss() {
        let config = ModelConfig::micro();
        let mut params = ModelParams::init(&config, 25).unwrap();
        jitter_biases(&mut params, 26);
        let emb = micro_emb(27, config.embed_dim);
        let batch = batch_graphs(&[star(2, &[1, 0], 2), star(3, &[0, 1, 0], 5)]).unwrap();
        let report = check_gradients(&params, &emb, &batch, &config, 0.1).unwrap();
        assert!(
            report.max_rel_err <= 1e-4,
            "λ=0.1 max rel err {} at {:?}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn edge_gradient_at_zero_parameters_matches_closed_form() {
        // All-zero parameters force every edge weight to 0.5 and cut the
        // propagation path (zero layer weights), so the gradient at the
        // edge-weight node is λ·(p−t)/(p(1−p))/E = λ·(0.5−t)·4/E.
        let config = ModelConfig::micro();
        let params = ModelParams::zeros(&config).unwrap();
        let emb = micro_emb(31, config.embed_dim);
        let batch = batch_graphs(&[star(2, &[0, 1], 2)]).unwrap();
        let lambda = 0.1;
        let mut pass = forward_pass(&params, &emb, &batch, &config, None).unwrap();
        let loss = loss_on_tape(&mut pass, &batch, lambda);
        let grads = pass.tape.backward(loss);
        let edge_grad = grads.wrt(pass.edge_weights).unwrap();
        let e = batch.num_edges() as f64;
        for (i, &congruity) in batch.edge_congruity.iter().enumerate() {
            let expected = lambda * (0.5 - f64::from(congruity)) * 4.0 / e;
            assert_abs_diff_eq!(edge_grad[[i, 0]], expected, epsilon = 1e-12);
        }
    }
}
