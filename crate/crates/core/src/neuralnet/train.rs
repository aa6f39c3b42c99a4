//! Class-weighted cross-entropy, backpropagation through time, and the
//! adaptive-moment training loop. Training is deterministic given (seed,
//! config, data): initialization, shuffling, and dropout all derive from
//! the seed, and every reduction runs in a fixed order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DaselError, Result};
use crate::neuralnet::attention::attention_backward_batch;
use crate::neuralnet::gru::bigru_backward_batch;
use crate::neuralnet::model::{
    dropout_scale, forward_batch, DropoutCtx, Mode, ModelGrads, ModelParams, DENSE_UNITS,
    GRU2_UNITS,
};
use crate::neuralnet::tensor::{gemm_nt, gemm_tn, Slab};
use crate::sequencing::Sequence;

/// Training hyperparameters. The optimizer settings are conventional
/// defaults and are recorded in the run manifest.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Per-room loss weights. When empty, balanced weights are computed
    /// from the training data.
    pub class_weights: BTreeMap<String, f64>,
    /// Defaults to the model seed.
    pub shuffle_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            class_weights: BTreeMap::new(),
            shuffle_seed: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.adam_beta1 > 0.0
            && self.adam_beta1 < 1.0
            && self.adam_beta2 > 0.0
            && self.adam_beta2 < 1.0
            && self.adam_epsilon > 0.0
            && self.class_weights.values().all(|&w| w > 0.0);
        if ok {
            Ok(())
        } else {
            Err(DaselError::Contract("invalid training configuration".into()))
        }
    }
}

/// Balanced class weights: weight_c = N / (K * n_c).
pub fn class_weights(labels: &[&str]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    let n = labels.len() as f64;
    let k = counts.len() as f64;
    counts
        .into_iter()
        .map(|(room, c)| (room.to_string(), n / (k * c as f64)))
        .collect()
}

/// Mean class-weighted cross-entropy over the batch plus gradients for
/// every parameter tensor, via backpropagation through time respecting
/// masks. `weights` is indexed by class.
pub fn loss_and_grads(
    batch: &[(&Sequence, usize)],
    params: &ModelParams,
    weights: &[f64],
    dropout: Option<DropoutCtx>,
) -> Result<(f64, ModelGrads)> {
    let c = params.num_classes();
    if weights.len() != c {
        return Err(DaselError::Contract("class weight vector length mismatch".into()));
    }
    for &(_, y) in batch {
        if y >= c {
            return Err(DaselError::Contract(format!("class index {y} out of range")));
        }
    }
    let b = batch.len();
    let seqs: Vec<&Sequence> = batch.iter().map(|&(s, _)| s).collect();
    let (_, caches) = forward_batch(params, &seqs, Mode::Train, dropout, true)?;
    let caches = caches.expect("cache requested");
    let mut grads = ModelGrads::zeros(params);

    // Loss and dL/dlogits. The softmax is computed with max-subtracted
    // exponentials, which is the log-sum-exp guard for the -log p term.
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; b * c];
    for (i, &(_, y)) in batch.iter().enumerate() {
        let w = weights[y];
        let p = &caches.probs[i * c..(i + 1) * c];
        loss += w * -(p[y].max(f64::MIN_POSITIVE)).ln();
        let scale = w / b as f64;
        let drow = &mut dlogits[i * c..(i + 1) * c];
        for (j, d) in drow.iter_mut().enumerate() {
            *d = scale * (p[j] - if j == y { 1.0 } else { 0.0 });
        }
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(DaselError::Numerical {
            layer: "loss",
            msg: "non-finite loss".into(),
        });
    }

    // Output head.
    gemm_tn(DENSE_UNITS, b, c, 1.0, &caches.act, &dlogits, 1.0, grads.out_w.data_mut());
    for row in dlogits.chunks_exact(c) {
        for (acc, v) in grads.out_b.data_mut().iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut dact = vec![0.0; b * DENSE_UNITS];
    gemm_nt(b, c, DENSE_UNITS, 1.0, &dlogits, params.out_w.data(), 0.0, &mut dact);

    // Dense layer: dropout, then ReLU, then the linear map.
    if let Some(ctx) = caches.dropout {
        for bi in 0..b {
            for j in 0..DENSE_UNITS {
                dact[bi * DENSE_UNITS + j] *=
                    dropout_scale(ctx, 2, bi as u64, 0, j as u64, params.dropout_rates[2]);
            }
        }
    }
    for (d, &pre) in dact.iter_mut().zip(&caches.dense_pre) {
        if pre <= 0.0 {
            *d = 0.0;
        }
    }
    gemm_tn(2 * GRU2_UNITS, b, DENSE_UNITS, 1.0, &caches.ctx, &dact, 1.0, grads.dense_w.data_mut());
    for row in dact.chunks_exact(DENSE_UNITS) {
        for (acc, v) in grads.dense_b.data_mut().iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut dctx = vec![0.0; b * 2 * GRU2_UNITS];
    gemm_nt(b, DENSE_UNITS, 2 * GRU2_UNITS, 1.0, &dact, params.dense_w.data(), 0.0, &mut dctx);

    // Attention pooling.
    let mask_refs: Vec<&[bool; crate::sequencing::SEQ_LEN]> = caches.masks.iter().collect();
    let mut dy2 = Slab::zeros(caches.y2.steps, caches.y2.batch, caches.y2.dim);
    attention_backward_batch(
        &caches.y2,
        &mask_refs,
        caches.t0,
        &params.attn,
        &caches.attn,
        &dctx,
        &mut grads.attn,
        &mut dy2,
    );

    // Second recurrent layer (its input was the post-dropout y1).
    if let Some(ctx) = caches.dropout {
        dropout_backward(&mut dy2, &caches.masks, caches.t0, 1, params.dropout_rates[1], ctx);
    }
    let mut dy1 = Slab::zeros(caches.y1.steps, caches.y1.batch, caches.y1.dim);
    bigru_backward_batch(
        &caches.y1,
        &mask_refs,
        &params.gru2,
        &caches.g2,
        &dy2,
        &mut grads.gru2,
        Some(&mut dy1),
    );

    // First recurrent layer; input gradients are not needed.
    if let Some(ctx) = caches.dropout {
        dropout_backward(&mut dy1, &caches.masks, caches.t0, 0, params.dropout_rates[0], ctx);
    }
    bigru_backward_batch(&caches.x, &mask_refs, &params.gru1, &caches.g1, &dy1, &mut grads.gru1, None);

    for (name, t) in grads.tensors() {
        if !t.all_finite() {
            return Err(DaselError::Numerical {
                layer: "gradients",
                msg: format!("non-finite gradient in {name}"),
            });
        }
    }
    Ok((loss, grads))
}

fn dropout_backward(
    dy: &mut Slab,
    masks: &[[bool; crate::sequencing::SEQ_LEN]],
    t0: usize,
    site: u64,
    rate: f64,
    ctx: DropoutCtx,
) {
    for k in 0..dy.steps {
        let t = t0 + k;
        for (bi, mask) in masks.iter().enumerate() {
            if !mask[t] {
                continue;
            }
            let row = dy.row_mut(k, bi);
            for (j, v) in row.iter_mut().enumerate() {
                *v *= dropout_scale(ctx, site, bi as u64, t as u64, j as u64, rate);
            }
        }
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Adam {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelGrads, cfg: &TrainConfig) {
        self.t += 1;
        let b1 = cfg.adam_beta1;
        let b2 = cfg.adam_beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let gtensors = grads.tensors();
        for (idx, (_, tensor)) in params.tensors_mut().into_iter().enumerate() {
            let g = gtensors[idx].1.data();
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for (j, p) in tensor.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *p -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.adam_epsilon);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    /// Mean weighted cross-entropy per epoch.
    pub epoch_losses: Vec<f64>,
}

const DROPOUT_SALT: u64 = 0xD50F_00D5_EED5_EED5;

/// Trains one classifier from scratch. `classes` fixes the class-index
/// order and must list every room exactly once; every class needs at
/// least one sequence.
pub fn train(
    sequences: &[Sequence],
    classes: &[String],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if classes.len() < 2 {
        return Err(DaselError::Data("need at least 2 classes".into()));
    }
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, c) in classes.iter().enumerate() {
        if index.insert(c.as_str(), i).is_some() {
            return Err(DaselError::Data(format!("duplicate class {c}")));
        }
    }

    let mut labels = Vec::with_capacity(sequences.len());
    let mut counts = vec![0usize; classes.len()];
    for s in sequences {
        let room = s
            .room
            .as_deref()
            .ok_or_else(|| DaselError::Data("training sequence without room label".into()))?;
        let &idx = index
            .get(room)
            .ok_or_else(|| DaselError::Data(format!("sequence room {room} not in class table")))?;
        counts[idx] += 1;
        labels.push(idx);
    }
    for (i, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(DaselError::Data(format!(
                "class {} has no training sequences",
                classes[i]
            )));
        }
    }

    // Per-class weights, balanced unless the config pins them.
    let weights: Vec<f64> = if cfg.class_weights.is_empty() {
        let n = sequences.len() as f64;
        let k = classes.len() as f64;
        counts.iter().map(|&c| n / (k * c as f64)).collect()
    } else {
        let mut w = Vec::with_capacity(classes.len());
        for c in classes {
            match cfg.class_weights.get(c) {
                Some(&v) => w.push(v),
                None => {
                    return Err(DaselError::Data(format!("class_weights missing class {c}")));
                }
            }
        }
        w
    };

    let mut params = ModelParams::init(classes.to_vec(), seed)?;
    let mut adam = Adam::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed.unwrap_or(seed));
    let dropout_seed = seed ^ DROPOUT_SALT;

    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Sequence, usize)> =
                chunk.iter().map(|&i| (&sequences[i], labels[i])).collect();
            let ctx = DropoutCtx {
                seed: dropout_seed,
                step,
            };
            let (loss, grads) = loss_and_grads(&batch, &params, &weights, Some(ctx))?;
            adam.step(&mut params, &grads, cfg);
            epoch_loss += loss * chunk.len() as f64;
            step += 1;
        }
        epoch_losses.push(epoch_loss / sequences.len() as f64);
    }

    Ok(TrainedModel {
        params,
        epoch_losses,
    })
}
