//! Additive attention pooling over the recurrent state sequence.
//!
//! Per timestep: score = tanh(w . state + b); weights are a softmax over
//! the unmasked scores only; the context vector is the weighted state sum.
//! Masked positions get weight exactly 0.

use crate::error::{DaselError, Result};
use crate::neuralnet::tensor::{Slab, Tensor};
use crate::sequencing::SEQ_LEN;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// [dim, 1] projection onto a scalar score per timestep.
    pub w: Tensor,
    /// [1] score bias.
    pub b: Tensor,
}

impl AttentionParams {
    pub fn zeros(dim: usize) -> Self {
        AttentionParams {
            w: Tensor::zeros(&[dim, 1]),
            b: Tensor::zeros(&[1]),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.shape()[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub w: Tensor,
    pub b: Tensor,
}

impl AttentionGrads {
    pub fn zeros(p: &AttentionParams) -> Self {
        AttentionGrads {
            w: p.w.zeros_like(),
            b: p.b.zeros_like(),
        }
    }
}

/// Pools a single state sequence (`states` is [SEQ_LEN, dim] row-major).
/// Returns the context vector and the full 50-slot weight vector with
/// zeros at masked positions.
pub fn attention_pool(
    states: &[f64],
    mask: &[bool; SEQ_LEN],
    params: &AttentionParams,
) -> Result<(Vec<f64>, [f64; SEQ_LEN])> {
    let dim = params.dim();
    if states.len() != SEQ_LEN * dim {
        return Err(DaselError::Contract(format!(
            "attention_pool: states length {} != {} x {dim}",
            states.len(),
            SEQ_LEN
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(DaselError::Contract("attention_pool: all timesteps masked".into()));
    }
    let w = params.w.data();
    let b = params.b.data()[0];

    let mut weights = [0.0; SEQ_LEN];
    let mut max = f64::NEG_INFINITY;
    for t in 0..SEQ_LEN {
        if !mask[t] {
            continue;
        }
        let row = &states[t * dim..(t + 1) * dim];
        let score: f64 = row.iter().zip(w).map(|(s, wv)| s * wv).sum::<f64>() + b;
        let score = score.tanh();
        weights[t] = score;
        max = max.max(score);
    }
    let mut sum = 0.0;
    for t in 0..SEQ_LEN {
        if mask[t] {
            weights[t] = (weights[t] - max).exp();
            sum += weights[t];
        }
    }
    let mut context = vec![0.0; dim];
    for t in 0..SEQ_LEN {
        if !mask[t] {
            continue;
        }
        weights[t] /= sum;
        let row = &states[t * dim..(t + 1) * dim];
        for (c, s) in context.iter_mut().zip(row) {
            *c += weights[t] * s;
        }
    }
    Ok((context, weights))
}

/// Forward activations kept for the backward pass.
pub struct AttnCache {
    /// tanh scores, [T, B].
    pub scores: Vec<f64>,
    /// softmax weights, [T, B]; 0 at masked positions.
    pub weights: Vec<f64>,
}

/// Batched pooling over a [T, B, dim] slab. `t0` maps slab steps onto
/// absolute mask positions. Returns contexts [B, dim].
pub fn attention_pool_batch(
    states: &Slab,
    masks: &[&[bool; SEQ_LEN]],
    t0: usize,
    params: &AttentionParams,
) -> Result<(Vec<f64>, AttnCache)> {
    let (steps, batch, dim) = (states.steps, states.batch, states.dim);
    debug_assert_eq!(dim, params.dim());
    let w = params.w.data();
    let b = params.b.data()[0];

    let mut scores = vec![0.0; steps * batch];
    let mut weights = vec![0.0; steps * batch];
    let mut contexts = vec![0.0; batch * dim];

    for bi in 0..batch {
        let mask = masks[bi];
        let mut max = f64::NEG_INFINITY;
        let mut any = false;
        for k in 0..steps {
            if !mask[t0 + k] {
                continue;
            }
            any = true;
            let row = states.row(k, bi);
            let s: f64 = row.iter().zip(w).map(|(x, wv)| x * wv).sum::<f64>() + b;
            let s = s.tanh();
            scores[k * batch + bi] = s;
            max = max.max(s);
        }
        if !any {
            return Err(DaselError::Contract("attention_pool: all timesteps masked".into()));
        }
        let mut sum = 0.0;
        for k in 0..steps {
            if mask[t0 + k] {
                let e = (scores[k * batch + bi] - max).exp();
                weights[k * batch + bi] = e;
                sum += e;
            }
        }
        let ctx = &mut contexts[bi * dim..(bi + 1) * dim];
        for k in 0..steps {
            if !mask[t0 + k] {
                continue;
            }
            let a = weights[k * batch + bi] / sum;
            weights[k * batch + bi] = a;
            for (c, s) in ctx.iter_mut().zip(states.row(k, bi)) {
                *c += a * s;
            }
        }
    }
    Ok((contexts, AttnCache { scores, weights }))
}

/// Backward through batched pooling: given dL/d(context), accumulates
/// parameter gradients and writes dL/d(states) into `dstates`.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward_batch(
    states: &Slab,
    masks: &[&[bool; SEQ_LEN]],
    t0: usize,
    params: &AttentionParams,
    cache: &AttnCache,
    dctx: &[f64],
    grads: &mut AttentionGrads,
    dstates: &mut Slab,
) {
    let (steps, batch, dim) = (states.steps, states.batch, states.dim);
    let w = params.w.data();
    let dw = grads.w.data_mut();
    let db = &mut grads.b.data_mut()[0];

    for bi in 0..batch {
        let mask = masks[bi];
        let dc = &dctx[bi * dim..(bi + 1) * dim];

        // da_t = states_t . dctx; context also feeds states directly.
        let mut da = vec![0.0; steps];
        let mut dot_a_da = 0.0;
        for k in 0..steps {
            if !mask[t0 + k] {
                continue;
            }
            let a = cache.weights[k * batch + bi];
            let row = states.row(k, bi);
            let d: f64 = row.iter().zip(dc).map(|(s, g)| s * g).sum();
            da[k] = d;
            dot_a_da += a * d;
            let drow = dstates.row_mut(k, bi);
            for (o, g) in drow.iter_mut().zip(dc) {
                *o += a * g;
            }
        }
        // Softmax backward, then tanh backward into the score projection.
        for k in 0..steps {
            if !mask[t0 + k] {
                continue;
            }
            let a = cache.weights[k * batch + bi];
            let s = cache.scores[k * batch + bi];
            let ds = a * (da[k] - dot_a_da);
            let du = ds * (1.0 - s * s);
            *db += du;
            let row = states.row(k, bi);
            let drow = dstates.row_mut(k, bi);
            for j in 0..dim {
                dw[j] += du * row[j];
                drow[j] += du * w[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_last(n: usize) -> [bool; SEQ_LEN] {
        let mut m = [false; SEQ_LEN];
        for slot in m.iter_mut().skip(SEQ_LEN - n) {
            *slot = true;
        }
        m
    }

    #[test]
    fn single_unmasked_timestep_gets_weight_one() {
        let dim = 4;
        let mut params = AttentionParams::zeros(dim);
        params.w.data_mut().copy_from_slice(&[0.3, -0.2, 0.5, 0.1]);
        params.b.data_mut()[0] = 0.05;
        let mut states = vec![0.0; SEQ_LEN * dim];
        states[(SEQ_LEN - 1) * dim..].copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let (ctx, weights) = attention_pool(&states, &mask_last(1), &params).unwrap();
        assert_eq!(weights[SEQ_LEN - 1], 1.0);
        assert!(weights[..SEQ_LEN - 1].iter().all(|&v| v == 0.0));
        assert_eq!(ctx, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn identical_states_share_weight_equally() {
        let dim = 3;
        let mut params = AttentionParams::zeros(dim);
        params.w.data_mut().copy_from_slice(&[1.0, -1.0, 0.5]);
        let mut states = vec![0.0; SEQ_LEN * dim];
        for t in [SEQ_LEN - 2, SEQ_LEN - 1] {
            states[t * dim..(t + 1) * dim].copy_from_slice(&[0.2, 0.4, -0.1]);
        }
        let (_, weights) = attention_pool(&states, &mask_last(2), &params).unwrap();
        assert!((weights[SEQ_LEN - 2] - 0.5).abs() < 1e-12);
        assert!((weights[SEQ_LEN - 1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn three_step_hand_arithmetic() {
        let dim = 2;
        let mut params = AttentionParams::zeros(dim);
        params.w.data_mut().copy_from_slice(&[0.5, -0.25]);
        params.b.data_mut()[0] = 0.1;
        let rows = [[1.0, 2.0], [0.0, -1.0], [2.0, 0.5]];
        let mut states = vec![0.0; SEQ_LEN * dim];
        for (i, r) in rows.iter().enumerate() {
            let t = SEQ_LEN - 3 + i;
            states[t * dim..(t + 1) * dim].copy_from_slice(r);
        }
        let (ctx, weights) = attention_pool(&states, &mask_last(3), &params).unwrap();

        let scores: Vec<f64> = rows
            .iter()
            .map(|r| (0.5 * r[0] - 0.25 * r[1] + 0.1).tanh())
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for i in 0..3 {
            assert!((weights[SEQ_LEN - 3 + i] - exps[i] / sum).abs() < 1e-12);
        }
        for j in 0..dim {
            let expected: f64 = (0..3).map(|i| exps[i] / sum * rows[i][j]).sum();
            assert!((ctx[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn unmasked_weights_sum_to_one() {
        let dim = 5;
        let mut params = AttentionParams::zeros(dim);
        for (i, v) in params.w.data_mut().iter_mut().enumerate() {
            *v = (i as f64 - 2.0) * 0.3;
        }
        let mut states = vec![0.0; SEQ_LEN * dim];
        for (i, v) in states.iter_mut().enumerate() {
            *v = ((i * 37) % 11) as f64 / 11.0 - 0.5;
        }
        let (_, weights) = attention_pool(&states, &mask_last(17), &params).unwrap();
        let sum: f64 = weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(weights.iter().all(|&v| v >= 0.0));
        assert!(weights[..SEQ_LEN - 17].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_masked_is_contract_violation() {
        let params = AttentionParams::zeros(2);
        let states = vec![0.0; SEQ_LEN * 2];
        let mask = [false; SEQ_LEN];
        assert!(attention_pool(&states, &mask, &params).is_err());
    }

    #[test]
    fn batched_matches_single() {
        let dim = 3;
        let mut params = AttentionParams::zeros(dim);
        params.w.data_mut().copy_from_slice(&[0.4, -0.6, 0.2]);
        params.b.data_mut()[0] = -0.1;

        let lens = [5usize, 2];
        let t0 = SEQ_LEN - 5;
        let mut slab = Slab::zeros(5, 2, dim);
        let mut singles = Vec::new();
        for (bi, &len) in lens.iter().enumerate() {
            let mut states = vec![0.0; SEQ_LEN * dim];
            for t in SEQ_LEN - len..SEQ_LEN {
                for j in 0..dim {
                    let v = ((t * 7 + j * 3 + bi) % 9) as f64 / 9.0 - 0.4;
                    states[t * dim + j] = v;
                    slab.row_mut(t - t0, bi)[j] = v;
                }
            }
            singles.push(states);
        }
        let masks = [mask_last(lens[0]), mask_last(lens[1])];
        let mask_refs: Vec<&[bool; SEQ_LEN]> = masks.iter().collect();
        let (contexts, _) = attention_pool_batch(&slab, &mask_refs, t0, &params).unwrap();
        for bi in 0..2 {
            let (ctx, _) = attention_pool(&singles[bi], &masks[bi], &params).unwrap();
            for j in 0..dim {
                assert!((contexts[bi * dim + j] - ctx[j]).abs() < 1e-12);
            }
        }
    }
}
