//! Finite-difference verification of the analytic gradients.
//!
//! Central differences (f(x+e) - f(x-e)) / 2e are compared against
//! backpropagation on coordinates sampled from every parameter tensor.
//! Dropout is disabled so both sides differentiate the same function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::neuralnet::model::{forward_batch, Mode, ModelParams};
use crate::neuralnet::train::loss_and_grads;
use crate::sequencing::Sequence;

/// The batch loss with no dropout; the scalar function being checked.
pub fn batch_loss(batch: &[(&Sequence, usize)], params: &ModelParams, weights: &[f64]) -> Result<f64> {
    let c = params.num_classes();
    let seqs: Vec<&Sequence> = batch.iter().map(|&(s, _)| s).collect();
    let (probs, _) = forward_batch(params, &seqs, Mode::Infer, None, false)?;
    let mut loss = 0.0;
    for (i, &(_, y)) in batch.iter().enumerate() {
        loss += weights[y] * -(probs[i * c + y].max(f64::MIN_POSITIVE)).ln();
    }
    Ok(loss / batch.len() as f64)
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// Compares analytic and central-difference gradients on at least
/// `min_samples` coordinates spanning every parameter tensor; returns the
/// maximum relative error.
pub fn grad_check(
    params: &mut ModelParams,
    batch: &[(&Sequence, usize)],
    weights: &[f64],
    epsilon: f64,
    min_samples: usize,
    sample_seed: u64,
) -> Result<f64> {
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(crate::error::DaselError::Contract(format!(
            "grad_check epsilon {epsilon:e} outside [1e-7, 1e-4]"
        )));
    }
    let (_, grads) = loss_and_grads(batch, params, weights, None)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|(_, t)| t.data().to_vec()).collect();

    let n_tensors = params.tensors().len();
    let per_tensor = min_samples.div_ceil(n_tensors);
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut max_err = 0.0f64;

    #[allow(clippy::needless_range_loop)] // params is re-borrowed inside
    for ti in 0..n_tensors {
        let len = params.tensors()[ti].1.len();
        for _ in 0..per_tensor.min(len) {
            let ci = rng.gen_range(0..len);
            let orig = params.tensors()[ti].1.data()[ci];

            params.tensors_mut()[ti].1.data_mut()[ci] = orig + epsilon;
            let plus = batch_loss(batch, params, weights)?;
            params.tensors_mut()[ti].1.data_mut()[ci] = orig - epsilon;
            let minus = batch_loss(batch, params, weights)?;
            params.tensors_mut()[ti].1.data_mut()[ci] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            max_err = max_err.max(relative_error(analytic[ti][ci], numeric));
        }
    }
    Ok(max_err)
}

/// Random sequences and labels for exercising the checker on toy models.
pub fn random_toy_batch(
    n: usize,
    max_len: usize,
    classes: usize,
    seed: u64,
) -> (Vec<Sequence>, Vec<usize>) {
    use crate::features::FREQ_DIM;
    use crate::sequencing::pad_and_mask;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seqs = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let len = rng.gen_range(1..=max_len);
        let rows: Vec<[f64; FREQ_DIM]> = (0..len)
            .map(|_| {
                let mut r = [0.0; FREQ_DIM];
                for v in r.iter_mut() {
                    *v = rng.gen_range(0.0..1.0);
                }
                r
            })
            .collect();
        seqs.push(pad_and_mask(&rows).expect("1..=max_len frames"));
        labels.push(rng.gen_range(0..classes));
    }
    (seqs, labels)
}

/// Negative control: doubles the largest-magnitude analytic gradient
/// coordinate and reports the resulting relative error against the
/// numeric gradient (expected to land near 1/3).
pub fn corrupted_grad_check(
    params: &mut ModelParams,
    batch: &[(&Sequence, usize)],
    weights: &[f64],
    epsilon: f64,
) -> Result<f64> {
    let (_, grads) = loss_and_grads(batch, params, weights, None)?;
    let mut best = (0usize, 0usize, 0.0f64);
    for (ti, (_, t)) in grads.tensors().iter().enumerate() {
        for (ci, &g) in t.data().iter().enumerate() {
            if g.abs() > best.2.abs() {
                best = (ti, ci, g);
            }
        }
    }
    let (ti, ci, g) = best;
    let corrupted = 2.0 * g;

    let orig = params.tensors()[ti].1.data()[ci];
    params.tensors_mut()[ti].1.data_mut()[ci] = orig + epsilon;
    let plus = batch_loss(batch, params, weights)?;
    params.tensors_mut()[ti].1.data_mut()[ci] = orig - epsilon;
    let minus = batch_loss(batch, params, weights)?;
    params.tensors_mut()[ti].1.data_mut()[ci] = orig;

    let numeric = (plus - minus) / (2.0 * epsilon);
    Ok(relative_error(corrupted, numeric))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_initialized_model_gradients_check_out() {
        let classes: Vec<String> = (0..3).map(|i| format!("r{i}")).collect();
        let mut params = ModelParams::init(classes, 1).unwrap();
        // Zero out everything except the output head bias path stays live.
        for (_, t) in params.tensors_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let (seqs, labels) = random_toy_batch(3, 8, 3, 5);
        let batch: Vec<(&Sequence, usize)> = seqs.iter().zip(labels.iter().copied()).collect();
        let err = grad_check(&mut params, &batch, &[1.0, 1.0, 1.0], 1e-5, 220, 77).unwrap();
        // Coordinates whose true gradient is exactly zero still carry
        // ~1e-17 of accumulation dust in the analytic sum; over the 1e-12
        // denominator floor that reads as ~1e-5, which bounds this case.
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn random_toy_model_passes_at_1e4() {
        let classes: Vec<String> = (0..3).map(|i| format!("r{i}")).collect();
        let mut params = ModelParams::init(classes, 21).unwrap();
        let (seqs, labels) = random_toy_batch(4, 10, 3, 6);
        let batch: Vec<(&Sequence, usize)> = seqs.iter().zip(labels.iter().copied()).collect();
        let weights = [1.0, 2.0, 0.5];
        let err = grad_check(&mut params, &batch, &weights, 1e-5, 220, 78).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let classes: Vec<String> = (0..3).map(|i| format!("r{i}")).collect();
        let mut params = ModelParams::init(classes, 23).unwrap();
        let (seqs, labels) = random_toy_batch(3, 6, 3, 8);
        let batch: Vec<(&Sequence, usize)> = seqs.iter().zip(labels.iter().copied()).collect();
        let err = corrupted_grad_check(&mut params, &batch, &[1.0; 3], 1e-5).unwrap();
        assert!(err > 0.1, "negative control too small: {err}");
    }
}
