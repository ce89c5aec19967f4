//! Shared differentiable building blocks: dense, batch norm, dropout, and
//! the softmax cross-entropy loss.

use super::tensor::{matvec_acc, matvec_transpose_acc, outer_acc, Tensor};
use super::NnError;
use crate::rng::Stream;

/// Batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;

/// Batch-norm running-stat momentum: `running = 0.99 running + 0.01 batch`.
pub const BN_MOMENTUM: f64 = 0.99;

pub(super) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Affine map `y = x W + b` over a batch `x` of shape `[n, in]`, with an
/// optional ReLU.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor, relu: bool) -> Tensor {
    let (y, _) = dense_forward(x, w, b, relu);
    y
}

pub(super) struct DenseCache {
    x: Tensor,
    pre: Tensor,
    relu: bool,
}

pub(super) fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor, relu: bool) -> (Tensor, DenseCache) {
    let n = x.rows();
    let out = w.cols();
    let mut pre = Tensor::zeros(vec![n, out]);
    for r in 0..n {
        let row = pre.row_mut(r);
        row.copy_from_slice(&b.data);
        matvec_acc(x.row(r), w, row);
    }
    let mut y = pre.clone();
    if relu {
        for v in &mut y.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    (y, DenseCache { x: x.clone(), pre, relu })
}

/// Returns `(dx, dw, db)`.
pub(super) fn dense_backward(dy: &Tensor, w: &Tensor, cache: &DenseCache) -> (Tensor, Tensor, Tensor) {
    let n = dy.rows();
    let mut dpre = dy.clone();
    if cache.relu {
        for (d, &p) in dpre.data.iter_mut().zip(&cache.pre.data) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
    }
    let mut dx = Tensor::zeros(cache.x.shape.clone());
    let mut dw = Tensor::zeros(w.shape.clone());
    let mut db = Tensor::zeros(vec![w.cols()]);
    for r in 0..n {
        let d_row = dpre.row(r);
        matvec_transpose_acc(d_row, w, dx.row_mut(r));
        outer_acc(cache.x.row(r), d_row, &mut dw);
        for (dbv, &dv) in db.data.iter_mut().zip(d_row) {
            *dbv += dv;
        }
    }
    (dx, dw, db)
}

/// Cache from a train-mode batch-norm pass, consumed by the backward pass.
pub struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

/// Batch norm with batch statistics, without touching running stats.
/// Returns the batch mean and variance so the caller can apply the running
/// update itself. `n` pools batch and time positions.
pub(super) fn batchnorm_stats(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
) -> Result<(Tensor, BnCache, Vec<f64>, Vec<f64>), NnError> {
    let n = x.rows();
    let channels = x.cols();
    if n < 2 {
        return Err(NnError::DegenerateBatch {
            detail: format!("batch norm needs at least 2 positions, got {n}"),
        });
    }

    let mut mean = vec![0.0; channels];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; channels];
    for r in 0..n {
        for (c, &v) in x.row(r).iter().enumerate() {
            let d = v - mean[c];
            var[c] += d * d;
        }
    }
    for v in &mut var {
        *v /= n as f64;
    }

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = Tensor::zeros(vec![n, channels]);
    let mut y = Tensor::zeros(vec![n, channels]);
    for r in 0..n {
        for c in 0..channels {
            let h = (x.at2(r, c) - mean[c]) * inv_std[c];
            xhat.set2(r, c, h);
            y.set2(r, c, gamma.data[c] * h + beta.data[c]);
        }
    }
    Ok((y, BnCache { xhat, inv_std }, mean, var))
}

/// Train-mode batch norm over rows of `x` (shape `[n, channels]`, where `n`
/// pools batch and time positions). Normalizes with the batch statistics,
/// then updates the running stats in place with momentum [`BN_MOMENTUM`].
pub fn batchnorm_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
) -> Result<(Tensor, BnCache), NnError> {
    let (y, cache, mean, var) = batchnorm_stats(x, gamma, beta)?;
    for c in 0..x.cols() {
        running_mean.data[c] = BN_MOMENTUM * running_mean.data[c] + (1.0 - BN_MOMENTUM) * mean[c];
        running_var.data[c] = BN_MOMENTUM * running_var.data[c] + (1.0 - BN_MOMENTUM) * var[c];
    }
    Ok((y, cache))
}

/// Inference-mode batch norm: normalizes with the running statistics.
pub fn batchnorm_infer(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
) -> Tensor {
    let channels = x.cols();
    let mut y = Tensor::zeros(x.shape.clone());
    for r in 0..x.rows() {
        for c in 0..channels {
            let inv = 1.0 / (running_var.data[c] + BN_EPS).sqrt();
            let h = (x.at2(r, c) - running_mean.data[c]) * inv;
            y.set2(r, c, gamma.data[c] * h + beta.data[c]);
        }
    }
    y
}

/// Returns `(dx, dgamma, dbeta)`.
pub(super) fn batchnorm_backward(
    dy: &Tensor,
    gamma: &Tensor,
    cache: &BnCache,
) -> (Tensor, Tensor, Tensor) {
    let n = dy.rows();
    let channels = dy.cols();
    let mut dgamma = Tensor::zeros(vec![channels]);
    let mut dbeta = Tensor::zeros(vec![channels]);
    for r in 0..n {
        for c in 0..channels {
            dgamma.data[c] += dy.at2(r, c) * cache.xhat.at2(r, c);
            dbeta.data[c] += dy.at2(r, c);
        }
    }
    let mut dx = Tensor::zeros(dy.shape.clone());
    let nf = n as f64;
    for r in 0..n {
        for c in 0..channels {
            let term = nf * dy.at2(r, c) - dbeta.data[c] - cache.xhat.at2(r, c) * dgamma.data[c];
            dx.set2(r, c, gamma.data[c] * cache.inv_std[c] / nf * term);
        }
    }
    (dx, dgamma, dbeta)
}

/// An inverted-dropout mask: each factor is `0` with probability `rate`,
/// otherwise `1/(1-rate)`, so the expectation is preserved. Rate 0 yields
/// all ones without consuming randomness.
pub fn dropout_mask(len: usize, rate: f64, stream: &mut Stream) -> Vec<f64> {
    debug_assert!((0.0..1.0).contains(&rate));
    if rate == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    (0..len).map(|_| if stream.next_f64() < keep { scale } else { 0.0 }).collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Cross-entropy of a softmax over `logits` against `true_class`, with its
/// gradient. Uses log-sum-exp, so huge logits neither overflow nor lose the
/// loss to cancellation.
pub fn softmax_crossentropy(logits: &[f64], true_class: usize) -> (f64, Vec<f64>) {
    debug_assert!(true_class < logits.len());
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum_exp = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    let loss = log_sum_exp - logits[true_class];
    let mut grad = softmax(logits);
    grad[true_class] -= 1.0;
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_zero_weights_give_zero_output() {
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]).unwrap();
        let w = Tensor::zeros(vec![3, 4]);
        let b = Tensor::zeros(vec![4]);
        assert!(dense(&x, &w, &b, false).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let x = Tensor::new(vec![1, 3], vec![0.5, -2.0, 3.0]).unwrap();
        let mut w = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            w.set2(i, i, 1.0);
        }
        let b = Tensor::zeros(vec![3]);
        assert_eq!(dense(&x, &w, &b, false).data, x.data);
        assert_eq!(dense(&x, &w, &b, true).data, vec![0.5, 0.0, 3.0]);
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut stream = Stream::new(11);
        let x = Tensor {
            shape: vec![2, 3],
            data: (0..6).map(|_| stream.next_gaussian()).collect(),
        };
        let mut w = Tensor {
            shape: vec![3, 4],
            data: (0..12).map(|_| stream.next_gaussian()).collect(),
        };
        let b = Tensor { shape: vec![4], data: (0..4).map(|_| stream.next_gaussian()).collect() };
        // Scalar objective: sum of outputs squared.
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            dense(x, w, b, true).data.iter().map(|v| v * v).sum::<f64>() * 0.5
        };
        let (y, cache) = dense_forward(&x, &w, &b, true);
        let (dx, dw, db) = dense_backward(&y, &w, &cache);

        let step = 1e-6;
        for i in 0..w.data.len() {
            let orig = w.data[i];
            w.data[i] = orig + step;
            let up = loss(&x, &w, &b);
            w.data[i] = orig - step;
            let down = loss(&x, &w, &b);
            w.data[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let rel = (dw.data[i] - numeric).abs() / numeric.abs().max(1e-8);
            assert!(rel < 1e-6, "dw[{i}]: analytic {} vs numeric {numeric}", dw.data[i]);
        }
        let mut xp = x.clone();
        for i in 0..xp.data.len() {
            let orig = xp.data[i];
            xp.data[i] = orig + step;
            let up = loss(&xp, &w, &b);
            xp.data[i] = orig - step;
            let down = loss(&xp, &w, &b);
            xp.data[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            assert!((dx.data[i] - numeric).abs() / numeric.abs().max(1e-8) < 1e-5);
        }
        let _ = db;
    }

    #[test]
    fn batchnorm_constant_channel_maps_to_zero() {
        let x = Tensor::new(vec![4, 1], vec![7.0; 4]).unwrap();
        let gamma = Tensor::new(vec![1], vec![1.0]).unwrap();
        let beta = Tensor::zeros(vec![1]);
        let mut rm = Tensor::zeros(vec![1]);
        let mut rv = Tensor::new(vec![1], vec![1.0]).unwrap();
        let (y, _) = batchnorm_train(&x, &gamma, &beta, &mut rm, &mut rv).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0), "epsilon keeps 0/sqrt(eps) at zero");
        assert!((rm.data[0] - 0.07).abs() < 1e-12, "running mean update");
        assert!((rv.data[0] - 0.99).abs() < 1e-12, "running var update");
    }

    #[test]
    fn batchnorm_train_output_is_standardized() {
        let mut stream = Stream::new(3);
        let x = Tensor {
            shape: vec![50, 4],
            data: (0..200).map(|_| stream.next_gaussian() * 3.0 + 1.0).collect(),
        };
        let gamma = Tensor::new(vec![4], vec![1.0; 4]).unwrap();
        let beta = Tensor::zeros(vec![4]);
        let mut rm = Tensor::zeros(vec![4]);
        let mut rv = Tensor::new(vec![4], vec![1.0; 4]).unwrap();
        let (y, _) = batchnorm_train(&x, &gamma, &beta, &mut rm, &mut rv).unwrap();
        for c in 0..4 {
            let col: Vec<f64> = (0..50).map(|r| y.at2(r, c)).collect();
            let mean = col.iter().sum::<f64>() / 50.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-9, "channel {c} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {c} var {var}");
        }
    }

    #[test]
    fn batchnorm_rejects_single_position_batches() {
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let gamma = Tensor::new(vec![2], vec![1.0; 2]).unwrap();
        let beta = Tensor::zeros(vec![2]);
        let mut rm = Tensor::zeros(vec![2]);
        let mut rv = Tensor::new(vec![2], vec![1.0; 2]).unwrap();
        assert!(matches!(
            batchnorm_train(&x, &gamma, &beta, &mut rm, &mut rv),
            Err(NnError::DegenerateBatch { .. })
        ));
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        let mut stream = Stream::new(17);
        let make_x = |data: Vec<f64>| Tensor { shape: vec![6, 3], data };
        let x_data: Vec<f64> = (0..18).map(|_| stream.next_gaussian()).collect();
        let gamma = Tensor { shape: vec![3], data: vec![1.3, 0.7, -0.4] };
        let beta = Tensor { shape: vec![3], data: vec![0.1, -0.2, 0.5] };
        // Objective: 0.5 sum(y^2). Running stats do not feed the loss.
        let loss = |x_data: &[f64], gamma: &Tensor, beta: &Tensor| -> f64 {
            let mut rm = Tensor::zeros(vec![3]);
            let mut rv = Tensor::new(vec![3], vec![1.0; 3]).unwrap();
            let (y, _) =
                batchnorm_train(&make_x(x_data.to_vec()), gamma, beta, &mut rm, &mut rv).unwrap();
            y.data.iter().map(|v| v * v).sum::<f64>() * 0.5
        };

        let mut rm = Tensor::zeros(vec![3]);
        let mut rv = Tensor::new(vec![3], vec![1.0; 3]).unwrap();
        let (y, cache) =
            batchnorm_train(&make_x(x_data.clone()), &gamma, &beta, &mut rm, &mut rv).unwrap();
        let (dx, dgamma, dbeta) = batchnorm_backward(&y, &gamma, &cache);

        let step = 1e-5;
        let check = |analytic: f64, up: f64, down: f64, what: &str| {
            let numeric = (up - down) / (2.0 * step);
            let rel = (analytic - numeric).abs() / numeric.abs().max(1e-6);
            assert!(rel < 1e-4, "{what}: analytic {analytic} vs numeric {numeric}");
        };
        for i in 0..x_data.len() {
            let mut xp = x_data.clone();
            xp[i] += step;
            let up = loss(&xp, &gamma, &beta);
            xp[i] -= 2.0 * step;
            let down = loss(&xp, &gamma, &beta);
            check(dx.data[i], up, down, "dx");
        }
        for c in 0..3 {
            let mut g = gamma.clone();
            g.data[c] += step;
            let up = loss(&x_data, &g, &beta);
            g.data[c] -= 2.0 * step;
            let down = loss(&x_data, &g, &beta);
            check(dgamma.data[c], up, down, "dgamma");

            let mut b = beta.clone();
            b.data[c] += step;
            let up = loss(&x_data, &gamma, &b);
            b.data[c] -= 2.0 * step;
            let down = loss(&x_data, &gamma, &b);
            check(dbeta.data[c], up, down, "dbeta");
        }
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut stream = Stream::new(1);
        let before = stream.clone();
        let mask = dropout_mask(100, 0.0, &mut stream);
        assert!(mask.iter().all(|&m| m == 1.0));
        assert_eq!(stream, before, "rate 0 must not consume randomness");
    }

    #[test]
    fn dropout_keeps_the_expected_fraction_and_mean() {
        let mut stream = Stream::new(8);
        let n = 1_000_000;
        let mask = dropout_mask(n, 0.7, &mut stream);
        let kept = mask.iter().filter(|&&m| m != 0.0).count() as f64 / n as f64;
        assert!((kept - 0.3).abs() < 0.002, "kept fraction {kept}");
        let x: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let mean_x: f64 = x.iter().sum::<f64>() / n as f64;
        let mean_masked: f64 = x.iter().zip(&mask).map(|(v, m)| v * m).sum::<f64>() / n as f64;
        assert!(
            (mean_masked - mean_x).abs() < 0.01 * mean_x,
            "dropout should preserve the mean: {mean_masked} vs {mean_x}"
        );
    }

    #[test]
    fn crossentropy_closed_forms() {
        let (loss, grad) = softmax_crossentropy(&[0.0, 0.0, 0.0], 1);
        assert!((loss - 3.0f64.ln()).abs() < 1e-9);
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);

        let (loss, _) = softmax_crossentropy(&[1000.0, 0.0, 0.0], 0);
        assert!(loss < 1e-6, "confident correct prediction, loss {loss}");
        assert!(loss >= 0.0);

        let (loss, _) = softmax_crossentropy(&[1000.0, 0.0, 0.0], 2);
        assert!((loss - 1000.0).abs() < 1e-6, "confidently wrong costs the logit gap");
    }

    #[test]
    fn softmax_sums_to_one_even_for_extreme_logits() {
        for logits in [[0.0, 0.0, 0.0], [700.0, -700.0, 0.0], [-1e4, -1e4, -1e4]] {
            let p = softmax(&logits);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
