//! Weight initializers.

use super::tensor::Tensor;
use crate::rng::Stream;

/// Glorot (Xavier) uniform: values drawn from
/// `U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))` for a kernel
/// shaped `[fan_in, fan_out]`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, stream: &mut Stream) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| stream.next_in(-limit, limit)).collect();
    Tensor { shape: vec![fan_in, fan_out], data }
}

/// A random `n x n` orthogonal matrix: Householder QR of a Gaussian matrix,
/// with column signs fixed by the R diagonal so the result is unique per
/// stream state.
pub fn orthogonal(n: usize, stream: &mut Stream) -> Tensor {
    let mut a = Tensor::zeros(vec![n, n]);
    for v in &mut a.data {
        *v = stream.next_gaussian();
    }

    let mut q = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        q.set2(i, i, 1.0);
    }

    let mut v = vec![0.0; n];
    for k in 0..n {
        let norm: f64 = (k..n).map(|i| a.at2(i, k) * a.at2(i, k)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let sign = if a.at2(k, k) >= 0.0 { 1.0 } else { -1.0 };
        v[k] = a.at2(k, k) + sign * norm;
        for i in k + 1..n {
            v[i] = a.at2(i, k);
        }
        let vsq: f64 = v[k..n].iter().map(|x| x * x).sum();
        if vsq == 0.0 {
            continue;
        }

        // A := H A for the reflector H = I - 2 v v^T / (v^T v).
        for j in k..n {
            let dot: f64 = (k..n).map(|i| v[i] * a.at2(i, j)).sum();
            let scale = 2.0 * dot / vsq;
            for i in k..n {
                let updated = a.at2(i, j) - scale * v[i];
                a.set2(i, j, updated);
            }
        }
        // Q := Q H, accumulating the product of reflectors.
        for i in 0..n {
            let row = q.row_mut(i);
            let dot: f64 = (k..n).map(|j| row[j] * v[j]).sum();
            let scale = 2.0 * dot / vsq;
            for j in k..n {
                row[j] -= scale * v[j];
            }
        }
    }

    // Flip columns where R has a negative diagonal entry.
    for k in 0..n {
        if a.at2(k, k) < 0.0 {
            for i in 0..n {
                let flipped = -q.at2(i, k);
                q.set2(i, k, flipped);
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        for n in [1usize, 2, 5, 16, 33] {
            let mut stream = Stream::derived(7, &[rng::tag("orth-test"), n as u64]);
            let q = orthogonal(n, &mut stream);
            let mut worst = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|r| q.at2(r, i) * q.at2(r, j)).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((dot - target).abs());
                }
            }
            assert!(worst < 1e-10, "n={n}: max |Q^T Q - I| = {worst:e}");
        }
    }

    #[test]
    fn orthogonal_rows_are_orthonormal_too() {
        let mut stream = Stream::new(99);
        let q = orthogonal(12, &mut stream);
        for i in 0..12 {
            for j in 0..12 {
                let dot: f64 = (0..12).map(|c| q.at2(i, c) * q.at2(j, c)).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((dot - target).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn initializers_are_seed_deterministic() {
        let a = orthogonal(8, &mut Stream::new(5));
        let b = orthogonal(8, &mut Stream::new(5));
        assert_eq!(a, b);
        let c = orthogonal(8, &mut Stream::new(6));
        assert_ne!(a, c);

        let g1 = glorot_uniform(10, 20, &mut Stream::new(5));
        let g2 = glorot_uniform(10, 20, &mut Stream::new(5));
        assert_eq!(g1, g2);
    }

    #[test]
    fn glorot_respects_its_limit_and_variance() {
        let (fan_in, fan_out) = (200, 80);
        let t = glorot_uniform(fan_in, fan_out, &mut Stream::new(31));
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        assert!(t.data.iter().all(|v| v.abs() <= limit));
        let mean = t.data.iter().sum::<f64>() / t.numel() as f64;
        let var = t.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t.numel() as f64;
        let expected_var = limit * limit / 3.0;
        assert!(mean.abs() < 0.01 * limit);
        assert!((var - expected_var).abs() < 0.05 * expected_var, "var {var} vs {expected_var}");
    }
}
