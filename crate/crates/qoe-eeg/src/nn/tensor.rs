//! Dense row-major tensors and the named parameter store.

use std::collections::HashMap;

use super::NnError;

/// A row-major tensor of doubles.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor, NnError> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(NnError::ShapeMismatch {
                detail: format!("{} values for shape {shape:?}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Row count of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn at2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn set2(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.shape[1] + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.shape[1];
        &mut self.data[r * c..(r + 1) * c]
    }

    /// `self [m,k] x other [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = Tensor::zeros(vec![m, n]);
        for i in 0..m {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(p);
                for (j, &b) in b_row.iter().enumerate() {
                    out_row[j] += a * b;
                }
            }
        }
        out
    }

    /// `self [m,k] x other^T, other [n,k] -> [m,n]`.
    pub fn matmul_transpose_b(&self, other: &Tensor) -> Tensor {
        let (m, k) = (self.shape[0], self.shape[1]);
        let (n, k2) = (other.shape[0], other.shape[1]);
        assert_eq!(k, k2, "matmul_transpose_b inner dims {k} vs {k2}");
        let mut out = Tensor::zeros(vec![m, n]);
        for i in 0..m {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (j, out_v) in out_row.iter_mut().enumerate() {
                let b_row = other.row(j);
                *out_v = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    /// `self^T x other, self [k,m], other [k,n] -> [m,n]`.
    pub fn matmul_transpose_a(&self, other: &Tensor) -> Tensor {
        let (k, m) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        assert_eq!(k, k2, "matmul_transpose_a inner dims {k} vs {k2}");
        let mut out = Tensor::zeros(vec![m, n]);
        for p in 0..k {
            let a_row = self.row(p);
            let b_row = other.row(p);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for (j, &b) in b_row.iter().enumerate() {
                    out_row[j] += a * b;
                }
            }
        }
        out
    }
}

/// `y[j] = sum_i x[i] * w[i,j]` for `w` shaped `[in, out]`, accumulated
/// into `y`.
pub(super) fn matvec_acc(x: &[f64], w: &Tensor, y: &mut [f64]) {
    debug_assert_eq!(x.len(), w.shape[0]);
    debug_assert_eq!(y.len(), w.shape[1]);
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (yv, &wv) in y.iter_mut().zip(w.row(i)) {
            *yv += xv * wv;
        }
    }
}

/// `dx[i] = sum_j dy[j] * w[i,j]`, accumulated into `dx`.
pub(super) fn matvec_transpose_acc(dy: &[f64], w: &Tensor, dx: &mut [f64]) {
    debug_assert_eq!(dy.len(), w.shape[1]);
    debug_assert_eq!(dx.len(), w.shape[0]);
    for (i, dxv) in dx.iter_mut().enumerate() {
        *dxv += w.row(i).iter().zip(dy).map(|(w, d)| w * d).sum::<f64>();
    }
}

/// `dw[i,j] += x[i] * dy[j]`.
pub(super) fn outer_acc(x: &[f64], dy: &[f64], dw: &mut Tensor) {
    debug_assert_eq!(x.len(), dw.shape[0]);
    debug_assert_eq!(dy.len(), dw.shape[1]);
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (dwv, &dv) in dw.row_mut(i).iter_mut().zip(dy) {
            *dwv += xv * dv;
        }
    }
}

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    /// Updated by the optimizer. False for batch-norm running stats.
    pub trainable: bool,
    /// Included in the L2 kernel penalty.
    pub regularized: bool,
}

/// Ordered collection of named parameters; order is the checkpoint and
/// optimizer-slot order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    entries: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl Params {
    pub fn new() -> Params {
        Params::default()
    }

    pub fn push(&mut self, param: Param) {
        assert!(
            !self.by_name.contains_key(&param.name),
            "duplicate parameter name {}",
            param.name
        );
        self.by_name.insert(param.name.clone(), self.entries.len());
        self.entries.push(param);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, NnError> {
        self.by_name.get(name).copied().ok_or_else(|| NnError::ShapeMismatch {
            detail: format!("no parameter named {name}"),
        })
    }

    pub fn at(&self, index: usize) -> &Param {
        &self.entries[index]
    }

    pub fn at_mut(&mut self, index: usize) -> &mut Param {
        &mut self.entries[index]
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NnError> {
        Ok(&self.entries[self.index_of(name)?].tensor)
    }

    /// Total value count, split into (trainable, all).
    pub fn count_values(&self) -> (usize, usize) {
        let total: usize = self.entries.iter().map(|p| p.tensor.numel()).sum();
        let trainable: usize =
            self.entries.iter().filter(|p| p.trainable).map(|p| p.tensor.numel()).sum();
        (trainable, total)
    }
}

/// Gradient tensors aligned index-for-index with a `Params`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &Params) -> Gradients {
        Gradients {
            tensors: params.iter().map(|p| Tensor::zeros(p.tensor.shape.clone())).collect(),
        }
    }

    pub fn at(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn at_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.tensors[index]
    }

    /// `self += other`, used when summing per-example contributions.
    pub fn add_assign(&mut self, other: &Gradients) {
        assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (av, bv) in a.data.iter_mut().zip(&b.data) {
                *av += bv;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v *= factor;
            }
        }
    }
}
