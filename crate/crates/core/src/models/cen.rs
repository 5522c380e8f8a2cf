//! Contextual explanation network: an encoder maps `x` to attention over a
//! dictionary of linear models; the prediction applies the attended
//! explanation to `z`.

use crate::error::{dim_check, Error, Result};
use crate::models::linear::LinearExplanation;
use crate::numkit::{gemm, softmax, softmax_cross_entropy, softmax_rows, Matrix, MlpParams, Rng, Trans};

/// Convex weights over dictionary components.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionVector(Vec<f64>);

impl AttentionVector {
    pub const SUM_TOLERANCE: f64 = 1e-10;

    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Dimension("attention over zero components".into()));
        }
        if alpha.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::Contract(format!("attention has a negative or non-finite entry: {alpha:?}")));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Contract(format!("attention sums to {sum}")));
        }
        Ok(AttentionVector(alpha))
    }

    /// Softmax of encoder logits.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        AttentionVector::new(softmax(logits)?)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `K` linear models sharing one feature space.
///
/// Weights are packed `z_dim × (K · classes)` with component `k`, class `c`
/// at column `k * classes + c`, so `Z · W` yields every component's logits
/// in one product.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// `K × classes`.
    pub bias: Matrix,
    /// `z_dim × (K · classes)`.
    pub weights: Matrix,
}

impl Dictionary {
    pub fn new(bias: Matrix, weights: Matrix) -> Result<Self> {
        let (k, c) = bias.shape();
        dim_check!(k >= 1 && c >= 1, "dictionary needs K >= 1 and classes >= 1");
        dim_check!(
            weights.cols() == k * c,
            "weight bank has {} columns, expected K*C = {}",
            weights.cols(),
            k * c
        );
        if !bias.is_finite() || !weights.is_finite() {
            return Err(Error::Numeric("dictionary has non-finite entries".into()));
        }
        Ok(Dictionary { bias, weights })
    }

    /// Bias bank then weight bank from `N(0, init_std^2)`.
    pub fn random(components: usize, z_dim: usize, classes: usize, init_std: f64, rng: &mut Rng) -> Self {
        let bias = Matrix::from_fn(components, classes, |_, _| init_std * rng.normal());
        let weights = Matrix::from_fn(z_dim, components * classes, |_, _| init_std * rng.normal());
        Dictionary { bias, weights }
    }

    pub fn components(&self) -> usize {
        self.bias.rows()
    }

    pub fn classes(&self) -> usize {
        self.bias.cols()
    }

    pub fn z_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn component(&self, k: usize) -> LinearExplanation {
        let c = self.classes();
        LinearExplanation {
            bias: self.bias.row(k).to_vec(),
            weights: Matrix::from_fn(self.z_dim(), c, |j, cls| self.weights[(j, k * c + cls)]),
        }
    }

    /// `sum_k alpha_k (B_k, W_k)`, accumulated in component order.
    pub fn combine(&self, alpha: &AttentionVector) -> Result<LinearExplanation> {
        dim_check!(
            alpha.len() == self.components(),
            "attention over {} components, dictionary has {}",
            alpha.len(),
            self.components()
        );
        let (c, dz) = (self.classes(), self.z_dim());
        let mut bias = vec![0.0; c];
        let mut weights = Matrix::zeros(dz, c);
        for (k, &a) in alpha.as_slice().iter().enumerate() {
            for (b, &v) in bias.iter_mut().zip(self.bias.row(k)) {
                *b += a * v;
            }
            for j in 0..dz {
                let src = &self.weights.row(j)[k * c..(k + 1) * c];
                for (w, &v) in weights.row_mut(j).iter_mut().zip(src) {
                    *w += a * v;
                }
            }
        }
        Ok(LinearExplanation { bias, weights })
    }

    /// Elementwise `[min_k, max_k]` of the weight bank, each `z_dim × classes`.
    pub fn weight_envelope(&self) -> (Matrix, Matrix) {
        let (c, dz) = (self.classes(), self.z_dim());
        let mut lo = Matrix::filled(dz, c, f64::INFINITY);
        let mut hi = Matrix::filled(dz, c, f64::NEG_INFINITY);
        for j in 0..dz {
            for k in 0..self.components() {
                for cls in 0..c {
                    let v = self.weights[(j, k * c + cls)];
                    lo[(j, cls)] = lo[(j, cls)].min(v);
                    hi[(j, cls)] = hi[(j, cls)].max(v);
                }
            }
        }
        (lo, hi)
    }

    /// Per-component logits `Z W + B`, `n × (K · classes)`.
    pub(crate) fn component_logits(&self, z: &Matrix) -> Result<Matrix> {
        dim_check!(
            z.cols() == self.z_dim(),
            "dictionary over {} features, got {}",
            self.z_dim(),
            z.cols()
        );
        let mut s = z.matmul(&self.weights)?;
        s.add_row_broadcast(self.bias.as_slice())?;
        Ok(s)
    }

    /// Gradients `(dB, dW)` from `d loss / d component_logits`.
    pub(crate) fn backward(&self, z: &Matrix, ds: &Matrix) -> Result<(Matrix, Matrix)> {
        let db = Matrix::from_vec(self.components(), self.classes(), ds.column_sums())?;
        let dw = gemm(z, Trans::Yes, ds, Trans::No)?;
        Ok((db, dw))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenModel {
    /// `x → K` attention logits.
    pub encoder: MlpParams,
    pub dictionary: Dictionary,
}

impl CenModel {
    pub fn new(encoder: MlpParams, dictionary: Dictionary) -> Result<Self> {
        dim_check!(
            encoder.output_dim() == dictionary.components(),
            "encoder emits {} logits for {} components",
            encoder.output_dim(),
            dictionary.components()
        );
        Ok(CenModel { encoder, dictionary })
    }

    pub fn components(&self) -> usize {
        self.dictionary.components()
    }

    pub fn classes(&self) -> usize {
        self.dictionary.classes()
    }

    pub fn attend(&self, x: &[f64]) -> Result<AttentionVector> {
        AttentionVector::from_logits(&self.encoder.forward_one(x)?)
    }

    pub fn explain(&self, x: &[f64]) -> Result<LinearExplanation> {
        self.dictionary.combine(&self.attend(x)?)
    }

    /// `softmax(b_x + z^T w_x)` where `(b_x, w_x) = explain(x)`.
    pub fn predict(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.explain(x)?.predict(z)
    }

    /// Attention rows for a batch, `n × K`.
    pub fn attention_rows(&self, x: &Matrix) -> Result<Matrix> {
        Ok(softmax_rows(&self.encoder.predict(x)?))
    }

    /// Batched prediction. Mixing per-component logits equals applying each
    /// row's explanation up to floating-point reassociation.
    pub fn predict_rows(&self, x: &Matrix, z: &Matrix) -> Result<Matrix> {
        dim_check!(x.rows() == z.rows(), "{} inputs vs {} feature rows", x.rows(), z.rows());
        let alpha = self.attention_rows(x)?;
        let s = self.dictionary.component_logits(z)?;
        Ok(softmax_rows(&mix_logits(&alpha, &s, self.classes())))
    }

    /// Tensors: encoder tensors, then dictionary bias bank, then weight bank.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut t = self.encoder.tensors();
        t.push(&self.dictionary.bias);
        t.push(&self.dictionary.weights);
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut t = self.encoder.tensors_mut();
        t.push(&mut self.dictionary.bias);
        t.push(&mut self.dictionary.weights);
        t
    }

    pub fn decay_mask(&self) -> Vec<bool> {
        let mut m = self.encoder.weight_mask();
        m.extend([false, true]);
        m
    }

    /// Mean cross-entropy over the batch and its gradient w.r.t. every
    /// tensor, jointly through encoder and dictionary.
    pub fn loss_and_grad(&self, x: &Matrix, z: &Matrix, labels: &[usize]) -> Result<(f64, Vec<Matrix>)> {
        let (k, c) = (self.components(), self.classes());
        let (enc_logits, cache) = self.encoder.forward(x)?;
        let alpha = softmax_rows(&enc_logits);
        let s = self.dictionary.component_logits(z)?;
        let n = x.rows();

        let (loss, dlogits) = softmax_cross_entropy(&mix_logits(&alpha, &s, c), labels)?;

        let mut ds = Matrix::zeros(n, k * c);
        let mut denc = Matrix::zeros(n, k);
        for i in 0..n {
            let (a, srow, d) = (alpha.row(i), s.row(i), dlogits.row(i));
            let dsrow = ds.row_mut(i);
            let mut dalpha = vec![0.0; k];
            for kk in 0..k {
                let block = &srow[kk * c..(kk + 1) * c];
                dalpha[kk] = block.iter().zip(d).map(|(sv, dv)| sv * dv).sum();
                for (dst, &dv) in dsrow[kk * c..(kk + 1) * c].iter_mut().zip(d) {
                    *dst = a[kk] * dv;
                }
            }
            let mean: f64 = a.iter().zip(&dalpha).map(|(av, dv)| av * dv).sum();
            for (dst, (&av, &dv)) in denc.row_mut(i).iter_mut().zip(a.iter().zip(&dalpha)) {
                *dst = av * (dv - mean);
            }
        }
        let (db, dw) = self.dictionary.backward(z, &ds)?;
        let (mut grads, _) = self.encoder.backward(&cache, &denc, false)?;
        grads.push(db);
        grads.push(dw);
        Ok((loss, grads))
    }
}

/// Row-wise `sum_k alpha_ik s_i[k*C..(k+1)*C]`.
fn mix_logits(alpha: &Matrix, s: &Matrix, classes: usize) -> Matrix {
    let mut logits = Matrix::zeros(alpha.rows(), classes);
    for i in 0..alpha.rows() {
        let (a, srow) = (alpha.row(i), s.row(i));
        let out = logits.row_mut(i);
        for (kk, &ak) in a.iter().enumerate() {
            for (o, &v) in out.iter_mut().zip(&srow[kk * classes..(kk + 1) * classes]) {
                *o += ak * v;
            }
        }
    }
    logits
}
