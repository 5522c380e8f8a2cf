//! Mixture of experts: a gate over `x` mixes the predicted class
//! distributions of `K` logistic experts over `z`.

use crate::error::{dim_check, Error, Result};
use crate::models::cen::Dictionary;
use crate::numkit::{log_sum_exp, softmax, softmax_rows, Matrix, MlpParams};

#[derive(Debug, Clone, PartialEq)]
pub struct MoeModel {
    /// `x → K` gate logits.
    pub gate: MlpParams,
    pub experts: Dictionary,
}

impl MoeModel {
    pub fn new(gate: MlpParams, experts: Dictionary) -> Result<Self> {
        dim_check!(
            gate.output_dim() == experts.components(),
            "gate emits {} logits for {} experts",
            gate.output_dim(),
            experts.components()
        );
        Ok(MoeModel { gate, experts })
    }

    pub fn components(&self) -> usize {
        self.experts.components()
    }

    pub fn classes(&self) -> usize {
        self.experts.classes()
    }

    /// `sum_k gate_k(x) softmax(b_k + z^T W_k)`.
    pub fn predict(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let p = self.predict_rows(&Matrix::row_vector(x), &Matrix::row_vector(z))?;
        Ok(p.into_vec())
    }

    pub fn predict_rows(&self, x: &Matrix, z: &Matrix) -> Result<Matrix> {
        dim_check!(x.rows() == z.rows(), "{} inputs vs {} feature rows", x.rows(), z.rows());
        let (k, c) = (self.components(), self.classes());
        let g = softmax_rows(&self.gate.predict(x)?);
        let s = self.experts.component_logits(z)?;
        let mut out = Matrix::zeros(x.rows(), c);
        for i in 0..x.rows() {
            let row = out.row_mut(i);
            for kk in 0..k {
                let p = softmax(&s.row(i)[kk * c..(kk + 1) * c])?;
                for (o, pv) in row.iter_mut().zip(p) {
                    *o += g[(i, kk)] * pv;
                }
            }
        }
        Ok(out)
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut t = self.gate.tensors();
        t.push(&self.experts.bias);
        t.push(&self.experts.weights);
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut t = self.gate.tensors_mut();
        t.push(&mut self.experts.bias);
        t.push(&mut self.experts.weights);
        t
    }

    pub fn decay_mask(&self) -> Vec<bool> {
        let mut m = self.gate.weight_mask();
        m.extend([false, true]);
        m
    }

    /// Mean negative log mixture likelihood, evaluated in log space.
    ///
    /// With responsibilities `r_k ∝ g_k p_k(y)`, the expert logits receive
    /// `r_k (p_k - onehot(y))` and the gate logits `g - r`.
    pub fn loss_and_grad(&self, x: &Matrix, z: &Matrix, labels: &[usize]) -> Result<(f64, Vec<Matrix>)> {
        dim_check!(x.rows() == labels.len(), "{} inputs vs {} labels", x.rows(), labels.len());
        let (k, c) = (self.components(), self.classes());
        let n = labels.len();
        let inv_n = 1.0 / n.max(1) as f64;
        let (gate_logits, cache) = self.gate.forward(x)?;
        let mut ds = self.experts.component_logits(z)?;
        let mut dgate = Matrix::zeros(n, k);
        let mut loss = 0.0;
        let mut log_g = vec![0.0; k];
        let mut joint = vec![0.0; k];
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::Parameter(format!("label {y} >= {c} classes")));
            }
            let a = gate_logits.row(i);
            let lse_a = log_sum_exp(a);
            for kk in 0..k {
                log_g[kk] = a[kk] - lse_a;
            }
            let srow = ds.row_mut(i);
            for kk in 0..k {
                let block = &mut srow[kk * c..(kk + 1) * c];
                let lse_s = log_sum_exp(block);
                joint[kk] = log_g[kk] + block[y] - lse_s;
                for v in block.iter_mut() {
                    *v = (*v - lse_s).exp();
                }
            }
            let total = log_sum_exp(&joint);
            loss -= total;
            let drow = dgate.row_mut(i);
            for kk in 0..k {
                let r = (joint[kk] - total).exp();
                let block = &mut srow[kk * c..(kk + 1) * c];
                block[y] -= 1.0;
                for v in block.iter_mut() {
                    *v *= r * inv_n;
                }
                drow[kk] = (log_g[kk].exp() - r) * inv_n;
            }
        }
        let (db, dw) = self.experts.backward(z, &ds)?;
        let (mut grads, _) = self.gate.backward(&cache, &dgate, false)?;
        grads.push(db);
        grads.push(dw);
        Ok((loss * inv_n, grads))
    }
}
