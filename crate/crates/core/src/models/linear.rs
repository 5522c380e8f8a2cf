use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::numkit::{gemm, softmax, softmax_cross_entropy, Matrix, Rng, Trans};

/// A linear model over interpretable features: one bias and one weight
/// column per class. Logits are `b + z^T w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearExplanation {
    /// Length `classes`.
    pub bias: Vec<f64>,
    /// `z_dim × classes`.
    pub weights: Matrix,
}

impl LinearExplanation {
    pub fn new(bias: Vec<f64>, weights: Matrix) -> Result<Self> {
        dim_check!(
            bias.len() == weights.cols(),
            "{} biases for {} weight columns",
            bias.len(),
            weights.cols()
        );
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numeric("explanation has non-finite entries".into()));
        }
        Ok(LinearExplanation { bias, weights })
    }

    pub fn zeros(z_dim: usize, classes: usize) -> Self {
        LinearExplanation {
            bias: vec![0.0; classes],
            weights: Matrix::zeros(z_dim, classes),
        }
    }

    pub fn z_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    /// Raw outputs `b + z^T w`.
    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        dim_check!(
            z.len() == self.z_dim(),
            "explanation over {} features applied to {}",
            self.z_dim(),
            z.len()
        );
        let mut out = self.bias.clone();
        for (j, &zj) in z.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.weights.row(j)) {
                *o += zj * w;
            }
        }
        Ok(out)
    }

    /// `softmax(b + z^T w)`.
    pub fn predict(&self, z: &[f64]) -> Result<Vec<f64>> {
        softmax(&self.apply(z)?)
    }

    /// Batched raw outputs, `n × classes`.
    pub fn apply_rows(&self, z: &Matrix) -> Result<Matrix> {
        let mut out = z.matmul(&self.weights)?;
        out.add_row_broadcast(&self.bias)?;
        Ok(out)
    }

    /// Number of weights with nonzero value.
    pub fn nonzero_weights(&self) -> usize {
        self.weights.as_slice().iter().filter(|&&w| w != 0.0).count()
    }
}

/// Multinomial logistic regression on `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// `z_dim × classes`.
    pub weights: Matrix,
    /// `1 × classes`.
    pub bias: Matrix,
}

impl LogisticModel {
    /// Bias then weights drawn from `N(0, init_std^2)`, in that order.
    pub fn new(z_dim: usize, classes: usize, init_std: f64, rng: &mut Rng) -> Self {
        let bias = Matrix::from_fn(1, classes, |_, _| init_std * rng.normal());
        let weights = Matrix::from_fn(z_dim, classes, |_, _| init_std * rng.normal());
        LogisticModel { weights, bias }
    }

    pub fn explanation(&self) -> LinearExplanation {
        LinearExplanation {
            bias: self.bias.as_slice().to_vec(),
            weights: self.weights.clone(),
        }
    }

    pub fn logits(&self, z: &Matrix) -> Result<Matrix> {
        dim_check!(
            z.cols() == self.weights.rows(),
            "model expects {} features, got {}",
            self.weights.rows(),
            z.cols()
        );
        let mut out = z.matmul(&self.weights)?;
        out.add_row_broadcast(self.bias.as_slice())?;
        Ok(out)
    }

    pub fn loss_and_grad(&self, z: &Matrix, labels: &[usize]) -> Result<(f64, Vec<Matrix>)> {
        let logits = self.logits(z)?;
        let (loss, d) = softmax_cross_entropy(&logits, labels)?;
        let dw = gemm(z, Trans::Yes, &d, Trans::No)?;
        let db = Matrix::row_vector(&d.column_sums());
        Ok((loss, vec![dw, db]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_and_batch_agree() {
        let e = LinearExplanation::new(
            vec![0.5, -1.0],
            Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.25], vec![0.0, 1.0]]).unwrap(),
        )
        .unwrap();
        let z = [2.0, 1.0, -1.0];
        assert_eq!(e.apply(&z).unwrap(), vec![0.5 + 2.0 - 3.0, -1.0 + 4.0 + 0.25 - 1.0]);
        let rows = e.apply_rows(&Matrix::row_vector(&z)).unwrap();
        assert_eq!(rows.as_slice(), e.apply(&z).unwrap().as_slice());
        assert!(matches!(e.apply(&[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_explanation_is_uniform() {
        let p = LinearExplanation::zeros(4, 5).predict(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }
}
