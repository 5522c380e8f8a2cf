//! Elementary layers with hand-derived gradients.

use crate::error::{dim_check, Error, Result};
use crate::numkit::matrix::{gemm, gemm_into, Matrix, Trans};
use crate::numkit::Rng;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    dim_check!(!logits.is_empty(), "softmax of empty vector");
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Lowest index among maximal entries.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fused softmax + mean cross-entropy over a batch of logits.
///
/// Returns the mean loss and its gradient w.r.t. the logits, `(p - onehot(y)) / n`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    dim_check!(
        logits.rows() == labels.len(),
        "{} logit rows vs {} labels",
        logits.rows(),
        labels.len()
    );
    let n = labels.len().max(1) as f64;
    let classes = logits.cols();
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Parameter(format!("label {y} >= {classes} classes")));
        }
        let row = grad.row_mut(r);
        let lse = log_sum_exp(row);
        loss += lse - row[y];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() / n;
        }
        row[y] -= 1.0 / n;
    }
    Ok((loss / n, grad))
}

/// One affine layer `y = x W + b`, `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Matrix::zeros(inputs, outputs),
            bias: Matrix::zeros(1, outputs),
        }
    }

    /// Fan-in scaled Gaussian weights (He init), zero bias.
    pub fn kaiming(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let std = (2.0 / inputs.max(1) as f64).sqrt();
        Dense {
            weight: Matrix::from_fn(inputs, outputs, |_, _| std * rng.normal()),
            bias: Matrix::zeros(1, outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        dim_check!(
            x.cols() == self.inputs(),
            "layer expects {} inputs, got {}",
            self.inputs(),
            x.cols()
        );
        let mut out = Matrix::zeros(x.rows(), self.outputs());
        for r in 0..out.rows() {
            out.row_mut(r).copy_from_slice(self.bias.as_slice());
        }
        gemm_into(x, Trans::No, &self.weight, Trans::No, 1.0, &mut out)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

/// Parameters of a fully connected network with ReLU hidden layers and a
/// linear output layer.
#[derive(Debug, Clone)]
pub struct MlpParams {
    layers: Vec<Dense>,
    activation: Activation,
    generation: u64,
}

impl PartialEq for MlpParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.activation == other.activation
    }
}

/// Activations recorded by [`MlpParams::forward`] for backprop.
#[derive(Debug, Clone)]
pub struct MlpCache {
    generation: u64,
    /// Input to each layer (`inputs[0]` is the network input).
    inputs: Vec<Matrix>,
}

impl MlpParams {
    /// `dims = [in, hidden..., out]`.
    pub fn new(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::check_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| Dense::kaiming(w[0], w[1], rng))
            .collect();
        Ok(MlpParams {
            layers,
            activation: Activation::Relu,
            generation: 0,
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        Ok(MlpParams {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            activation: Activation::Relu,
            generation: 0,
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        dim_check!(!layers.is_empty(), "network needs at least one layer");
        for (i, pair) in layers.windows(2).enumerate() {
            dim_check!(
                pair[0].outputs() == pair[1].inputs(),
                "layer {i} outputs {} but layer {} expects {}",
                pair[0].outputs(),
                i + 1,
                pair[1].inputs()
            );
        }
        for (i, l) in layers.iter().enumerate() {
            dim_check!(
                l.bias.shape() == (1, l.outputs()),
                "layer {i} bias shape {:?}",
                l.bias.shape()
            );
        }
        Ok(MlpParams {
            layers,
            activation: Activation::Relu,
            generation: 0,
        })
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        dim_check!(dims.len() >= 2, "need at least input and output dims");
        dim_check!(dims.iter().all(|&d| d > 0), "zero-width layer in {dims:?}");
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs()];
        d.extend(self.layers.iter().map(Dense::outputs));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation += 1;
        &mut self.layers
    }

    /// Parameter tensors in `[w0, b0, w1, b1, ...]` order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    /// Mutable parameter tensors; invalidates outstanding caches.
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Which tensors are weights (subject to L2) rather than biases.
    pub fn weight_mask(&self) -> Vec<bool> {
        self.layers.iter().flat_map(|_| [true, false]).collect()
    }

    /// Batched forward pass: `x` is `n × in`, logits are `n × out`.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        dim_check!(
            x.cols() == self.input_dim(),
            "network expects {} inputs, got {}",
            self.input_dim(),
            x.cols()
        );
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.forward(&h)?;
            if i < last {
                match self.activation {
                    Activation::Relu => out.as_mut_slice().iter_mut().for_each(|v| {
                        if *v < 0.0 {
                            *v = 0.0
                        }
                    }),
                }
            }
            inputs.push(std::mem::replace(&mut h, out));
        }
        Ok((
            h,
            MlpCache {
                generation: self.generation,
                inputs,
            },
        ))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        dim_check!(
            x.cols() == self.input_dim(),
            "network expects {} inputs, got {}",
            self.input_dim(),
            x.cols()
        );
        let mut h = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            h.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(&Matrix::row_vector(x))?.into_vec())
    }

    /// Backprop `d loss / d logits` through the cached forward pass.
    ///
    /// Returns gradients in [`MlpParams::tensors`] order, plus the gradient
    /// with respect to the network input when `want_input_grad` is set.
    pub fn backward(
        &self,
        cache: &MlpCache,
        output_grad: &Matrix,
        want_input_grad: bool,
    ) -> Result<(Vec<Matrix>, Option<Matrix>)> {
        if cache.generation != self.generation || cache.inputs.len() != self.layers.len() {
            return Err(Error::Contract(
                "cache was not produced by a forward pass of these parameters".into(),
            ));
        }
        let n = cache.inputs[0].rows();
        dim_check!(
            output_grad.shape() == (n, self.output_dim()),
            "output gradient {:?} vs expected ({n}, {})",
            output_grad.shape(),
            self.output_dim()
        );
        for (l, inp) in self.layers.iter().zip(&cache.inputs) {
            if inp.shape() != (n, l.inputs()) {
                return Err(Error::Contract("cache shapes do not match parameters".into()));
            }
        }

        let mut grads = vec![Matrix::zeros(0, 0); 2 * self.layers.len()];
        let mut delta = output_grad.clone();
        let mut input_grad = None;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &cache.inputs[i];
            grads[2 * i] = gemm(input, Trans::Yes, &delta, Trans::No)?;
            grads[2 * i + 1] = Matrix::row_vector(&delta.column_sums());
            if i > 0 || want_input_grad {
                let mut prev = gemm(&delta, Trans::No, &layer.weight, Trans::Yes)?;
                if i > 0 {
                    // ReLU mask from the post-activation value stored as the next input.
                    for (g, &a) in prev.as_mut_slice().iter_mut().zip(input.as_slice()) {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    delta = prev;
                } else {
                    input_grad = Some(prev);
                }
            }
        }
        Ok((grads, input_grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::gradcheck::grad_check;

    #[test]
    fn softmax_examples() {
        let u = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for p in u {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = softmax(&[1000.0, 0.0]).unwrap();
        assert!((big[0] - 1.0).abs() < 1e-12 && big[1] < 1e-12);
        let l2 = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert!((l2[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((l2[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(softmax(&[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let p = MlpParams::zeros(&[4, 3, 2]).unwrap();
        assert_eq!(p.forward_one(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_affine_layer() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let b = Matrix::row_vector(&[0.5, -0.5]);
        let p = MlpParams::from_layers(vec![Dense { weight: w, bias: b }]).unwrap();
        let y = p.forward_one(&[1.0, 0.0, -1.0]).unwrap();
        assert_eq!(y, vec![1.0 - 5.0 + 0.5, 2.0 - 6.0 - 0.5]);
    }

    /// Straightforward per-neuron forward pass, independent of the batched path.
    fn naive_forward(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let n = p.layers().len();
        for (li, l) in p.layers().iter().enumerate() {
            let mut out = vec![0.0; l.outputs()];
            for (o, slot) in out.iter_mut().enumerate() {
                let mut s = l.bias[(0, o)];
                for (i, hv) in h.iter().enumerate() {
                    s += hv * l.weight[(i, o)];
                }
                *slot = if li + 1 < n { s.max(0.0) } else { s };
            }
            h = out;
        }
        h
    }

    #[test]
    fn two_layer_forward_matches_naive_oracle() {
        let p = MlpParams::new(&[6, 5, 3], &mut Rng::new(1)).unwrap();
        let mut x = vec![0.0; 6];
        x[2] = 1.0;
        let fast = p.forward_one(&x).unwrap();
        let slow = naive_forward(&p, &x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let p = MlpParams::new(&[3, 4, 2], &mut Rng::new(2)).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let (_, cache) = p.forward(&x).unwrap();
        let (g, _) = p.backward(&cache, &Matrix::zeros(1, 2), false).unwrap();
        assert!(g.iter().all(|m| m.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn affine_squared_loss_gradient_is_closed_form() {
        // L = 0.5 * ||xW + b - y||^2  =>  dW = x^T (yhat - y), db = yhat - y
        let mut rng = Rng::new(9);
        let p = MlpParams::new(&[3, 2], &mut rng).unwrap();
        let x = Matrix::row_vector(&[0.3, -1.2, 2.0]);
        let y = [1.0, -1.0];
        let (yhat, cache) = p.forward(&x).unwrap();
        let resid: Vec<f64> = yhat.row(0).iter().zip(&y).map(|(a, b)| a - b).collect();
        let (g, _) = p.backward(&cache, &Matrix::row_vector(&resid), false).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert!((g[0][(i, j)] - x[(0, i)] * resid[j]).abs() < 1e-14);
            }
        }
        assert_eq!(g[1].as_slice(), resid.as_slice());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut p = MlpParams::new(&[2, 2], &mut Rng::new(0)).unwrap();
        let (_, cache) = p.forward(&Matrix::row_vector(&[1.0, 1.0])).unwrap();
        p.tensors_mut()[0][(0, 0)] += 1.0;
        assert!(matches!(
            p.backward(&cache, &Matrix::zeros(1, 2), false),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn two_layer_backward_matches_finite_differences() {
        let mut rng = Rng::new(11);
        let params = MlpParams::new(&[5, 7, 3], &mut rng).unwrap();
        let x = Matrix::from_fn(4, 5, |_, _| rng.normal());
        let labels = [0usize, 2, 1, 2];
        let loss = |tensors: &[Matrix]| -> Result<(f64, Vec<Matrix>)> {
            let mut p = params.clone();
            for (dst, src) in p.tensors_mut().into_iter().zip(tensors) {
                *dst = src.clone();
            }
            let (logits, cache) = p.forward(&x)?;
            let (l, d) = softmax_cross_entropy(&logits, &labels)?;
            let (g, _) = p.backward(&cache, &d, false)?;
            Ok((l, g))
        };
        let init: Vec<Matrix> = params.tensors().into_iter().cloned().collect();
        let err = grad_check(loss, &init, 1e-5).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let params = MlpParams::new(&[4, 6, 2], &mut rng).unwrap();
        let x0 = Matrix::from_fn(3, 4, |_, _| rng.normal());
        let labels = [1usize, 0, 1];
        let loss = |t: &[Matrix]| -> Result<(f64, Vec<Matrix>)> {
            let (logits, cache) = params.forward(&t[0])?;
            let (l, d) = softmax_cross_entropy(&logits, &labels)?;
            let (_, gx) = params.backward(&cache, &d, true)?;
            Ok((l, vec![gx.unwrap()]))
        };
        assert!(grad_check(loss, &[x0], 1e-5).unwrap() < 1e-4);
    }
}
