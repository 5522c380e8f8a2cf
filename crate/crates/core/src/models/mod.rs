//! Classifiers over `(x, z)`: logistic regression on `z`, an MLP on `x`,
//! a mixture of experts and the contextual explanation network.

mod cen;
mod checkpoint;
mod linear;
mod moe;
mod train;

use std::fmt;
use std::str::FromStr;

pub use cen::{AttentionVector, CenModel, Dictionary};
pub use checkpoint::Checkpoint;
pub use linear::{LinearExplanation, LogisticModel};
pub use moe::MoeModel;
pub use train::{evaluate, train, train_model, ConvergenceLog, LogEntry, TrainConfig, TrainStep};

use crate::error::{dim_check, Error, Result};
use crate::numkit::{softmax_cross_entropy, softmax_rows, tag, Matrix, MlpParams, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Logistic,
    Mlp,
    Moe,
    Cen,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Logistic, ModelKind::Mlp, ModelKind::Moe, ModelKind::Cen];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logistic => "lr",
            ModelKind::Mlp => "mlp",
            ModelKind::Moe => "moe",
            ModelKind::Cen => "cen",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown model kind `{s}` (expected lr, mlp, moe or cen)")))
    }
}

/// Network shapes shared by the model kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    /// Hidden widths of the MLP baseline, the CEN encoder and the MoE gate.
    pub hidden: Vec<usize>,
    /// Dictionary size `K`.
    pub components: usize,
    /// Standard deviation of the dictionary and logistic initialization.
    pub init_std: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden: vec![256, 128],
            components: 16,
            init_std: 0.01,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::Parameter("components must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Parameter("hidden widths must be positive".into()));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::Parameter(format!("init_std must be finite and >= 0, got {}", self.init_std)));
        }
        Ok(())
    }
}

/// Anything that maps a batch of `(x, z)` rows to class probabilities.
/// Implementations must be safe to call concurrently.
pub trait Predictor: Send + Sync {
    fn classes(&self) -> usize;

    /// `n × classes` probabilities.
    fn predict_proba(&self, x: &Matrix, z: &Matrix) -> Result<Matrix>;
}

/// A trained or freshly initialized classifier of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Logistic(LogisticModel),
    Mlp(MlpParams),
    Moe(MoeModel),
    Cen(CenModel),
}

impl Model {
    /// Seeded initialization. Streams: `network` for the MLP baseline,
    /// `encoder` for the CEN encoder and MoE gate, `dictionary` for the
    /// dictionary and the logistic model (bias drawn before weights, so a
    /// one-component dictionary matches logistic regression exactly).
    pub fn init(kind: ModelKind, arch: &Architecture, x_dim: usize, z_dim: usize, classes: usize, seed: u64) -> Result<Model> {
        arch.validate()?;
        if classes < 2 {
            return Err(Error::Parameter(format!("need at least 2 classes, got {classes}")));
        }
        let root = Rng::new(seed);
        let net_dims = |out: usize| -> Vec<usize> {
            let mut d = vec![x_dim];
            d.extend(&arch.hidden);
            d.push(out);
            d
        };
        Ok(match kind {
            ModelKind::Logistic => {
                let mut rng = root.derive(&[tag("dictionary")]);
                Model::Logistic(LogisticModel::new(z_dim, classes, arch.init_std, &mut rng))
            }
            ModelKind::Mlp => {
                let mut rng = root.derive(&[tag("network")]);
                Model::Mlp(MlpParams::new(&net_dims(classes), &mut rng)?)
            }
            ModelKind::Moe | ModelKind::Cen => {
                let encoder = MlpParams::new(&net_dims(arch.components), &mut root.derive(&[tag("encoder")]))?;
                let mut rng = root.derive(&[tag("dictionary")]);
                let dict = Dictionary::random(arch.components, z_dim, classes, arch.init_std, &mut rng);
                if kind == ModelKind::Cen {
                    Model::Cen(CenModel::new(encoder, dict)?)
                } else {
                    Model::Moe(MoeModel::new(encoder, dict)?)
                }
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Logistic(_) => ModelKind::Logistic,
            Model::Mlp(_) => ModelKind::Mlp,
            Model::Moe(_) => ModelKind::Moe,
            Model::Cen(_) => ModelKind::Cen,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Model::Logistic(m) => m.bias.cols(),
            Model::Mlp(m) => m.output_dim(),
            Model::Moe(m) => m.classes(),
            Model::Cen(m) => m.classes(),
        }
    }

    /// Raw-input width, or `None` when the model ignores `x`.
    pub fn x_dim(&self) -> Option<usize> {
        match self {
            Model::Logistic(_) => None,
            Model::Mlp(m) => Some(m.input_dim()),
            Model::Moe(m) => Some(m.gate.input_dim()),
            Model::Cen(m) => Some(m.encoder.input_dim()),
        }
    }

    /// Interpretable-feature width, or `None` when the model ignores `z`.
    pub fn z_dim(&self) -> Option<usize> {
        match self {
            Model::Logistic(m) => Some(m.weights.rows()),
            Model::Mlp(_) => None,
            Model::Moe(m) => Some(m.experts.z_dim()),
            Model::Cen(m) => Some(m.dictionary.z_dim()),
        }
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        match self {
            Model::Logistic(m) => vec![&m.weights, &m.bias],
            Model::Mlp(m) => m.tensors(),
            Model::Moe(m) => m.tensors(),
            Model::Cen(m) => m.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Model::Logistic(m) => vec![&mut m.weights, &mut m.bias],
            Model::Mlp(m) => m.tensors_mut(),
            Model::Moe(m) => m.tensors_mut(),
            Model::Cen(m) => m.tensors_mut(),
        }
    }

    /// Tensors subject to L2 decay: network and dictionary weights, never biases.
    pub fn decay_mask(&self) -> Vec<bool> {
        match self {
            Model::Logistic(_) => vec![true, false],
            Model::Mlp(m) => m.weight_mask(),
            Model::Moe(m) => m.decay_mask(),
            Model::Cen(m) => m.decay_mask(),
        }
    }

    /// Mean cross-entropy of a batch and its gradient in [`Model::tensors`] order.
    pub fn loss_and_grad(&self, x: &Matrix, z: &Matrix, labels: &[usize]) -> Result<(f64, Vec<Matrix>)> {
        match self {
            Model::Logistic(m) => m.loss_and_grad(z, labels),
            Model::Mlp(m) => {
                let (logits, cache) = m.forward(x)?;
                let (loss, d) = softmax_cross_entropy(&logits, labels)?;
                Ok((loss, m.backward(&cache, &d, false)?.0))
            }
            Model::Moe(m) => m.loss_and_grad(x, z, labels),
            Model::Cen(m) => m.loss_and_grad(x, z, labels),
        }
    }

    fn check_inputs(&self, x: &Matrix, z: &Matrix) -> Result<()> {
        dim_check!(x.rows() == z.rows(), "{} inputs vs {} feature rows", x.rows(), z.rows());
        if let Some(d) = self.x_dim() {
            dim_check!(x.cols() == d, "model expects {d} raw inputs, got {}", x.cols());
        }
        if let Some(d) = self.z_dim() {
            dim_check!(z.cols() == d, "model expects {d} features, got {}", z.cols());
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &Matrix, z: &Matrix) -> Result<Matrix> {
        self.check_inputs(x, z)?;
        match self {
            Model::Logistic(m) => Ok(softmax_rows(&m.logits(z)?)),
            Model::Mlp(m) => Ok(softmax_rows(&m.predict(x)?)),
            Model::Moe(m) => m.predict_rows(x, z),
            Model::Cen(m) => m.predict_rows(x, z),
        }
    }
}

impl Predictor for Model {
    fn classes(&self) -> usize {
        Model::classes(self)
    }

    fn predict_proba(&self, x: &Matrix, z: &Matrix) -> Result<Matrix> {
        Model::predict_proba(self, x, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("cnn".parse::<ModelKind>().is_err());
    }

    #[test]
    fn one_component_dictionary_matches_logistic_init() {
        let arch = Architecture {
            hidden: vec![3],
            components: 1,
            init_std: 0.1,
        };
        let lr = Model::init(ModelKind::Logistic, &arch, 5, 4, 3, 9).unwrap();
        let cen = Model::init(ModelKind::Cen, &arch, 5, 4, 3, 9).unwrap();
        let (Model::Logistic(lr), Model::Cen(cen)) = (lr, cen) else { unreachable!() };
        assert_eq!(cen.dictionary.bias.as_slice(), lr.bias.as_slice());
        assert_eq!(cen.dictionary.weights, lr.weights);
    }

    #[test]
    fn predictions_are_distributions() {
        let arch = Architecture {
            hidden: vec![6],
            components: 3,
            init_std: 0.5,
        };
        let mut rng = Rng::new(1);
        let x = Matrix::from_fn(4, 5, |_, _| rng.normal());
        let z = Matrix::from_fn(4, 2, |_, _| rng.normal());
        for kind in ModelKind::ALL {
            let m = Model::init(kind, &arch, 5, 2, 3, 2).unwrap();
            let p = m.predict_proba(&x, &z).unwrap();
            assert_eq!(p.shape(), (4, 3));
            for i in 0..4 {
                assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            assert_eq!(m.tensors().len(), m.decay_mask().len());
            assert!(m.predict_proba(&x, &Matrix::zeros(4, 7)).is_err() || kind == ModelKind::Mlp);
        }
    }
}
