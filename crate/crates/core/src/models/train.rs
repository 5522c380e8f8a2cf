use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::models::{Architecture, Model, ModelKind};
use crate::numkit::{argmax, tag, Matrix, Rng, Sgd};

/// Mini-batch momentum SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Coefficient `λ` of `λ/2 · ‖W‖²` over weight tensors.
    pub l2_penalty: f64,
    pub seed: u64,
    /// Log every this many epochs (plus before training and after the last
    /// epoch). Zero logs only the final epoch.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 64,
            epochs: 30,
            l2_penalty: 1e-4,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::Parameter(format!("l2_penalty must be >= 0, got {}", self.l2_penalty)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Completed epochs; 0 is the initialization.
    pub epoch: usize,
    pub train_error: f64,
    pub train_loss: f64,
    pub val_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLog {
    pub entries: Vec<LogEntry>,
}

impl ConvergenceLog {
    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }

    pub fn train_errors(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.train_error).collect()
    }
}

/// State visible to a training observer after each parameter update.
pub struct TrainStep<'a> {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub model: &'a Model,
    /// Raw inputs and features of the batch just used.
    pub x: &'a Matrix,
    pub z: &'a Matrix,
}

/// Initializes a `kind` model from `config.seed` and trains it.
pub fn train(
    kind: ModelKind,
    arch: &Architecture,
    dataset: &Dataset,
    val: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(Model, ConvergenceLog)> {
    let model = Model::init(kind, arch, dataset.x_dim(), dataset.z_dim(), dataset.classes(), config.seed)?;
    train_model(model, dataset, val, config, |_| Ok(()))
}

/// Trains an existing model. Batch order depends only on `config.seed` and
/// the epoch, so models trained with the same seed see identical batches.
pub fn train_model(
    mut model: Model,
    dataset: &Dataset,
    val: Option<&Dataset>,
    config: &TrainConfig,
    mut observer: impl FnMut(&TrainStep<'_>) -> Result<()>,
) -> Result<(Model, ConvergenceLog)> {
    config.validate()?;
    if dataset.split() != Split::Train {
        return Err(Error::Contract(format!("training requires the train split, got {}", dataset.split().as_str())));
    }
    if dataset.is_empty() {
        return Err(Error::Parameter("cannot train on an empty dataset".into()));
    }
    if model.classes() != dataset.classes() {
        return Err(Error::Dimension(format!(
            "model has {} classes, dataset {}",
            model.classes(),
            dataset.classes()
        )));
    }
    let mask = model.decay_mask();
    let mut opt = Sgd::new(config.learning_rate, config.momentum)?;
    let root = Rng::new(config.seed);
    let mut log = ConvergenceLog::default();

    let record = |model: &Model, epoch: usize, log: &mut ConvergenceLog| -> Result<()> {
        let (train_error, train_loss) = evaluate(model, dataset)?;
        let val_error = val.map(|v| evaluate(model, v).map(|r| r.0)).transpose()?;
        log.entries.push(LogEntry {
            epoch,
            train_error,
            train_loss,
            val_error,
        });
        Ok(())
    };

    if config.eval_every > 0 {
        record(&model, 0, &mut log)?;
    }
    let n = dataset.len();
    for epoch in 1..=config.epochs {
        let order = root.derive(&[tag("batches"), epoch as u64]).permutation(n);
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let x = dataset.x().gather_rows(idx);
            let z = dataset.z().gather_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| dataset.y()[i]).collect();
            let (loss, mut grads) = model.loss_and_grad(&x, &z, &y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            if config.l2_penalty > 0.0 {
                for ((g, p), &decay) in grads.iter_mut().zip(model.tensors()).zip(&mask) {
                    if decay {
                        g.axpy(config.l2_penalty, p)?;
                    }
                }
            }
            opt.step(model.tensors_mut(), &grads)?;
            observer(&TrainStep {
                epoch,
                batch: b,
                loss,
                model: &model,
                x: &x,
                z: &z,
            })?;
        }
        let due = config.eval_every > 0 && epoch % config.eval_every == 0;
        if due || epoch == config.epochs {
            record(&model, epoch, &mut log)?;
        }
    }
    if config.epochs == 0 && log.entries.is_empty() {
        record(&model, 0, &mut log)?;
    }
    if let Some(last) = log.last() {
        if !last.train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch: last.epoch,
                loss: last.train_loss,
            });
        }
    }
    Ok((model, log))
}

const EVAL_CHUNK: usize = 2048;

/// `(error rate, mean cross-entropy)` on `dataset`; argmax ties go to the
/// lowest class index.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::Parameter("cannot evaluate on an empty dataset".into()));
    }
    let n = dataset.len();
    let mut wrong = 0usize;
    let mut ce = 0.0;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let p = model.predict_proba(&dataset.x().gather_rows(&idx), &dataset.z().gather_rows(&idx))?;
        for (r, &i) in idx.iter().enumerate() {
            let row = p.row(r);
            let y = dataset.y()[i];
            if argmax(row) != y {
                wrong += 1;
            }
            ce -= row[y].max(f64::MIN_POSITIVE).ln();
        }
    }
    Ok((wrong as f64 / n as f64, ce / n as f64))
}
