use crate::data::corrupt::column_variances;
use crate::data::{
    inject_noise_calibrated, random_kept_dims, subsample_features, take_fraction, Corpus, Dataset, FeatureView,
};
use crate::error::Result;
use crate::experiments::report::format_condition;
use crate::experiments::{run_trials, Experiment, Failure, Row, SweepConfig, SweepReport, TrialOutput};
use crate::lime::{fit_explanation, sample_neighborhood, LimeConfig, Neighborhood};
use crate::models::{evaluate, train, ModelKind, TrainConfig};
use crate::numkit::{argmax, tag, Matrix, Rng};

impl TrialOutput {
    fn fail(&mut self, experiment: Experiment, condition: Option<f64>, model: &str, trial: usize, err: impl ToString) {
        self.failures.push(Failure {
            experiment: experiment.as_str().into(),
            condition: condition.map(format_condition),
            model: model.into(),
            trial,
            error: err.to_string(),
        });
    }

    fn row(&mut self, experiment: Experiment, condition: f64, model: &str, trial: usize, metric: &str, value: f64) {
        self.rows
            .push(Row::new(experiment.as_str(), condition, model, trial, metric, value));
    }
}

fn train_config(config: &SweepConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        eval_every: 0,
        ..config.train.clone()
    }
}

fn fit_and_test(
    kind: ModelKind,
    config: &SweepConfig,
    seed: u64,
    train_set: &Dataset,
    eval_set: &Dataset,
) -> Result<f64> {
    let (model, _) = train(kind, &config.arch, train_set, None, &train_config(config, seed))?;
    Ok(evaluate(&model, eval_set)?.0)
}

/// Per-condition features for a corruption sweep: the interpretable
/// features CEN trains and is tested on, and how LIME's neighborhood
/// features and the explained instance are transformed.
struct Condition {
    value: f64,
    train_z: Matrix,
    test_z: Matrix,
    neighbors: NeighborTransform,
}

enum NeighborTransform {
    /// Calibrated noise on every perturbed sample.
    Noise { signal_variance: Vec<f64>, snr: f64, stream: u64 },
    /// Keep these feature columns.
    Columns(Vec<usize>),
}

impl NeighborTransform {
    fn apply(&self, nb: &Neighborhood, instance: usize) -> Result<Matrix> {
        match self {
            NeighborTransform::Noise {
                signal_variance,
                snr,
                stream,
            } => {
                let seed = crate::numkit::derive_seed(*stream, &[instance as u64]);
                inject_noise_calibrated(nb.z(), signal_variance, *snr, seed)
            }
            NeighborTransform::Columns(kept) => nb.z().select_columns(kept),
        }
    }
}

/// Shared body of the noise and feature sweeps for one trial.
fn corruption_trial(
    experiment: Experiment,
    view: &FeatureView,
    config: &SweepConfig,
    trial: usize,
    conditions: Vec<Result<Condition>>,
) -> TrialOutput {
    let mut out = TrialOutput::default();
    let t = trial as u64;
    let baseline = match train(
        ModelKind::Mlp,
        &config.arch,
        &view.train,
        None,
        &train_config(config, config.stream(experiment, &[tag("baseline"), t])),
    ) {
        Ok((m, _)) => m,
        Err(e) => {
            out.fail(experiment, None, "mlp", trial, e);
            return out;
        }
    };
    let baseline_error = match evaluate(&baseline, &view.test) {
        Ok(r) => r.0,
        Err(e) => {
            out.fail(experiment, None, "mlp", trial, e);
            return out;
        }
    };

    let mut ready = Vec::new();
    for cond in conditions {
        let cond = match cond {
            Ok(c) => c,
            Err(e) => {
                out.fail(experiment, None, "all", trial, e);
                continue;
            }
        };
        out.row(experiment, cond.value, "mlp", trial, "test_error", baseline_error);
        let cen_error = view.train.with_features(cond.train_z.clone(), view.kind).and_then(|tr| {
            let te = view.test.with_features(cond.test_z.clone(), view.kind)?;
            let seed = config.stream(experiment, &[tag("cen"), cond.value.to_bits(), t]);
            fit_and_test(ModelKind::Cen, config, seed, &tr, &te)
        });
        match cen_error {
            Ok(e) => out.row(experiment, cond.value, "cen", trial, "test_error", e),
            Err(e) => out.fail(experiment, Some(cond.value), "cen", trial, e),
        }
        ready.push(cond);
    }

    let subset_size = config.lime_test_subsample.min(view.test.len());
    let subset = Rng::new(config.stream(experiment, &[tag("lime-subset"), t])).choose_sorted(view.test.len(), subset_size);
    let mut wrong = vec![0usize; ready.len()];
    let mut agree = vec![0usize; ready.len()];
    let mut lime_failed = vec![false; ready.len()];
    for &i in &subset {
        let lime_cfg = LimeConfig {
            seed: config.stream(experiment, &[tag("lime"), t, i as u64]),
            ..config.lime.clone()
        };
        let nb = match sample_neighborhood(&baseline, view.test.x().row(i), view.map.as_ref(), &lime_cfg) {
            Ok(nb) => nb,
            Err(e) => {
                out.fail(experiment, None, "lime", trial, e);
                return out;
            }
        };
        let baseline_pred = argmax(nb.targets().row(0));
        for (c, cond) in ready.iter().enumerate() {
            if lime_failed[c] {
                continue;
            }
            let fitted = cond.neighbors.apply(&nb, i).and_then(|mut z| {
                z.row_mut(0).copy_from_slice(cond.test_z.row(i));
                let local = nb.with_features(z, &lime_cfg.kernel)?;
                let expl = fit_explanation(&local, &lime_cfg)?;
                expl.apply(cond.test_z.row(i))
            });
            match fitted {
                Ok(g) => {
                    let pred = argmax(&g);
                    wrong[c] += usize::from(pred != view.test.y()[i]);
                    agree[c] += usize::from(pred == baseline_pred);
                }
                Err(e) => {
                    lime_failed[c] = true;
                    out.fail(experiment, Some(cond.value), "lime", trial, e);
                }
            }
        }
    }
    let n = subset.len() as f64;
    for (c, cond) in ready.iter().enumerate() {
        if !lime_failed[c] {
            out.row(experiment, cond.value, "lime", trial, "test_error", wrong[c] as f64 / n);
            out.row(experiment, cond.value, "lime", trial, "fidelity", agree[c] as f64 / n);
        }
    }
    out
}

/// Noise sweep: explanations of a fixed baseline fitted over noisy
/// features, against CEN trained on the same noisy features.
///
/// Rows per `(snr, trial)`: `mlp/test_error` (the baseline, which never
/// sees `z`), `cen/test_error`, `lime/test_error` and `lime/fidelity`.
pub fn run_noise_sweep(corpus: &Corpus, config: &SweepConfig) -> Result<SweepReport> {
    let view = corpus.primary();
    let signal_variance = column_variances(view.train.z());
    let exp = Experiment::Noise;
    run_trials(config, |trial| {
        let t = trial as u64;
        let conditions = config
            .snr_levels
            .iter()
            .map(|&snr| {
                let bits = snr.to_bits();
                let noisy = |z: &Matrix, split: &str| {
                    inject_noise_calibrated(z, &signal_variance, snr, config.stream(exp, &[tag(split), bits, t]))
                };
                Ok(Condition {
                    value: snr,
                    train_z: noisy(view.train.z(), "train")?,
                    test_z: noisy(view.test.z(), "test")?,
                    neighbors: NeighborTransform::Noise {
                        signal_variance: signal_variance.clone(),
                        snr,
                        stream: config.stream(exp, &[tag("lime-noise"), bits, t]),
                    },
                })
            })
            .collect();
        corruption_trial(exp, view, config, trial, conditions)
    })
}

/// Feature sweep: as the noise sweep, with a random kept fraction of the
/// feature dimensions as the condition.
pub fn run_feature_sweep(corpus: &Corpus, config: &SweepConfig) -> Result<SweepReport> {
    let view = corpus.primary();
    let exp = Experiment::Features;
    run_trials(config, |trial| {
        let t = trial as u64;
        let conditions = config
            .feature_fractions
            .iter()
            .map(|&fraction| {
                let kept = random_kept_dims(
                    view.z_dim(),
                    fraction,
                    config.stream(exp, &[tag("kept"), fraction.to_bits(), t]),
                )?;
                Ok(Condition {
                    value: fraction,
                    train_z: subsample_features(view.train.z(), &kept)?,
                    test_z: subsample_features(view.test.z(), &kept)?,
                    neighbors: NeighborTransform::Columns(kept),
                })
            })
            .collect();
        corruption_trial(exp, view, config, trial, conditions)
    })
}

/// Validation error of every model kind trained on stratified fractions of
/// the training split. Models within a `(fraction, trial)` share batch order.
pub fn run_sample_complexity(corpus: &Corpus, config: &SweepConfig) -> Result<SweepReport> {
    let view = corpus.primary();
    let exp = Experiment::Samples;
    run_trials(config, |trial| {
        let t = trial as u64;
        let mut out = TrialOutput::default();
        for &fraction in &config.data_fractions {
            let bits = fraction.to_bits();
            let subset = match take_fraction(&view.train, fraction, config.stream(exp, &[tag("subset"), bits, t])) {
                Ok(s) => s,
                Err(e) => {
                    out.fail(exp, Some(fraction), "all", trial, e);
                    continue;
                }
            };
            let seed = config.stream(exp, &[tag("train"), bits, t]);
            for kind in ModelKind::ALL {
                match fit_and_test(kind, config, seed, &subset, &view.val) {
                    Ok(e) => out.row(exp, fraction, kind.as_str(), trial, "val_error", e),
                    Err(e) => out.fail(exp, Some(fraction), kind.as_str(), trial, e),
                }
            }
        }
        out
    })
}

/// Test error of logistic regression, MoE and CEN on every feature view,
/// plus the MLP baseline on raw inputs. Model tags are `<kind>_<view>`.
pub fn run_table(corpus: &Corpus, config: &SweepConfig) -> Result<SweepReport> {
    let exp = Experiment::Table;
    run_trials(config, |trial| {
        let mut out = TrialOutput::default();
        let seed = config.stream(exp, &[tag("train"), trial as u64]);
        let primary = corpus.primary();
        match fit_and_test(ModelKind::Mlp, config, seed, &primary.train, &primary.test) {
            Ok(e) => out.row(exp, 0.0, "mlp", trial, "test_error", e),
            Err(e) => out.fail(exp, None, "mlp", trial, e),
        }
        for view in &corpus.views {
            for kind in [ModelKind::Logistic, ModelKind::Moe, ModelKind::Cen] {
                let name = format!("{}_{}", kind.as_str(), view.kind.as_str());
                match fit_and_test(kind, config, seed, &view.train, &view.test) {
                    Ok(e) => out.row(exp, 0.0, &name, trial, "test_error", e),
                    Err(e) => out.fail(exp, None, &name, trial, e),
                }
            }
        }
        out
    })
}

/// Per-epoch curves of the MLP baseline and CEN trained with the same batch
/// order. The condition column holds the epoch (0 is the initialization).
pub fn convergence_compare(corpus: &Corpus, config: &SweepConfig) -> Result<SweepReport> {
    let view = corpus.primary();
    let exp = Experiment::Convergence;
    run_trials(config, |trial| {
        let mut out = TrialOutput::default();
        let cfg = TrainConfig {
            seed: config.stream(exp, &[tag("train"), trial as u64]),
            eval_every: config.train.eval_every.max(1),
            ..config.train.clone()
        };
        for kind in [ModelKind::Mlp, ModelKind::Cen] {
            match train(kind, &config.arch, &view.train, Some(&view.val), &cfg) {
                Ok((_, log)) => {
                    for e in &log.entries {
                        let epoch = e.epoch as f64;
                        out.row(exp, epoch, kind.as_str(), trial, "train_error", e.train_error);
                        out.row(exp, epoch, kind.as_str(), trial, "train_loss", e.train_loss);
                        if let Some(v) = e.val_error {
                            out.row(exp, epoch, kind.as_str(), trial, "val_error", v);
                        }
                    }
                }
                Err(e) => out.fail(exp, None, kind.as_str(), trial, e),
            }
        }
        out
    })
}
