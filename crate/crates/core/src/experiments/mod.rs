//! Multi-trial sweeps over noise level, kept-feature fraction and training
//! set size, a model comparison table and convergence curves. Every sweep
//! emits a [`SweepReport`] whose rows depend only on the configuration and
//! seed, never on scheduling.

mod report;
mod sweeps;

use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use report::{Failure, ReportMeta, Row, Summary, SweepReport, CSV_HEADER};
pub use sweeps::{convergence_compare, run_feature_sweep, run_noise_sweep, run_sample_complexity, run_table};

use crate::error::{Error, Result};
use crate::lime::LimeConfig;
use crate::models::{Architecture, TrainConfig};
use crate::numkit::{derive_seed, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Noise,
    Features,
    Samples,
    Table,
    Convergence,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Noise,
        Experiment::Features,
        Experiment::Samples,
        Experiment::Table,
        Experiment::Convergence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Noise => "noise",
            Experiment::Features => "features",
            Experiment::Samples => "samples",
            Experiment::Table => "table",
            Experiment::Convergence => "convergence",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Signal-to-noise ratios; infinity is the clean condition.
    pub snr_levels: Vec<f64>,
    pub feature_fractions: Vec<f64>,
    pub data_fractions: Vec<f64>,
    pub n_trials: usize,
    pub train: TrainConfig,
    pub lime: LimeConfig,
    pub arch: Architecture,
    /// Test instances explained per trial in the noise and feature sweeps.
    pub lime_test_subsample: usize,
    /// Seed base from which every trial stream is derived.
    pub seed: u64,
    /// Concurrent trials.
    pub jobs: usize,
    /// Run only these trial indices.
    pub trials: Option<Vec<usize>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            snr_levels: vec![f64::INFINITY, 8.0, 4.0, 2.0, 1.0, 0.5],
            feature_fractions: vec![1.0, 0.75, 0.5, 0.25, 0.1],
            data_fractions: vec![0.01, 0.02, 0.05, 0.1, 0.2],
            n_trials: 5,
            train: TrainConfig::default(),
            lime: LimeConfig::default(),
            arch: Architecture::default(),
            lime_test_subsample: 500,
            seed: 0,
            jobs: 1,
            trials: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, v: &[f64]| {
            if v.is_empty() {
                Err(Error::Parameter(format!("{name} must not be empty")))
            } else {
                Ok(())
            }
        };
        nonempty("snr_levels", &self.snr_levels)?;
        nonempty("feature_fractions", &self.feature_fractions)?;
        nonempty("data_fractions", &self.data_fractions)?;
        if let Some(s) = self.snr_levels.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Parameter(format!("snr levels must be positive, got {s}")));
        }
        for (name, v) in [("feature_fractions", &self.feature_fractions), ("data_fractions", &self.data_fractions)] {
            if let Some(f) = v.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
                return Err(Error::Parameter(format!("{name} must lie in (0, 1], got {f}")));
            }
        }
        if self.n_trials == 0 {
            return Err(Error::Parameter("n_trials must be >= 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Parameter("jobs must be >= 1".into()));
        }
        if self.lime_test_subsample == 0 {
            return Err(Error::Parameter("lime_test_subsample must be >= 1".into()));
        }
        if let Some(t) = self.trials.iter().flatten().find(|&&t| t >= self.n_trials) {
            return Err(Error::Parameter(format!("trial {t} out of range for {} trials", self.n_trials)));
        }
        self.train.validate()?;
        self.arch.validate()?;
        self.lime.kernel.validate()
    }

    /// SHA-256 over every setting that affects results (not `jobs` or `trials`).
    pub fn config_hash(&self) -> String {
        let canonical = SweepConfig {
            jobs: 1,
            trials: None,
            ..self.clone()
        };
        let digest = Sha256::digest(format!("{canonical:?}").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn trial_indices(&self) -> Vec<usize> {
        match &self.trials {
            Some(t) => {
                let mut t = t.clone();
                t.sort_unstable();
                t.dedup();
                t
            }
            None => (0..self.n_trials).collect(),
        }
    }

    /// Seed of the stream identified by `experiment` and `parts`.
    pub(crate) fn stream(&self, experiment: Experiment, parts: &[u64]) -> u64 {
        let mut tags = vec![tag(experiment.as_str())];
        tags.extend_from_slice(parts);
        derive_seed(self.seed, &tags)
    }

    fn meta(&self, failures: Vec<Failure>) -> ReportMeta {
        ReportMeta {
            seed: self.seed,
            config_hash: self.config_hash(),
            failures,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

/// Outcome of one trial: its rows plus any failed units.
#[derive(Debug, Default)]
pub(crate) struct TrialOutput {
    pub rows: Vec<Row>,
    pub failures: Vec<Failure>,
}

/// Runs `trial` for each selected index on up to `config.jobs` threads and
/// assembles a canonical report.
pub(crate) fn run_trials<F>(config: &SweepConfig, trial: F) -> Result<SweepReport>
where
    F: Fn(usize) -> TrialOutput + Sync,
{
    config.validate()?;
    let indices = config.trial_indices();
    let outputs: Vec<TrialOutput> = if config.jobs == 1 {
        indices.iter().map(|&t| trial(t)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start {} workers: {e}", config.jobs)))?;
        pool.install(|| indices.par_iter().map(|&t| trial(t)).collect())
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outputs {
        rows.extend(o.rows);
        failures.extend(o.failures);
    }
    SweepReport::new(rows, config.meta(failures))
}

/// Runs one experiment by name.
pub fn run_experiment(
    experiment: Experiment,
    corpus: &crate::data::Corpus,
    config: &SweepConfig,
) -> Result<SweepReport> {
    match experiment {
        Experiment::Noise => run_noise_sweep(corpus, config),
        Experiment::Features => run_feature_sweep(corpus, config),
        Experiment::Samples => run_sample_complexity(corpus, config),
        Experiment::Table => run_table(corpus, config),
        Experiment::Convergence => convergence_compare(corpus, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::SyntheticSpec;
    use crate::data::Corpus;
    use crate::models::ModelKind;

    fn corpus() -> Corpus {
        let spec = SyntheticSpec {
            samples: 600,
            z_dim: 8,
            block: 2,
            classes: 3,
            ..SyntheticSpec::default()
        };
        Corpus::synthetic(&spec, 100, 100).unwrap()
    }

    fn small() -> SweepConfig {
        SweepConfig {
            snr_levels: vec![f64::INFINITY, 0.5],
            feature_fractions: vec![1.0, 0.25],
            data_fractions: vec![0.2, 1.0],
            n_trials: 3,
            train: TrainConfig {
                epochs: 3,
                batch_size: 32,
                ..TrainConfig::default()
            },
            lime: LimeConfig {
                n_samples: 60,
                ..LimeConfig::default()
            },
            arch: Architecture {
                hidden: vec![16],
                components: 4,
                ..Architecture::default()
            },
            lime_test_subsample: 10,
            seed: 7,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.as_str().parse::<Experiment>().unwrap(), e);
        }
        assert!("bogus".parse::<Experiment>().is_err());
    }

    #[test]
    fn config_hash_ignores_scheduling() {
        let a = small();
        let b = SweepConfig {
            jobs: 4,
            trials: Some(vec![1]),
            ..small()
        };
        assert_eq!(a.config_hash(), b.config_hash());
        let c = SweepConfig { seed: 8, ..small() };
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn validation() {
        assert!(SweepConfig { snr_levels: vec![0.0], ..small() }.validate().is_err());
        assert!(SweepConfig { data_fractions: vec![1.5], ..small() }.validate().is_err());
        assert!(SweepConfig { jobs: 0, ..small() }.validate().is_err());
        assert!(SweepConfig { trials: Some(vec![3]), ..small() }.validate().is_err());
        assert!(small().validate().is_ok());
    }

    #[test]
    fn noise_sweep_rows_and_reproducibility() {
        let c = corpus();
        let r = run_noise_sweep(&c, &small()).unwrap();
        assert!(r.meta.failures.is_empty(), "{:?}", r.meta.failures);
        // 2 conditions x 3 trials x (mlp, cen, lime error, lime fidelity)
        assert_eq!(r.rows().len(), 2 * 3 * 4);
        for t in 0..3 {
            let base: Vec<f64> = r
                .rows()
                .iter()
                .filter(|row| row.model == "mlp" && row.trial == t)
                .map(|row| row.value)
                .collect();
            assert_eq!(base.len(), 2);
            assert_eq!(base[0], base[1]);
        }
        let again = run_noise_sweep(&c, &SweepConfig { jobs: 3, ..small() }).unwrap();
        assert_eq!(r.rows(), again.rows());
    }

    #[test]
    fn trials_are_independent_of_selection() {
        let c = corpus();
        let all = run_feature_sweep(&c, &small()).unwrap();
        let one = run_feature_sweep(&c, &SweepConfig { trials: Some(vec![2]), ..small() }).unwrap();
        let expected: Vec<Row> = all.rows().iter().filter(|r| r.trial == 2).cloned().collect();
        assert!(!expected.is_empty());
        assert_eq!(one.rows(), &expected[..]);
    }

    #[test]
    fn clean_lime_fidelity_is_high() {
        let c = corpus();
        let r = run_noise_sweep(&c, &SweepConfig { n_trials: 1, ..small() }).unwrap();
        let clean = r.mean("noise", f64::INFINITY, "lime", "fidelity").unwrap();
        assert!(clean >= 0.7, "clean fidelity {clean}");
    }

    #[test]
    fn sample_table_and_convergence_shapes() {
        let c = corpus();
        let cfg = SweepConfig { n_trials: 1, ..small() };
        let s = run_sample_complexity(&c, &cfg).unwrap();
        assert_eq!(s.rows().len(), 2 * ModelKind::ALL.len());
        assert!(s.rows().iter().all(|r| r.metric == "val_error"));
        let t = run_table(&c, &cfg).unwrap();
        let models: Vec<&str> = t.rows().iter().map(|r| r.model.as_str()).collect();
        assert_eq!(models, ["cen_synthetic", "lr_synthetic", "mlp", "moe_synthetic"]);
        let conv = convergence_compare(&c, &cfg).unwrap();
        // epochs 0..=3, two models, three metrics
        assert_eq!(conv.rows().len(), 4 * 2 * 3);
        assert_eq!(conv.meta.seed, 7);
    }
}
