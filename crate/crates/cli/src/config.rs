//! Run configuration and its text format.
//!
//! One `section.key = value` assignment per line; `#` starts a comment.
//! Lists are comma separated. Later assignments win, so command-line
//! overrides are applied as extra assignments after the file.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use explain_lab::data::synthetic::SyntheticSpec;
use explain_lab::data::{FeatureKind, FeatureParams};
use explain_lab::experiments::{Experiment, SweepConfig};
use explain_lab::lime::LimeConfig;
use explain_lab::models::{Architecture, ModelKind, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Prepare,
    Train,
    Explain,
    Sweep,
    Report,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::Prepare,
        Command::Train,
        Command::Explain,
        Command::Sweep,
        Command::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::Train => "train",
            Command::Explain => "explain",
            Command::Sweep => "sweep",
            Command::Report => "report",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Synthetic,
    Mnist,
    Csv,
}

impl Source {
    fn as_str(self) -> &'static str {
        match self {
            Source::Synthetic => "synthetic",
            Source::Mnist => "mnist",
            Source::Csv => "csv",
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Source::Synthetic, Source::Mnist, Source::Csv]
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown source `{s}` (expected synthetic, mnist or csv)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: Source,
    /// Directory holding the four MNIST IDX files.
    pub mnist_dir: PathBuf,
    /// Image CSVs (`y,x0,...`) for the csv source.
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    /// Image feature views; the first is the primary one.
    pub features: Vec<FeatureKind>,
    pub params: FeatureParams,
    pub val_count: usize,
    /// Restrict training to this many stratified rows.
    pub train_subset: Option<usize>,
    pub split_seed: u64,
    pub synthetic: SyntheticSpec,
    pub synthetic_val: usize,
    pub synthetic_test: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: Source::Synthetic,
            mnist_dir: PathBuf::from("data/mnist"),
            train_csv: None,
            test_csv: None,
            features: vec![FeatureKind::Pxl, FeatureKind::Hog],
            params: FeatureParams::default(),
            val_count: 5000,
            train_subset: None,
            split_seed: 0,
            synthetic: SyntheticSpec::default(),
            synthetic_val: 200,
            synthetic_test: 400,
        }
    }
}

/// Sweep settings that are not already covered by the train, lime and
/// model sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub experiment: Experiment,
    pub snr_levels: Vec<f64>,
    pub feature_fractions: Vec<f64>,
    pub data_fractions: Vec<f64>,
    pub n_trials: usize,
    pub lime_test_subsample: usize,
    pub jobs: usize,
    pub trials: Option<Vec<usize>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        SweepSection {
            experiment: Experiment::Noise,
            snr_levels: d.snr_levels,
            feature_fractions: d.feature_fractions,
            data_fractions: d.data_fractions,
            n_trials: d.n_trials,
            lime_test_subsample: d.lime_test_subsample,
            jobs: d.jobs,
            trials: d.trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// Seed base for training, LIME sampling and sweeps.
    pub seed: u64,
    pub output: PathBuf,
    pub data: DataConfig,
    pub model: ModelKind,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub lime: LimeConfig,
    pub sweep: SweepSection,
    /// Checkpoint explained by `explain`.
    pub explain_model: Option<PathBuf>,
    /// Test-split row explained by `explain`.
    pub explain_instance: usize,
    /// Report CSV read by `report`.
    pub report_input: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            seed: 0,
            output: PathBuf::from("runs/latest"),
            data: DataConfig::default(),
            model: ModelKind::Cen,
            arch: Architecture::default(),
            train: TrainConfig::default(),
            lime: LimeConfig::default(),
            sweep: SweepSection::default(),
            explain_model: None,
            explain_instance: 0,
            report_input: None,
        }
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// LIME settings with the run seed applied.
    pub fn lime_config(&self) -> LimeConfig {
        LimeConfig {
            seed: self.seed,
            ..self.lime.clone()
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let s = &self.sweep;
        SweepConfig {
            snr_levels: s.snr_levels.clone(),
            feature_fractions: s.feature_fractions.clone(),
            data_fractions: s.data_fractions.clone(),
            n_trials: s.n_trials,
            train: self.train_config(),
            lime: self.lime_config(),
            arch: self.arch.clone(),
            lime_test_subsample: s.lime_test_subsample,
            seed: self.seed,
            jobs: s.jobs,
            trials: s.trials.clone(),
        }
    }

    /// Applies one assignment. Errors describe the value, not the location.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SetError> {
        let v = value;
        match key {
            "run.command" => self.command = parse(v)?,
            "run.seed" => self.seed = parse(v)?,
            "run.output" => self.output = path(v)?,

            "data.source" => self.data.source = parse(v)?,
            "data.mnist_dir" => self.data.mnist_dir = path(v)?,
            "data.train_csv" => self.data.train_csv = optional(v, path)?,
            "data.test_csv" => self.data.test_csv = optional(v, path)?,
            "data.features" => {
                let kinds: Vec<FeatureKind> = list(v, parse)?;
                if kinds.is_empty() || kinds.contains(&FeatureKind::Synthetic) {
                    return Err(SetError::Value("expected a nonempty list of pxl and hog".into()));
                }
                self.data.features = kinds;
            }
            "data.pool_grid" => self.data.params.pool_grid = positive(v)?,
            "data.hog_cell" => self.data.params.hog.cell = positive(v)?,
            "data.hog_bins" => self.data.params.hog.bins = positive(v)?,
            "data.hog_block" => self.data.params.hog.block = positive(v)?,
            "data.val_count" => self.data.val_count = positive(v)?,
            "data.train_subset" => self.data.train_subset = optional(v, positive)?,
            "data.split_seed" => self.data.split_seed = parse(v)?,

            "synthetic.samples" => self.data.synthetic.samples = positive(v)?,
            "synthetic.z_dim" => self.data.synthetic.z_dim = positive(v)?,
            "synthetic.block" => self.data.synthetic.block = positive(v)?,
            "synthetic.classes" => self.data.synthetic.classes = at_least(v, 2)?,
            "synthetic.spread" => self.data.synthetic.spread = non_negative(v)?,
            "synthetic.seed" => self.data.synthetic.seed = parse(v)?,
            "synthetic.val_count" => self.data.synthetic_val = positive(v)?,
            "synthetic.test_count" => self.data.synthetic_test = positive(v)?,

            "model.kind" => self.model = parse(v)?,
            "model.hidden" => self.arch.hidden = list(v, positive)?,
            "model.components" => self.arch.components = positive(v)?,
            "model.init_std" => self.arch.init_std = non_negative(v)?,

            "train.learning_rate" => self.train.learning_rate = positive_real(v)?,
            "train.momentum" => {
                let m: f64 = parse(v)?;
                if !(0.0..1.0).contains(&m) {
                    return Err(SetError::Value(format!("must lie in [0, 1), got {m}")));
                }
                self.train.momentum = m;
            }
            "train.batch_size" => self.train.batch_size = positive(v)?,
            "train.epochs" => self.train.epochs = parse(v)?,
            "train.l2_penalty" => self.train.l2_penalty = non_negative(v)?,
            "train.eval_every" => self.train.eval_every = parse(v)?,

            "lime.distance" => self.lime.kernel.distance = parse(v)?,
            "lime.sigma" => {
                self.lime.kernel.sigma = match v {
                    "auto" => None,
                    _ => Some(positive_real(v)?),
                }
            }
            "lime.n_samples" => self.lime.n_samples = at_least(v, 2)?,
            "lime.perturb_scale" => self.lime.perturb_scale = non_negative(v)?,
            "lime.l1_penalty" => self.lime.l1_penalty = non_negative(v)?,
            "lime.max_features" => self.lime.max_features = optional(v, positive)?,
            "lime.ridge_penalty" => self.lime.ridge_penalty = non_negative(v)?,

            "sweep.experiment" => self.sweep.experiment = parse(v)?,
            "sweep.snr_levels" => self.sweep.snr_levels = nonempty(list(v, positive_real)?)?,
            "sweep.feature_fractions" => self.sweep.feature_fractions = nonempty(list(v, fraction)?)?,
            "sweep.data_fractions" => self.sweep.data_fractions = nonempty(list(v, fraction)?)?,
            "sweep.n_trials" => self.sweep.n_trials = positive(v)?,
            "sweep.lime_test_subsample" => self.sweep.lime_test_subsample = positive(v)?,
            "sweep.jobs" => self.sweep.jobs = positive(v)?,
            "sweep.trials" => self.sweep.trials = optional(v, |s| list(s, parse))?,

            "explain.model" => self.explain_model = optional(v, path)?,
            "explain.instance" => self.explain_instance = parse(v)?,
            "report.input" => self.report_input = optional(v, path)?,
            _ => return Err(SetError::UnknownKey),
        }
        Ok(())
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.data;
        let h = &d.params.hog;
        let s = &self.sweep;
        vec![
            ("run.command", self.command.as_str().into()),
            ("run.seed", self.seed.to_string()),
            ("run.output", show_path(&self.output)),
            ("data.source", d.source.as_str().into()),
            ("data.mnist_dir", show_path(&d.mnist_dir)),
            ("data.train_csv", show_opt(d.train_csv.as_deref().map(show_path))),
            ("data.test_csv", show_opt(d.test_csv.as_deref().map(show_path))),
            ("data.features", show_list(&d.features)),
            ("data.pool_grid", d.params.pool_grid.to_string()),
            ("data.hog_cell", h.cell.to_string()),
            ("data.hog_bins", h.bins.to_string()),
            ("data.hog_block", h.block.to_string()),
            ("data.val_count", d.val_count.to_string()),
            ("data.train_subset", show_opt(d.train_subset)),
            ("data.split_seed", d.split_seed.to_string()),
            ("synthetic.samples", d.synthetic.samples.to_string()),
            ("synthetic.z_dim", d.synthetic.z_dim.to_string()),
            ("synthetic.block", d.synthetic.block.to_string()),
            ("synthetic.classes", d.synthetic.classes.to_string()),
            ("synthetic.spread", d.synthetic.spread.to_string()),
            ("synthetic.seed", d.synthetic.seed.to_string()),
            ("synthetic.val_count", d.synthetic_val.to_string()),
            ("synthetic.test_count", d.synthetic_test.to_string()),
            ("model.kind", self.model.as_str().into()),
            ("model.hidden", show_list(&self.arch.hidden)),
            ("model.components", self.arch.components.to_string()),
            ("model.init_std", self.arch.init_std.to_string()),
            ("train.learning_rate", self.train.learning_rate.to_string()),
            ("train.momentum", self.train.momentum.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.l2_penalty", self.train.l2_penalty.to_string()),
            ("train.eval_every", self.train.eval_every.to_string()),
            ("lime.distance", self.lime.kernel.distance.to_string()),
            ("lime.sigma", self.lime.kernel.sigma.map_or("auto".into(), |v| v.to_string())),
            ("lime.n_samples", self.lime.n_samples.to_string()),
            ("lime.perturb_scale", self.lime.perturb_scale.to_string()),
            ("lime.l1_penalty", self.lime.l1_penalty.to_string()),
            ("lime.max_features", show_opt(self.lime.max_features)),
            ("lime.ridge_penalty", self.lime.ridge_penalty.to_string()),
            ("sweep.experiment", s.experiment.as_str().into()),
            ("sweep.snr_levels", show_list(&s.snr_levels)),
            ("sweep.feature_fractions", show_list(&s.feature_fractions)),
            ("sweep.data_fractions", show_list(&s.data_fractions)),
            ("sweep.n_trials", s.n_trials.to_string()),
            ("sweep.lime_test_subsample", s.lime_test_subsample.to_string()),
            ("sweep.jobs", s.jobs.to_string()),
            ("sweep.trials", show_opt(s.trials.as_ref().map(|t| show_list(t)))),
            ("explain.model", show_opt(self.explain_model.as_deref().map(show_path))),
            ("explain.instance", self.explain_instance.to_string()),
            ("report.input", show_opt(self.report_input.as_deref().map(show_path))),
        ]
    }

    /// The configuration in the file grammar; parsing it yields `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# effective configuration\n");
        let mut section = "";
        for (key, value) in self.entries() {
            let s = key.split('.').next().unwrap_or_default();
            if s != section {
                out.push('\n');
                section = s;
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// Cross-key checks and checks that referenced files exist.
    pub fn validate(&self) -> Result<(), CliError> {
        let v = |e: explain_lab::Error| CliError::Validation(e.to_string());
        self.train.validate().map_err(v)?;
        self.arch.validate().map_err(v)?;
        self.lime.kernel.validate().map_err(v)?;
        if self.lime.l1_penalty > 0.0 && self.lime.max_features.is_some() {
            return Err(CliError::Validation(
                "`lime.l1_penalty` and `lime.max_features` are mutually exclusive".into(),
            ));
        }
        if self.command == Command::Sweep {
            self.sweep_config().validate().map_err(v)?;
        }
        if matches!(self.command, Command::Prepare | Command::Train | Command::Explain | Command::Sweep) {
            self.validate_data_paths()?;
        }
        if self.command == Command::Explain {
            require_file("explain.model", self.explain_model.as_deref())?;
        }
        if self.command == Command::Report {
            require_file("report.input", self.report_input.as_deref())?;
        }
        Ok(())
    }

    fn validate_data_paths(&self) -> Result<(), CliError> {
        match self.data.source {
            Source::Synthetic => Ok(()),
            Source::Mnist => {
                let dir = &self.data.mnist_dir;
                if !dir.is_dir() {
                    return Err(CliError::Validation(format!(
                        "`data.mnist_dir`: directory {} does not exist",
                        dir.display()
                    )));
                }
                for f in [
                    "train-images-idx3-ubyte",
                    "train-labels-idx1-ubyte",
                    "t10k-images-idx3-ubyte",
                    "t10k-labels-idx1-ubyte",
                ] {
                    if !dir.join(f).is_file() {
                        return Err(CliError::Validation(format!(
                            "`data.mnist_dir`: missing {}",
                            dir.join(f).display()
                        )));
                    }
                }
                Ok(())
            }
            Source::Csv => {
                require_file("data.train_csv", self.data.train_csv.as_deref())?;
                require_file("data.test_csv", self.data.test_csv.as_deref())
            }
        }
    }
}

fn require_file(key: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        None => Err(CliError::Validation(format!("`{key}` is required"))),
        Some(p) if !p.is_file() => Err(CliError::Validation(format!("`{key}`: file {} does not exist", p.display()))),
        Some(_) => Ok(()),
    }
}

/// Why an assignment was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum SetError {
    UnknownKey,
    Value(String),
}

fn parse<T: FromStr>(v: &str) -> Result<T, SetError>
where
    T::Err: Display,
{
    v.parse::<T>().map_err(|e| SetError::Value(format!("cannot parse `{v}`: {e}")))
}

fn positive(v: &str) -> Result<usize, SetError> {
    at_least(v, 1)
}

fn at_least(v: &str, min: usize) -> Result<usize, SetError> {
    let n: usize = parse(v)?;
    if n < min {
        return Err(SetError::Value(format!("must be >= {min}, got {n}")));
    }
    Ok(n)
}

fn positive_real(v: &str) -> Result<f64, SetError> {
    let x: f64 = parse(v)?;
    if !(x > 0.0) {
        return Err(SetError::Value(format!("must be > 0, got {v}")));
    }
    Ok(x)
}

fn non_negative(v: &str) -> Result<f64, SetError> {
    let x: f64 = parse(v)?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(SetError::Value(format!("must be finite and >= 0, got {v}")));
    }
    Ok(x)
}

fn fraction(v: &str) -> Result<f64, SetError> {
    let x: f64 = parse(v)?;
    if !(x > 0.0 && x <= 1.0) {
        return Err(SetError::Value(format!("fractions must lie in (0, 1], got {v}")));
    }
    Ok(x)
}

fn path(v: &str) -> Result<PathBuf, SetError> {
    if v.is_empty() {
        return Err(SetError::Value("empty path".into()));
    }
    Ok(PathBuf::from(v))
}

fn optional<T>(v: &str, f: impl Fn(&str) -> Result<T, SetError>) -> Result<Option<T>, SetError> {
    if v == "none" {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

fn list<T>(v: &str, f: impl Fn(&str) -> Result<T, SetError>) -> Result<Vec<T>, SetError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| f(s.trim())).collect()
}

fn nonempty<T>(v: Vec<T>) -> Result<Vec<T>, SetError> {
    if v.is_empty() {
        Err(SetError::Value("list must not be empty".into()))
    } else {
        Ok(v)
    }
}

fn show_path(p: &Path) -> String {
    p.display().to_string()
}

fn show_opt<T: Display>(v: Option<T>) -> String {
    v.map_or("none".into(), |v| v.to_string())
}

fn show_list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Where an assignment came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag(String),
    Env(&'static str),
}

impl Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag(flag) => write!(f, "flag {flag}"),
            Origin::Env(var) => write!(f, "environment variable {var}"),
        }
    }
}

/// A `key = value` assignment with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub key: String,
    pub value: String,
    pub origin: Origin,
}

/// Splits config text into assignments. Rejects malformed lines but not
/// unknown keys; [`apply`] does that.
pub fn parse_text(text: &str, path: &Path) -> Result<Vec<Assignment>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let origin = Origin::File {
            path: path.to_path_buf(),
            line: i + 1,
        };
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Validation(format!("{origin}: expected `section.key = value`, got `{line}`")));
        };
        let key = key.trim();
        if !key.contains('.') || key.contains(char::is_whitespace) {
            return Err(CliError::Validation(format!("{origin}: malformed key `{key}`")));
        }
        out.push(Assignment {
            key: key.into(),
            value: value.trim().into(),
            origin,
        });
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<Vec<Assignment>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    parse_text(&text, path)
}

/// Applies assignments in order; errors name the key and its origin.
pub fn apply(config: &mut RunConfig, assignments: &[Assignment]) -> Result<(), CliError> {
    for a in assignments {
        config.set(&a.key, &a.value).map_err(|e| {
            CliError::Validation(match e {
                SetError::UnknownKey => format!("{}: unknown key `{}`", a.origin, a.key),
                SetError::Value(msg) => format!("{}: `{}`: {msg}", a.origin, a.key),
            })
        })?;
    }
    Ok(())
}

/// Parses a `key=value` flag argument.
pub fn parse_override(arg: &str) -> Result<Assignment, CliError> {
    let (key, value) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("--set expects KEY=VALUE, got `{arg}`")))?;
    Ok(Assignment {
        key: key.trim().into(),
        value: value.trim().into(),
        origin: Origin::Flag(format!("--set {arg}")),
    })
}
