//! Post-hoc local surrogates: perturb an instance in raw-input space, map
//! the perturbations to interpretable features, weight them by proximity
//! and fit a sparse linear model to the black box's class probabilities.

mod solver;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use solver::{fit_explanation, subgradient_residual, OPTIMALITY_TOLERANCE};

use crate::data::FeatureMap;
use crate::error::{dim_check, Error, Result};
use crate::models::{LinearExplanation, Predictor};
use crate::numkit::{argmax, Matrix, Rng};

/// Perturbed inputs are clipped to this range.
pub const INPUT_RANGE: (f64, f64) = (0.0, 1.0);
/// A neighborhood whose perturbed samples all weigh less than this is degenerate.
pub const MIN_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Euclidean,
    Cosine,
}

impl Distance {
    pub fn as_str(self) -> &'static str {
        match self {
            Distance::Euclidean => "euclidean",
            Distance::Cosine => "cosine",
        }
    }

    pub fn between(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Distance::Cosine => {
                let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    ab += x * y;
                    aa += x * x;
                    bb += y * y;
                }
                if aa == 0.0 && bb == 0.0 {
                    0.0
                } else if aa == 0.0 || bb == 0.0 {
                    1.0
                } else {
                    (1.0 - ab / (aa.sqrt() * bb.sqrt())).max(0.0)
                }
            }
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "cosine" => Ok(Distance::Cosine),
            _ => Err(Error::Parameter(format!("unknown distance `{s}` (expected euclidean or cosine)"))),
        }
    }
}

/// Proximity kernel `exp(-D^2 / sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub distance: Distance,
    /// `None` selects `0.75 * sqrt(z_dim)`; infinity gives uniform weights.
    pub sigma: Option<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            distance: Distance::Euclidean,
            sigma: None,
        }
    }
}

impl KernelSpec {
    pub fn uniform() -> Self {
        KernelSpec {
            distance: Distance::Euclidean,
            sigma: Some(f64::INFINITY),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.sigma {
            Some(s) if !(s > 0.0) => Err(Error::Parameter(format!("sigma must be > 0, got {s}"))),
            _ => Ok(()),
        }
    }

    pub fn resolved_sigma(&self, z_dim: usize) -> f64 {
        self.sigma.unwrap_or(0.75 * (z_dim as f64).sqrt())
    }

    /// Weight of a point at distance `d`, floored at the smallest positive
    /// double so weights stay in `(0, 1]`.
    pub fn weight(d: f64, sigma: f64) -> f64 {
        (-(d * d) / (sigma * sigma)).exp().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimeConfig {
    pub kernel: KernelSpec,
    pub n_samples: usize,
    /// Standard deviation of the raw-input jitter as a fraction of the input range.
    pub perturb_scale: f64,
    pub l1_penalty: f64,
    pub max_features: Option<usize>,
    pub ridge_penalty: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            kernel: KernelSpec::default(),
            n_samples: 1000,
            perturb_scale: 0.1,
            l1_penalty: 0.0,
            max_features: None,
            ridge_penalty: 1e-3,
            seed: 0,
        }
    }
}

impl LimeConfig {
    pub(crate) fn validate_penalties(&self) -> Result<()> {
        if !(self.l1_penalty >= 0.0 && self.l1_penalty.is_finite()) {
            return Err(Error::Parameter(format!("l1_penalty must be >= 0, got {}", self.l1_penalty)));
        }
        if !(self.ridge_penalty >= 0.0 && self.ridge_penalty.is_finite()) {
            return Err(Error::Parameter(format!("ridge_penalty must be >= 0, got {}", self.ridge_penalty)));
        }
        if self.l1_penalty > 0.0 && self.max_features.is_some() {
            return Err(Error::Parameter("set either l1_penalty or max_features, not both".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::Parameter("max_features must be >= 1".into()));
        }
        Ok(())
    }

    pub fn validate(&self, z_dim: usize) -> Result<()> {
        self.kernel.validate()?;
        self.validate_penalties()?;
        if self.n_samples < z_dim + 1 {
            return Err(Error::Parameter(format!(
                "n_samples = {} leaves the fit underdetermined; need at least z_dim + 1 = {}",
                self.n_samples,
                z_dim + 1
            )));
        }
        if !(self.perturb_scale >= 0.0 && self.perturb_scale.is_finite()) {
            return Err(Error::Parameter(format!("perturb_scale must be >= 0, got {}", self.perturb_scale)));
        }
        Ok(())
    }
}

/// Perturbed features, black-box targets and proximity weights around an
/// instance, which is always row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    z: Matrix,
    targets: Matrix,
    weights: Vec<f64>,
    sigma: f64,
}

impl Neighborhood {
    /// Builds a neighborhood and weights it by distance to row 0.
    pub fn new(z: Matrix, targets: Matrix, kernel: &KernelSpec) -> Result<Self> {
        dim_check!(z.rows() >= 1, "neighborhood needs at least the instance itself");
        dim_check!(z.rows() == targets.rows(), "{} samples vs {} target rows", z.rows(), targets.rows());
        if !z.is_finite() || !targets.is_finite() {
            return Err(Error::Numeric("neighborhood has non-finite entries".into()));
        }
        let mut nb = Neighborhood {
            z,
            targets,
            weights: Vec::new(),
            sigma: 0.0,
        };
        nb.recompute_weights(kernel)?;
        Ok(nb)
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.z.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.rows() == 0
    }

    /// Same targets over replacement features, reweighted around the new row 0.
    pub fn with_features(&self, z: Matrix, kernel: &KernelSpec) -> Result<Self> {
        dim_check!(z.rows() == self.len(), "{} replacement rows for {} samples", z.rows(), self.len());
        Neighborhood::new(z, self.targets.clone(), kernel)
    }

    pub fn recompute_weights(&mut self, kernel: &KernelSpec) -> Result<()> {
        kernel.validate()?;
        let sigma = kernel.resolved_sigma(self.z.cols());
        let origin = self.z.row(0);
        self.weights = (0..self.z.rows())
            .map(|i| KernelSpec::weight(kernel.distance.between(origin, self.z.row(i)), sigma))
            .collect();
        self.sigma = sigma;
        if self.weights.len() > 1 && self.weights[1..].iter().all(|&w| w < MIN_WEIGHT) {
            return Err(Error::KernelTooNarrow {
                sigma,
                threshold: MIN_WEIGHT,
            });
        }
        Ok(())
    }
}

/// Samples `n_samples - 1` jittered copies of `x` plus `x` itself, maps them
/// through `phi` and queries the black box.
pub fn sample_neighborhood(
    f: &dyn Predictor,
    x: &[f64],
    phi: &dyn FeatureMap,
    config: &LimeConfig,
) -> Result<Neighborhood> {
    dim_check!(
        x.len() == phi.input_dim(),
        "instance has {} inputs, feature map expects {}",
        x.len(),
        phi.input_dim()
    );
    config.validate(phi.output_dim())?;
    let (lo, hi) = INPUT_RANGE;
    let std = config.perturb_scale * (hi - lo);
    let mut rng = Rng::new(config.seed);
    let mut xs = Matrix::zeros(config.n_samples, x.len());
    xs.row_mut(0).copy_from_slice(x);
    for i in 1..config.n_samples {
        for (v, &x0) in xs.row_mut(i).iter_mut().zip(x) {
            *v = (x0 + std * rng.normal()).clamp(lo, hi);
        }
    }
    let zs = phi.map_rows(&xs)?;
    let targets = f.predict_proba(&xs, &zs)?;
    Neighborhood::new(zs, targets, &config.kernel)
}

/// Samples a neighborhood around `x` and fits the surrogate.
pub fn explain(f: &dyn Predictor, x: &[f64], phi: &dyn FeatureMap, config: &LimeConfig) -> Result<LinearExplanation> {
    fit_explanation(&sample_neighborhood(f, x, phi, config)?, config)
}

/// Fraction of rows where the explanation's argmax matches the black box's.
pub fn fidelity(expl: &LinearExplanation, f: &dyn Predictor, x: &Matrix, z: &Matrix) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::Parameter("fidelity over an empty evaluation set".into()));
    }
    let p = f.predict_proba(x, z)?;
    let g = expl.apply_rows(z)?;
    let agree = (0..x.rows()).filter(|&i| argmax(g.row(i)) == argmax(p.row(i))).count();
    Ok(agree as f64 / x.rows() as f64)
}

/// Fidelity against the black-box targets stored in a neighborhood.
pub fn neighborhood_fidelity(expl: &LinearExplanation, nb: &Neighborhood) -> Result<f64> {
    if nb.is_empty() {
        return Err(Error::Parameter("fidelity over an empty neighborhood".into()));
    }
    let g = expl.apply_rows(nb.z())?;
    let agree = (0..nb.len())
        .filter(|&i| argmax(g.row(i)) == argmax(nb.targets().row(i)))
        .count();
    Ok(agree as f64 / nb.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub feature_index: usize,
    pub class: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportMeta {
    pub sigma: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// JSON form of an explanation, weights ordered by decreasing magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationExport {
    pub weights: Vec<WeightEntry>,
    pub bias: Vec<f64>,
    pub meta: ExportMeta,
}

impl ExplanationExport {
    pub fn new(expl: &LinearExplanation, meta: ExportMeta) -> Self {
        let mut weights: Vec<WeightEntry> = (0..expl.z_dim())
            .flat_map(|j| {
                (0..expl.classes()).map(move |c| WeightEntry {
                    feature_index: j,
                    class: c,
                    weight: expl.weights[(j, c)],
                })
            })
            .collect();
        weights.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()));
        ExplanationExport {
            weights,
            bias: expl.bias.clone(),
            meta,
        }
    }

    /// Pretty-printed JSON; an infinite (uniform) sigma is written as `null`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
