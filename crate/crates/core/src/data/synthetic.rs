use crate::data::features::{BlockMean, FeatureMap};
use crate::data::{Dataset, FeatureKind, Split};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, Rng};

/// Gaussian class clusters in raw-input space whose labels are assigned by
/// a planted linear model over `z = block_mean(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub z_dim: usize,
    /// Raw coordinates averaged into each feature.
    pub block: usize,
    pub classes: usize,
    /// Per-coordinate standard deviation around the class center.
    pub spread: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            samples: 2000,
            z_dim: 16,
            block: 4,
            classes: 4,
            spread: 0.15,
            seed: 0,
        }
    }
}

/// The planted classifier: `argmax_c (b_c + z . w_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    /// `z_dim × classes`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl PlantedModel {
    pub fn logits(&self, z: &[f64]) -> Vec<f64> {
        (0..self.bias.len())
            .map(|c| {
                self.bias[c]
                    + z.iter()
                        .enumerate()
                        .map(|(j, v)| v * self.weights[(j, c)])
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn label(&self, z: &[f64]) -> usize {
        crate::numkit::argmax(&self.logits(z))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub feature_map: BlockMean,
    pub planted: PlantedModel,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.classes < 2 || spec.z_dim == 0 || spec.block == 0 || spec.samples < spec.classes {
        return Err(Error::Parameter(format!("invalid synthetic spec {spec:?}")));
    }
    let x_dim = spec.z_dim * spec.block;
    let phi = BlockMean::new(x_dim, spec.block)?;
    let root = Rng::new(spec.seed);

    let mut center_rng = root.derive(&[1]);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..x_dim).map(|_| center_rng.uniform_range(0.2, 0.8)).collect())
        .collect();
    // Nearest-center rule in z space is linear: w_c = m_c, b_c = -|m_c|^2 / 2.
    let z_centers: Vec<Vec<f64>> = centers.iter().map(|c| phi.map(c)).collect::<Result<_>>()?;
    let weights = Matrix::from_fn(spec.z_dim, spec.classes, |j, c| z_centers[c][j]);
    let bias = z_centers
        .iter()
        .map(|m| -0.5 * m.iter().map(|v| v * v).sum::<f64>())
        .collect();
    let planted = PlantedModel { weights, bias };

    let mut sample_rng = root.derive(&[2]);
    let mut x = Matrix::zeros(spec.samples, x_dim);
    let mut z = Matrix::zeros(spec.samples, spec.z_dim);
    let mut y = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let c = i % spec.classes;
        for (v, m) in x.row_mut(i).iter_mut().zip(&centers[c]) {
            *v = (m + spec.spread * sample_rng.normal()).clamp(0.0, 1.0);
        }
        phi.map_into(x.row(i), z.row_mut(i));
        y.push(planted.label(z.row(i)));
    }
    let dataset = Dataset::new(x, z, y, spec.classes, FeatureKind::Synthetic, Split::Train)?;
    Ok(SyntheticData {
        dataset,
        feature_map: phi,
        planted,
    })
}
