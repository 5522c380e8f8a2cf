//! Feature corruption: calibrated additive Gaussian noise and dimension
//! subsampling.

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Rng};

/// How interpretable features are degraded before explanations are fit.
#[derive(Debug, Clone, PartialEq)]
pub enum CorruptionSpec {
    /// Additive Gaussian noise at a per-column signal-to-noise ratio.
    /// `f64::INFINITY` is the clean sentinel.
    Noise { snr: f64, seed: u64 },
    /// Keep only these columns, in this order.
    Subsample { kept_dims: Vec<usize>, seed: u64 },
}

impl CorruptionSpec {
    pub fn validate(&self, z_dim: usize) -> Result<()> {
        match self {
            CorruptionSpec::Noise { snr, .. } => check_snr(*snr),
            CorruptionSpec::Subsample { kept_dims, .. } => validate_kept_dims(kept_dims, z_dim),
        }
    }

    pub fn apply(&self, z: &Matrix) -> Result<Matrix> {
        self.validate(z.cols())?;
        match self {
            CorruptionSpec::Noise { snr, seed } => inject_noise(z, *snr, *seed),
            CorruptionSpec::Subsample { kept_dims, .. } => subsample_features(z, kept_dims),
        }
    }
}

fn check_snr(snr: f64) -> Result<()> {
    if snr > 0.0 && !snr.is_nan() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("snr must be positive, got {snr}")))
    }
}

pub(crate) fn validate_kept_dims(kept: &[usize], z_dim: usize) -> Result<()> {
    if kept.is_empty() {
        return Err(Error::Parameter("kept_dims must be nonempty".into()));
    }
    if let Some(&bad) = kept.iter().find(|&&k| k >= z_dim) {
        return Err(Error::Parameter(format!(
            "kept dimension {bad} out of range for {z_dim} features"
        )));
    }
    if kept.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("kept_dims must be sorted and unique".into()));
    }
    Ok(())
}

/// Population variance of each column.
pub fn column_variances(z: &Matrix) -> Vec<f64> {
    let n = z.rows().max(1) as f64;
    let mean: Vec<f64> = z.column_sums().into_iter().map(|s| s / n).collect();
    let mut var = vec![0.0; z.cols()];
    for r in 0..z.rows() {
        for (j, v) in z.row(r).iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    var.into_iter().map(|v| v / n).collect()
}

/// Adds zero-mean Gaussian noise with per-column variance
/// `Var(column) / snr`, estimated on `z` itself. Zero-variance columns are
/// left untouched, and `snr = inf` returns `z` unchanged.
pub fn inject_noise(z: &Matrix, snr: f64, seed: u64) -> Result<Matrix> {
    check_snr(snr)?;
    let variances = column_variances(z);
    inject_noise_calibrated(z, &variances, snr, seed)
}

/// Like [`inject_noise`] but with signal variances supplied by the caller,
/// so train and test splits share one calibration.
pub fn inject_noise_calibrated(z: &Matrix, signal_variance: &[f64], snr: f64, seed: u64) -> Result<Matrix> {
    check_snr(snr)?;
    if signal_variance.len() != z.cols() {
        return Err(Error::Dimension(format!(
            "{} variances for {} columns",
            signal_variance.len(),
            z.cols()
        )));
    }
    let mut out = z.clone();
    if snr.is_infinite() {
        return Ok(out);
    }
    let std: Vec<f64> = signal_variance.iter().map(|v| (v / snr).sqrt()).collect();
    let mut rng = Rng::new(seed);
    for r in 0..out.rows() {
        for (v, &s) in out.row_mut(r).iter_mut().zip(&std) {
            // Draw unconditionally so the stream layout ignores which columns are silent.
            let e = rng.normal();
            if s > 0.0 {
                *v += s * e;
            }
        }
    }
    Ok(out)
}

/// Columns of `z` listed in `kept_dims`, in that order.
pub fn subsample_features(z: &Matrix, kept_dims: &[usize]) -> Result<Matrix> {
    validate_kept_dims(kept_dims, z.cols())?;
    z.select_columns(kept_dims)
}

/// A random `ceil(fraction * z_dim)` subset of dimensions, sorted.
pub fn random_kept_dims(z_dim: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "kept fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let k = ((fraction * z_dim as f64).ceil() as usize).clamp(1, z_dim);
    Ok(Rng::new(seed).choose_sorted(z_dim, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_variance_column(n: usize) -> Matrix {
        // +-1 alternating: mean 0, population variance exactly 1.
        Matrix::from_fn(n, 1, |r, _| if r % 2 == 0 { 1.0 } else { -1.0 })
    }

    #[test]
    fn clean_sentinel_is_identity() {
        let z = unit_variance_column(10);
        assert_eq!(inject_noise(&z, f64::INFINITY, 1).unwrap(), z);
    }

    #[test]
    fn noise_variance_matches_snr() {
        let z = unit_variance_column(10_000);
        let noisy = inject_noise(&z, 4.0, 11).unwrap();
        let diff: Vec<f64> = noisy
            .as_slice()
            .iter()
            .zip(z.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        let var = column_variances(&Matrix::from_vec(diff.len(), 1, diff).unwrap())[0];
        assert!((var - 0.25).abs() / 0.25 < 0.1, "{var}");
    }

    #[test]
    fn noise_is_seeded_and_leaves_input_alone() {
        let z = Matrix::from_fn(50, 3, |r, c| (r * 3 + c) as f64);
        let before = z.clone();
        let a = inject_noise(&z, 2.0, 7).unwrap();
        let b = inject_noise(&z, 2.0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(z, before);
        assert_ne!(a, inject_noise(&z, 2.0, 8).unwrap());
    }

    #[test]
    fn constant_columns_get_no_noise() {
        let z = Matrix::from_fn(20, 2, |r, c| if c == 0 { 3.0 } else { r as f64 });
        let noisy = inject_noise(&z, 1.0, 3).unwrap();
        assert_eq!(noisy.column(0), z.column(0));
        assert_ne!(noisy.column(1), z.column(1));
    }

    #[test]
    fn snr_must_be_positive() {
        let z = unit_variance_column(4);
        for bad in [0.0, -1.0, f64::NAN] {
            assert!(matches!(inject_noise(&z, bad, 1), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn subsample_examples() {
        let z = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(subsample_features(&z, &[0, 1, 2]).unwrap(), z);
        assert_eq!(subsample_features(&z, &[0]).unwrap().as_slice(), &[1.0, 4.0]);
        assert!(matches!(subsample_features(&z, &[3]), Err(Error::Parameter(_))));
        assert!(matches!(subsample_features(&z, &[]), Err(Error::Parameter(_))));
    }

    #[test]
    fn random_dims_are_reproducible() {
        let a = random_kept_dims(49, 0.5, 3).unwrap();
        assert_eq!(a, random_kept_dims(49, 0.5, 3).unwrap());
        assert_eq!(a.len(), 25);
    }

    #[test]
    fn subsampling_commutes_with_row_selection() {
        let z = Matrix::from_fn(6, 4, |r, c| (r * 10 + c) as f64);
        let rows = [4, 1, 5];
        let kept = [1, 3];
        let a = subsample_features(&z.gather_rows(&rows), &kept).unwrap();
        let b = subsample_features(&z, &kept).unwrap().gather_rows(&rows);
        assert_eq!(a, b);
    }
}
