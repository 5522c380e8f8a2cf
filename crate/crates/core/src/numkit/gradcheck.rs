use crate::error::{dim_check, Error, Result};
use crate::numkit::Matrix;

/// Compares analytic gradients against central finite differences.
///
/// `loss` maps a full parameter set to `(loss, gradients)`; gradients must
/// have the parameter shapes. Returns the maximum over all coordinates of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(mut loss: F, params: &[Matrix], epsilon: f64) -> Result<f64>
where
    F: FnMut(&[Matrix]) -> Result<(f64, Vec<Matrix>)>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::Parameter(format!(
            "epsilon must lie in (0, 1e-2], got {epsilon}"
        )));
    }
    let (base, analytic) = loss(params)?;
    if !base.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite: {base}")));
    }
    dim_check!(
        analytic.len() == params.len(),
        "{} gradients for {} parameters",
        analytic.len(),
        params.len()
    );
    for (i, (g, p)) in analytic.iter().zip(params).enumerate() {
        dim_check!(
            g.shape() == p.shape(),
            "gradient {i} shape {:?} vs parameter {:?}",
            g.shape(),
            p.shape()
        );
    }

    let mut work: Vec<Matrix> = params.to_vec();
    let mut worst: f64 = 0.0;
    for t in 0..params.len() {
        for k in 0..params[t].len() {
            let orig = params[t].as_slice()[k];
            work[t].as_mut_slice()[k] = orig + epsilon;
            let (plus, _) = loss(&work)?;
            work[t].as_mut_slice()[k] = orig - epsilon;
            let (minus, _) = loss(&work)?;
            work[t].as_mut_slice()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became non-finite perturbing tensor {t} entry {k}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[t].as_slice()[k];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(scale: f64) -> impl FnMut(&[Matrix]) -> Result<(f64, Vec<Matrix>)> {
        // L = sum_i c_i p_i^2 with c_i = i + 1
        move |p: &[Matrix]| {
            let v = p[0].as_slice();
            let l = v.iter().enumerate().map(|(i, x)| (i as f64 + 1.0) * x * x).sum();
            let g = v
                .iter()
                .enumerate()
                .map(|(i, x)| scale * 2.0 * (i as f64 + 1.0) * x)
                .collect();
            Ok((l, vec![Matrix::from_vec(1, v.len(), g)?]))
        }
    }

    fn point() -> Vec<Matrix> {
        vec![Matrix::row_vector(&[0.5, -1.5, 2.0, 0.25])]
    }

    #[test]
    fn exact_gradient_passes() {
        assert!(grad_check(quadratic(1.0), &point(), 1e-5).unwrap() < 1e-7);
    }

    #[test]
    fn doubled_gradient_is_flagged() {
        // |s*g - g| / max(s|g|, |g|) = (s - 1) / s
        let err = grad_check(quadratic(1.5), &point(), 1e-5).unwrap();
        assert!((err - 1.0 / 3.0).abs() < 1e-6, "{err}");
        let err2 = grad_check(quadratic(2.0), &point(), 1e-5).unwrap();
        assert!((err2 - 0.5).abs() < 1e-6, "{err2}");
    }

    #[test]
    fn epsilon_out_of_range() {
        assert!(matches!(
            grad_check(quadratic(1.0), &point(), 0.1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let f = |_: &[Matrix]| Ok((f64::NAN, vec![Matrix::zeros(1, 4)]));
        assert!(matches!(grad_check(f, &point(), 1e-5), Err(Error::Numeric(_))));
    }
}
