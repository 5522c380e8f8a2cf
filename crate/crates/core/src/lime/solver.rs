//! Weighted least squares with an unpenalized intercept, ridge and L1
//! penalties:
//!
//! `sum_i pi_i |y_i - b - W^T z_i|^2 + l1 |W|_1 + ridge |W|^2`
//!
//! Centering by the weighted means removes the intercept, leaving the
//! weighted Gram matrix `G` and cross moments `q` as sufficient statistics.

use crate::error::{Error, Result};
use crate::lime::{LimeConfig, Neighborhood};
use crate::models::LinearExplanation;
use crate::numkit::{cholesky_solve, gemm, Matrix, Trans};

/// Coordinate descent stops once the subgradient residual drops below this.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-7;
const MAX_SWEEPS: usize = 200_000;
const PATH_STEPS: usize = 120;
const PATH_RATIO: f64 = 0.9;

struct Moments {
    gram: Matrix,
    cross: Matrix,
    zbar: Vec<f64>,
    ybar: Vec<f64>,
}

fn moments(nb: &Neighborhood) -> Result<Moments> {
    let (z, y, pi) = (nb.z(), nb.targets(), nb.weights());
    let total: f64 = pi.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numeric("neighborhood weights sum to zero".into()));
    }
    let mean = |m: &Matrix| -> Vec<f64> {
        let mut acc = vec![0.0; m.cols()];
        for (i, &p) in pi.iter().enumerate() {
            for (a, &v) in acc.iter_mut().zip(m.row(i)) {
                *a += p * v;
            }
        }
        acc.iter().map(|a| a / total).collect()
    };
    let (zbar, ybar) = (mean(z), mean(y));
    let zc = Matrix::from_fn(z.rows(), z.cols(), |i, j| z[(i, j)] - zbar[j]);
    let yc = Matrix::from_fn(y.rows(), y.cols(), |i, c| y[(i, c)] - ybar[c]);
    let zw = Matrix::from_fn(z.rows(), z.cols(), |i, j| pi[i] * zc[(i, j)]);
    Ok(Moments {
        gram: gemm(&zw, Trans::Yes, &zc, Trans::No)?,
        cross: gemm(&zw, Trans::Yes, &yc, Trans::No)?,
        zbar,
        ybar,
    })
}

fn finish(m: &Moments, weights: Matrix) -> Result<LinearExplanation> {
    let bias = (0..weights.cols())
        .map(|c| m.ybar[c] - (0..weights.rows()).map(|j| m.zbar[j] * weights[(j, c)]).sum::<f64>())
        .collect();
    LinearExplanation::new(bias, weights)
}

fn ridge_solve(gram: &Matrix, cross: &Matrix, ridge: f64) -> Result<Matrix> {
    let mut a = gram.clone();
    for j in 0..a.rows() {
        a[(j, j)] += ridge;
    }
    cholesky_solve(&a, cross).map_err(|e| match e {
        Error::IllConditioned(msg) => Error::IllConditioned(format!(
            "weighted design is singular with ridge_penalty = {ridge}; add a ridge penalty or more samples ({msg})"
        )),
        other => other,
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Largest subgradient violation for one class.
fn residual(gram: &Matrix, q: &[f64], w: &[f64], l1: f64, ridge: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..w.len() {
        let gw: f64 = gram.row(j).iter().zip(w).map(|(g, v)| g * v).sum();
        let r = 2.0 * (gw - q[j]) + 2.0 * ridge * w[j];
        let v = if w[j] != 0.0 {
            (r + l1 * w[j].signum()).abs()
        } else {
            (r.abs() - l1).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Cyclic coordinate descent for one class, warm-started from `w`.
fn coordinate_descent(gram: &Matrix, q: &[f64], w: &mut [f64], l1: f64, ridge: f64, tol: f64) -> Result<()> {
    let d = w.len();
    let mut gw: Vec<f64> = (0..d)
        .map(|j| gram.row(j).iter().zip(w.iter()).map(|(g, v)| g * v).sum())
        .collect();
    for _ in 0..MAX_SWEEPS {
        for j in 0..d {
            let denom = gram[(j, j)] + ridge;
            let old = w[j];
            let new = if denom > 0.0 {
                soft_threshold(q[j] - gw[j] + gram[(j, j)] * old, 0.5 * l1) / denom
            } else {
                0.0
            };
            if new != old {
                let delta = new - old;
                for (k, g) in gw.iter_mut().enumerate() {
                    *g += gram[(k, j)] * delta;
                }
                w[j] = new;
            }
        }
        if residual(gram, q, w, l1, ridge) < tol {
            return Ok(());
        }
    }
    Err(Error::Numeric(format!(
        "coordinate descent did not reach optimality within {MAX_SWEEPS} sweeps (residual {:.3e})",
        residual(gram, q, w, l1, ridge)
    )))
}

/// Fits one linear explanation per class to the neighborhood's targets.
pub fn fit_explanation(nb: &Neighborhood, config: &LimeConfig) -> Result<LinearExplanation> {
    config.validate_penalties()?;
    let m = moments(nb)?;
    let (d, classes) = (m.gram.rows(), m.cross.cols());
    if let Some(max_features) = config.max_features {
        return fit_selected(&m, max_features, config.ridge_penalty);
    }
    if config.l1_penalty == 0.0 {
        let w = ridge_solve(&m.gram, &m.cross, config.ridge_penalty)?;
        return finish(&m, w);
    }
    let mut weights = Matrix::zeros(d, classes);
    for c in 0..classes {
        let q = m.cross.column(c);
        let mut w = vec![0.0; d];
        coordinate_descent(&m.gram, &q, &mut w, config.l1_penalty, config.ridge_penalty, OPTIMALITY_TOLERANCE)?;
        for (j, v) in w.into_iter().enumerate() {
            weights[(j, c)] = v;
        }
    }
    finish(&m, weights)
}

/// Per class: walk the L1 path down from the smallest penalty that zeroes
/// every weight and keep the last support of at most `max_features`
/// features, then refit ridge on that support.
fn fit_selected(m: &Moments, max_features: usize, ridge: f64) -> Result<LinearExplanation> {
    let (d, classes) = (m.gram.rows(), m.cross.cols());
    let mut weights = Matrix::zeros(d, classes);
    for c in 0..classes {
        let q = m.cross.column(c);
        let support = if max_features >= d {
            (0..d).collect()
        } else {
            select_support(&m.gram, &q, max_features, ridge)?
        };
        if support.is_empty() {
            continue;
        }
        let sub_gram = Matrix::from_fn(support.len(), support.len(), |a, b| m.gram[(support[a], support[b])]);
        let sub_q = Matrix::from_fn(support.len(), 1, |a, _| q[support[a]]);
        let w = ridge_solve(&sub_gram, &sub_q, ridge)?;
        for (a, &j) in support.iter().enumerate() {
            weights[(j, c)] = w[(a, 0)];
        }
    }
    finish(m, weights)
}

fn select_support(gram: &Matrix, q: &[f64], max_features: usize, ridge: f64) -> Result<Vec<usize>> {
    let lambda_max = 2.0 * q.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut best = Vec::new();
    if lambda_max == 0.0 {
        return Ok(best);
    }
    let tol = (1e-6 * lambda_max).max(OPTIMALITY_TOLERANCE);
    let mut w = vec![0.0; q.len()];
    let mut lambda = lambda_max;
    for _ in 0..PATH_STEPS {
        lambda *= PATH_RATIO;
        coordinate_descent(gram, q, &mut w, lambda, ridge, tol)?;
        let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] != 0.0).collect();
        if support.len() > max_features {
            break;
        }
        best = support;
    }
    Ok(best)
}

/// Largest subgradient violation of `expl` for the penalized objective,
/// including the intercept's stationarity condition.
pub fn subgradient_residual(nb: &Neighborhood, expl: &LinearExplanation, l1: f64, ridge: f64) -> Result<f64> {
    let (z, y, pi) = (nb.z(), nb.targets(), nb.weights());
    let pred = expl.apply_rows(z)?;
    let mut worst: f64 = 0.0;
    for c in 0..expl.classes() {
        let r: Vec<f64> = (0..z.rows()).map(|i| pi[i] * (pred[(i, c)] - y[(i, c)])).collect();
        worst = worst.max(2.0 * r.iter().sum::<f64>().abs());
        for j in 0..z.cols() {
            let w = expl.weights[(j, c)];
            let g = 2.0 * (0..z.rows()).map(|i| r[i] * z[(i, j)]).sum::<f64>() + 2.0 * ridge * w;
            let v = if w != 0.0 { (g + l1 * w.signum()).abs() } else { (g.abs() - l1).max(0.0) };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}
