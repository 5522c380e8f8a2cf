use crate::error::{dim_check, Error, Result};
use crate::numkit::Matrix;

/// Pivots below this fraction of the largest diagonal entry count as singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    dim_check!(a.cols() == n, "cholesky needs a square matrix, got {:?}", a.shape());
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > PIVOT_TOLERANCE * scale) || scale == 0.0 {
            return Err(Error::IllConditioned(format!(
                "matrix is not positive definite (pivot {j} = {d:.3e})"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn cholesky_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    dim_check!(
        b.rows() == a.rows(),
        "right-hand side has {} rows, system {}",
        b.rows(),
        a.rows()
    );
    let l = cholesky(a)?;
    let n = a.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    #[test]
    fn solves_random_spd_system() {
        let mut rng = Rng::new(3);
        let m = Matrix::from_fn(8, 6, |_, _| rng.normal());
        let mut a = m.transpose().matmul(&m).unwrap();
        for i in 0..6 {
            a[(i, i)] += 0.1;
        }
        let b = Matrix::from_fn(6, 2, |_, _| rng.normal());
        let x = cholesky_solve(&a, &b).unwrap();
        assert!(a.matmul(&x).unwrap().max_abs_diff(&b) < 1e-12);
        let l = cholesky(&a).unwrap();
        assert!(l.matmul(&l.transpose()).unwrap().max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn singular_is_ill_conditioned() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(cholesky(&a), Err(Error::IllConditioned(_))));
        assert!(matches!(cholesky(&Matrix::zeros(2, 2)), Err(Error::IllConditioned(_))));
    }
}
