use crate::error::{dim_check, Error, Result};
use crate::numkit::Matrix;

/// Classical momentum SGD: `v <- mu v - lr g`, `p <- p + v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    learning_rate: f64,
    momentum: f64,
    velocity: Vec<Matrix>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Parameter(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        Ok(Sgd {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn velocity(&self) -> &[Matrix] {
        &self.velocity
    }

    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix]) -> Result<()> {
        dim_check!(
            params.len() == grads.len(),
            "{} parameter tensors vs {} gradients",
            params.len(),
            grads.len()
        );
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
        }
        dim_check!(
            self.velocity.len() == params.len(),
            "optimizer state holds {} tensors, got {}",
            self.velocity.len(),
            params.len()
        );
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            dim_check!(
                p.shape() == g.shape() && v.shape() == g.shape(),
                "shape mismatch: param {:?}, grad {:?}",
                p.shape(),
                g.shape()
            );
            for ((pv, &gv), vv) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(v.as_mut_slice())
            {
                *vv = self.momentum * *vv - self.learning_rate * gv;
                *pv += *vv;
            }
        }
        Ok(())
    }
}

/// One momentum step as a free function over explicit state.
pub fn sgd_step(
    params: Vec<&mut Matrix>,
    grads: &[Matrix],
    learning_rate: f64,
    momentum: f64,
    state: &mut Option<Sgd>,
) -> Result<()> {
    let opt = match state {
        Some(s) => s,
        None => state.insert(Sgd::new(learning_rate, momentum)?),
    };
    opt.step(params, grads)
}
