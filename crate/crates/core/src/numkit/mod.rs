//! Numerical substrate: dense matrices, seeded random streams, MLP layers
//! with hand-derived gradients, momentum SGD, a Cholesky solver and a
//! finite-difference checker.

pub mod gradcheck;
pub mod linalg;
pub mod matrix;
pub mod nn;
pub mod optim;
pub mod rng;

pub use gradcheck::grad_check;
pub use linalg::{cholesky, cholesky_solve};
pub use matrix::{dot, gemm, gemm_into, Matrix, Trans};
pub use nn::{
    argmax, log_sum_exp, softmax, softmax_cross_entropy, softmax_rows, Activation, Dense,
    MlpCache, MlpParams,
};
pub use optim::{sgd_step, Sgd};
pub use rng::{derive_seed, tag, Rng};
