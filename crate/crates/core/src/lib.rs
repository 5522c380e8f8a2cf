//! Linear explanations of classifiers, computed two ways.
//!
//! * [`lime`]: post-hoc local surrogates, fit by kernel-weighted sparse
//!   least squares around an instance of any black-box predictor.
//! * [`models::CenModel`]: contextual explanation networks. An encoder
//!   produces simplex attention over a dictionary of linear models, and the
//!   prediction is the resulting explanation applied to interpretable
//!   features.
//!
//! [`experiments`] holds the sweep harness (noise, feature subsampling,
//! sample complexity, convergence, and a model comparison table).

mod error;

pub mod data;
pub mod experiments;
pub mod lime;
pub mod models;
pub mod numkit;

pub use error::{Error, Result};
pub use numkit::{Matrix, Rng};
