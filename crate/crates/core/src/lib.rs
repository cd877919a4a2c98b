//! Random feature models trained to generalize on unseen parts of their input
//! domain: Hermite and discrete bases, feature second-moment kernels, limit
//! predictors over interpolator spaces, and gradient descent with line search.

pub mod basis;
pub mod error;
pub mod experiment;
pub mod features;
pub mod gotu;
pub mod kernel;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
