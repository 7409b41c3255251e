//! Trainable components: a small reverse-mode autodiff tape, dense networks,
//! optimizers, the neural MI estimator, and the training procedures (pooled
//! ERM, the adversarial invariance game, and the alternating selector loop).

pub mod bundle;
pub mod error;
pub mod gradcheck;
pub mod mine;
pub mod network;
pub mod optim;
pub mod tape;
pub mod train;

pub use error::{LearnError, Result};
