//! Iterative Gaussian expectation propagation for Gaussian-process dynamical
//! systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`gaussian`]: moment and natural forms, products, quotients, densities.
//! * [`gp`]: SE-ARD GP regression, hyperparameter fitting, JSON model files.
//! * [`propagate`]: pushing a Gaussian through a GP by moment matching,
//!   mean linearization or sampling.
//! * [`model`]: the state-space models the smoother runs on.
//! * [`ep`]: the EP smoother over forward, measurement and backward sites.
//! * [`kalman`]: Kalman filter, RTS and extended Kalman smoothers.
//! * [`systems`]: the sine and pendulum benchmark systems.
//! * [`bench`]: metrics and the experiment runner behind the CLI.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod ep;
pub mod error;
pub mod gaussian;
pub mod gp;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod propagate;
pub mod systems;

pub use error::{Error, Result};
pub use gaussian::{divide, log_pdf, moment_distance, multiply, Gaussian, NaturalGaussian};
pub use gp::{GpHyper, TrainedGp};
pub use model::{GpdsModel, LinearGaussianModel, ParametricModel, StateSpaceModel};
pub use propagate::{PredictMethod, UncertainPrediction};
