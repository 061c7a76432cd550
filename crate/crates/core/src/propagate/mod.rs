//! Propagation of a Gaussian input distribution through a trained GP.
//!
//! Every method returns the output mean and covariance (noise included), the
//! input-output cross-covariance `C = cov[x, f(x)]` and the implied linear map
//! `J` with `J * Sigma_in = C'`. When the GP takes a known control input
//! appended to the state, `C` and `J` refer to the state block only.

mod linearize;
mod moment;
mod monte_carlo;

pub use linearize::predict_linearized;
pub use moment::predict_moment_matched;
pub use monte_carlo::{monte_carlo_with_errors, predict_monte_carlo, MonteCarloEstimate};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::Gaussian;
use crate::gp::TrainedGp;

/// How a Gaussian is pushed through a GP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictMethod {
    /// Exact first and second moments.
    MomentMatching,
    /// Linearization of the posterior mean at the input mean.
    Linearization,
    /// Sampling estimate; deterministic for a fixed seed.
    MonteCarlo { samples: usize, seed: u64 },
}

impl PredictMethod {
    pub fn validate(&self) -> Result<()> {
        match self {
            PredictMethod::MonteCarlo { samples, .. } if *samples < 2 => Err(
                Error::InvalidArgument("Monte Carlo needs at least 2 samples".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UncertainPrediction {
    /// Output mean, `Dout`.
    pub mean: DVector<f64>,
    /// Output covariance including noise, `Dout x Dout`.
    pub cov: DMatrix<f64>,
    /// `cov[x, f(x)]`, `Din x Dout`.
    pub cross_cov: DMatrix<f64>,
    /// Implied linear map, `Dout x Din`.
    pub jacobian: DMatrix<f64>,
}

impl UncertainPrediction {
    pub fn output(&self) -> Result<Gaussian> {
        Gaussian::new(self.mean.clone(), self.cov.clone())
    }

    pub fn input_dim(&self) -> usize {
        self.jacobian.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.mean.len()
    }

    /// `[[Sigma_in, C], [C', Sigma_out]]`.
    pub fn joint_cov(&self, input_cov: &DMatrix<f64>) -> DMatrix<f64> {
        let (d, e) = (self.input_dim(), self.output_dim());
        let mut j = DMatrix::zeros(d + e, d + e);
        j.view_mut((0, 0), (d, d)).copy_from(input_cov);
        j.view_mut((0, d), (d, e)).copy_from(&self.cross_cov);
        j.view_mut((d, 0), (e, d))
            .copy_from(&self.cross_cov.transpose());
        j.view_mut((d, d), (e, e)).copy_from(&self.cov);
        j
    }
}

/// Input moments with the control appended as a zero-variance block.
pub(crate) struct AugmentedInput {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub state_dim: usize,
}

pub(crate) fn augment(
    gp: &TrainedGp,
    input: &Gaussian,
    control: Option<&DVector<f64>>,
) -> Result<AugmentedInput> {
    let d = input.dim();
    let u = control.map(|c| c.len()).unwrap_or(0);
    check_dim(gp.input_dim(), d + u)?;
    let mut mean = DVector::zeros(d + u);
    mean.rows_mut(0, d).copy_from(input.mean());
    if let Some(c) = control {
        mean.rows_mut(d, u).copy_from(c);
    }
    let mut cov = DMatrix::zeros(d + u, d + u);
    cov.view_mut((0, 0), (d, d)).copy_from(input.cov());
    Ok(AugmentedInput {
        mean,
        cov,
        state_dim: d,
    })
}

/// Dispatches on `method`; `control` is appended to the GP input when given.
pub fn propagate(
    gp: &TrainedGp,
    input: &Gaussian,
    control: Option<&DVector<f64>>,
    method: PredictMethod,
) -> Result<UncertainPrediction> {
    method.validate()?;
    let aug = augment(gp, input, control)?;
    match method {
        PredictMethod::MomentMatching => moment::moment_matched_augmented(gp, &aug),
        PredictMethod::Linearization => linearize::linearized_augmented(gp, &aug),
        PredictMethod::MonteCarlo { samples, seed } => {
            Ok(monte_carlo::monte_carlo_augmented(gp, &aug, samples, seed)?.prediction)
        }
    }
}
