//! Linearization of the posterior GP mean at the input mean.
//!
//! The mean is the posterior mean at `mu`, `V` is its Jacobian there and the
//! covariance is `V Sigma V' + Sigma_w`, where `Sigma_w` is the diagonal of
//! model variance plus noise, re-evaluated at every input mean.

use nalgebra::DMatrix;

use super::{augment, AugmentedInput, UncertainPrediction};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::gp::TrainedGp;
use crate::linalg::symmetrize_in_place;

pub fn predict_linearized(gp: &TrainedGp, input: &Gaussian) -> Result<UncertainPrediction> {
    if !input.is_positive_definite() {
        return Err(Error::NonPositiveDefinite("linearization input covariance"));
    }
    linearized_augmented(gp, &augment(gp, input, None)?)
}

pub(crate) fn linearized_augmented(
    gp: &TrainedGp,
    inp: &AugmentedInput,
) -> Result<UncertainPrediction> {
    let ds = inp.state_dim;
    let (mean, var) = gp.predict_point(&inp.mean)?;
    let full = gp.mean_jacobian(&inp.mean)?;
    let v = full.columns(0, ds).into_owned();
    let sigma_x = inp.cov.view((0, 0), (ds, ds)).into_owned();
    let cross_cov: DMatrix<f64> = &sigma_x * v.transpose();
    let mut cov = &v * &cross_cov;
    for a in 0..mean.len() {
        cov[(a, a)] += var[a];
    }
    symmetrize_in_place(&mut cov);
    Ok(UncertainPrediction {
        mean,
        cov,
        cross_cov,
        jacobian: v,
    })
}
