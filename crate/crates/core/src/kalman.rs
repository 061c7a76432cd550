//! Kalman filtering and Rauch-Tung-Striebel smoothing.
//!
//! The filter and smoother only need the Gaussian prediction interface of a
//! [`StateSpaceModel`]: the predicted moments and the cross-covariance with
//! the input. On a [`LinearGaussianModel`] this is the exact Kalman/RTS
//! smoother; on a [`ParametricModel`] it is the extended Kalman smoother.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::Gaussian;
use crate::linalg::{cholesky_strict, symmetrize_in_place};
use crate::model::{LinearGaussianModel, ParametricModel, StateSpaceModel};
use crate::propagate::PredictMethod;

#[derive(Clone, Debug)]
pub struct SmootherOutput {
    /// `p(x_t | z_1..z_{t-1})`.
    pub predicted: Vec<Gaussian>,
    /// `p(x_t | z_1..z_t)`.
    pub filtered: Vec<Gaussian>,
    /// `p(x_t | z_1..z_T)`.
    pub smoothed: Vec<Gaussian>,
    /// `p(z_t | z_1..z_{t-1})`.
    pub innovations: Vec<Gaussian>,
}

/// Assumed-density filter followed by an RTS backward pass, with every
/// Gaussian map supplied by `model` under `method`.
pub fn gaussian_smoother<M: StateSpaceModel + ?Sized>(
    model: &M,
    z: &DMatrix<f64>,
    controls: Option<&DMatrix<f64>>,
    method: PredictMethod,
) -> Result<SmootherOutput> {
    let t_len = z.nrows();
    if t_len == 0 {
        return Err(Error::InvalidArgument(
            "need at least one measurement".into(),
        ));
    }
    check_dim(model.measurement_dim(), z.ncols())?;
    if let Some(u) = controls {
        check_dim(t_len, u.nrows())?;
    }
    let control = |t: usize| controls.map(|u| u.row(t).transpose());

    let mut predicted = Vec::with_capacity(t_len);
    let mut filtered: Vec<Gaussian> = Vec::with_capacity(t_len);
    let mut innovations = Vec::with_capacity(t_len);
    // cross-covariances cov[x_t, x_{t+1}] under the filter at t
    let mut cross = Vec::with_capacity(t_len);

    for t in 0..t_len {
        let prior = if t == 0 {
            model.prior().normalized()
        } else {
            let u = control(t - 1);
            let pred = model.predict_state(&filtered[t - 1], u.as_ref(), method)?;
            cross.push(pred.cross_cov.clone());
            pred.output()?
        };
        let pz = model.predict_measurement(&prior, method)?;
        let post = crate::ep::kalman_form_measurement_update(&prior, &pz, &z.row(t).transpose())?;
        innovations.push(pz.output()?);
        predicted.push(prior);
        filtered.push(post);
    }

    let mut smoothed = filtered.clone();
    for t in (0..t_len.saturating_sub(1)).rev() {
        let pred = &predicted[t + 1];
        let chol = cholesky_strict(pred.cov()).ok_or(Error::SingularInnovation)?;
        // G = cov[x_t, x_{t+1}] P_{t+1|t}^-1
        let gain = chol.solve(&cross[t].transpose()).transpose();
        let mean = filtered[t].mean() + &gain * (smoothed[t + 1].mean() - pred.mean());
        let mut cov =
            filtered[t].cov() + &gain * (smoothed[t + 1].cov() - pred.cov()) * gain.transpose();
        symmetrize_in_place(&mut cov);
        smoothed[t] = Gaussian::new(mean, cov)?;
    }

    Ok(SmootherOutput {
        predicted,
        filtered,
        smoothed,
        innovations,
    })
}

/// Exact Kalman filter and RTS smoother.
pub fn rts_smooth(
    model: &LinearGaussianModel,
    z: &DMatrix<f64>,
    controls: Option<&DMatrix<f64>>,
) -> Result<SmootherOutput> {
    gaussian_smoother(model, z, controls, PredictMethod::Linearization)
}

/// Extended Kalman filter with an RTS backward pass, linearizing the known
/// transition and measurement functions at the current means.
pub fn eks_smooth(
    model: &ParametricModel,
    z: &DMatrix<f64>,
    controls: Option<&DMatrix<f64>>,
) -> Result<SmootherOutput> {
    gaussian_smoother(model, z, controls, PredictMethod::Linearization)
}

/// Textbook Kalman filter written directly in terms of the system matrices,
/// kept as an independent reference for [`rts_smooth`].
pub fn kalman_filter_reference(
    model: &LinearGaussianModel,
    z: &DMatrix<f64>,
) -> Result<(Vec<Gaussian>, Vec<Gaussian>)> {
    let (a, q, h, r) = (
        &model.transition,
        &model.process_noise,
        &model.observation,
        &model.measurement_noise,
    );
    let mut m: DVector<f64> = model.prior.mean().clone();
    let mut p: DMatrix<f64> = model.prior.cov().clone();
    let mut predicted = Vec::new();
    let mut filtered = Vec::new();
    for t in 0..z.nrows() {
        if t > 0 {
            m = a * &m;
            p = a * &p * a.transpose() + q;
        }
        predicted.push(Gaussian::new(m.clone(), p.clone())?);
        let s = h * &p * h.transpose() + r;
        let s_inv = s.try_inverse().ok_or(Error::SingularInnovation)?;
        let k = &p * h.transpose() * s_inv;
        m = &m + &k * (z.row(t).transpose() - h * &m);
        p = (DMatrix::identity(p.nrows(), p.nrows()) - &k * h) * &p;
        filtered.push(Gaussian::new(m.clone(), p.clone())?);
    }
    Ok((predicted, filtered))
}
