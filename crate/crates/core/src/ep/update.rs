//! Site projections through log-partition derivatives.
//!
//! Every factor is projected by approximating its partition function with a
//! Gaussian in the output of an uncertain prediction, differentiating that
//! with respect to the predicted moments, and pulling the derivatives back
//! to the cavity moments through the implied linear map `J`:
//!
//!   `grad_m = g' J`,  `grad_s = J' G J`
//!
//! where `g` and `G` are the derivatives w.r.t. the predicted mean and
//! covariance. The marginal then follows from the cavity as
//!
//!   `mu = mu_c + S_c grad_m'`,  `S = S_c - S_c (grad_m' grad_m - 2 grad_s) S_c`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{log_pdf, Gaussian, NaturalGaussian};
use crate::gp::TrainedGp;
use crate::linalg::{
    cholesky_jittered, cholesky_strict, log_det, regularize, solve_general, symmetrize_in_place,
};
use crate::propagate::{propagate, PredictMethod, UncertainPrediction};

/// `log Z` and its derivatives with respect to the cavity mean and covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct LogPartitionGrads {
    pub log_z: f64,
    pub grad_mean: DVector<f64>,
    pub grad_cov: DMatrix<f64>,
}

impl LogPartitionGrads {
    /// The derivatives of a constant factor.
    pub fn flat(dim: usize, log_z: f64) -> Self {
        Self {
            log_z,
            grad_mean: DVector::zeros(dim),
            grad_cov: DMatrix::zeros(dim, dim),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.log_z.is_finite()
            && self.grad_mean.iter().all(|v| v.is_finite())
            && self.grad_cov.iter().all(|v| v.is_finite())
    }

    /// `grad_m' grad_m - 2 grad_s`.
    fn curvature(&self) -> DMatrix<f64> {
        let mut m = &self.grad_mean * self.grad_mean.transpose() - &self.grad_cov * 2.0;
        symmetrize_in_place(&mut m);
        m
    }
}

/// Result of dividing a site out of a marginal.
#[derive(Clone, Debug, PartialEq)]
pub enum Cavity {
    Proper(Gaussian),
    /// The quotient has no moment form; the site update has to be skipped.
    Indefinite(NaturalGaussian),
}

impl Cavity {
    pub fn proper(self) -> Option<Gaussian> {
        match self {
            Cavity::Proper(g) => Some(g),
            Cavity::Indefinite(_) => None,
        }
    }
}

/// `marginal / message`.
pub fn cavity(marginal: &Gaussian, message: &NaturalGaussian) -> Result<Cavity> {
    check_dim(marginal.dim(), message.dim())?;
    if message.is_improper() && message.shift().iter().all(|v| *v == 0.0) {
        return Ok(Cavity::Proper(marginal.clone()));
    }
    let q = marginal.to_natural()?.quotient(message)?;
    Ok(natural_to_cavity(q))
}

pub(crate) fn natural_to_cavity(q: NaturalGaussian) -> Cavity {
    match q.to_moments() {
        Ok(g) => Cavity::Proper(g),
        Err(_) => Cavity::Indefinite(q),
    }
}

/// Moments of the tilted distribution from the cavity and the derivatives of
/// its partition function.
pub fn marginal_from_grads(cavity: &Gaussian, grads: &LogPartitionGrads) -> Result<Gaussian> {
    check_dim(cavity.dim(), grads.grad_mean.len())?;
    if !grads.is_finite() {
        return Err(Error::UpdateSkipped(
            "non-finite log-partition derivatives".into(),
        ));
    }
    let s = cavity.cov();
    let mean = cavity.mean() + s * &grads.grad_mean;
    let mut cov = s - s * grads.curvature() * s;
    symmetrize_in_place(&mut cov);
    let (cov, _) = regularize(&cov)
        .ok_or_else(|| Error::UpdateSkipped("updated marginal is not positive definite".into()))?;
    Gaussian::new(mean, cov)
}

/// New site message in natural form, `q_new / cavity`, without inverting any
/// covariance: with `M = grad_m' grad_m - 2 grad_s`,
///
///   `precision = (I - M S_c)^-1 M`,
///   `shift = precision mu_c + (I + precision S_c) grad_m'`.
///
/// The log-scale makes `integral(site * cavity) = Z`. With `damping < 1` the
/// result is blended with `previous` in natural parameters.
pub fn site_update(
    cavity: &Gaussian,
    grads: &LogPartitionGrads,
    previous: &NaturalGaussian,
    damping: f64,
) -> Result<NaturalGaussian> {
    let d = cavity.dim();
    check_dim(d, grads.grad_mean.len())?;
    check_dim(d, previous.dim())?;
    let m = grads.curvature();
    let s = cavity.cov();
    let lhs = DMatrix::identity(d, d) - &m * s;
    let mut precision = solve_general(&lhs, &m)
        .map_err(|_| Error::UpdateSkipped("site precision is singular".into()))?;
    symmetrize_in_place(&mut precision);
    let shift =
        &precision * cavity.mean() + (DMatrix::identity(d, d) + &precision * s) * &grads.grad_mean;
    let site = NaturalGaussian::new(precision, shift, 0.0)?;
    let norm = natural_log_partition(&cavity.normalized(), &site)?.log_z;
    let site = site.with_log_scale(grads.log_z - norm);
    if damping >= 1.0 {
        Ok(site)
    } else {
        site.blend(previous, damping)
    }
}

/// `Z = integral N(x | mean, cov) * message(x) dx` for a message in natural
/// form, with derivatives w.r.t. `mean` and `cov`. Writing `P`, `h` for the
/// message precision and shift:
///
///   `g = (I + P S)^-1 (h - P m)`,  `G = 0.5 (g g' - (I + P S)^-1 P)`.
///
/// Both vanish for the unit message; for a proper message they reduce to the
/// familiar `N(mu_msg | m, S + P^-1)` derivatives.
pub fn natural_log_partition(g: &Gaussian, message: &NaturalGaussian) -> Result<LogPartitionGrads> {
    let d = g.dim();
    check_dim(d, message.dim())?;
    let (p, h) = (message.precision(), message.shift());
    let s = g.cov();
    let mu = g.mean();
    let l = cholesky_jittered(s, "partition covariance")?.l();
    let mut inner = DMatrix::identity(d, d) + l.transpose() * p * &l;
    symmetrize_in_place(&mut inner);
    let inner_chol = cholesky_strict(&inner)
        .ok_or_else(|| Error::UpdateSkipped("partition integral diverges".into()))?;

    let lhs = DMatrix::identity(d, d) + p * s;
    let mut rhs = DMatrix::zeros(d, d + 1);
    rhs.column_mut(0).copy_from(&(h - p * mu));
    rhs.view_mut((0, 1), (d, d)).copy_from(p);
    let sol = solve_general(&lhs, &rhs)
        .map_err(|_| Error::UpdateSkipped("singular partition system".into()))?;
    let grad_mean = sol.column(0).into_owned();
    let mut grad_cov = (&grad_mean * grad_mean.transpose() - sol.columns(1, d)) * 0.5;
    symmetrize_in_place(&mut grad_cov);

    let expo = 0.5 * (mu.dot(&grad_mean) + h.dot(mu) + h.dot(&(s * &grad_mean)));
    let log_z = g.log_scale() + message.log_scale() - 0.5 * log_det(&inner_chol) + expo;
    Ok(LogPartitionGrads {
        log_z,
        grad_mean,
        grad_cov,
    })
}

/// Pulls derivatives w.r.t. the predicted moments back to the cavity through
/// `J`; the cross terms vanish under the implied linearization.
fn chain_rule(pred: &UncertainPrediction, outer: LogPartitionGrads) -> LogPartitionGrads {
    let j = &pred.jacobian;
    let grad_mean = j.transpose() * &outer.grad_mean;
    let mut grad_cov = j.transpose() * &outer.grad_cov * j;
    symmetrize_in_place(&mut grad_cov);
    LogPartitionGrads {
        log_z: outer.log_z,
        grad_mean,
        grad_cov,
    }
}

/// Measurement-site derivatives from a prediction of `z_t` made at the cavity.
/// With `nu = z - mu_z` and `g = S_z^-1 nu`: `grad_m = g' J` and
/// `grad_s = 0.5 J' (g g' - S_z^-1) J`.
pub fn measurement_grads_from(
    pred: &UncertainPrediction,
    z: &DVector<f64>,
) -> Result<LogPartitionGrads> {
    check_dim(pred.output_dim(), z.len())?;
    let chol = cholesky_jittered(&pred.cov, "predicted measurement covariance")?;
    let nu = z - &pred.mean;
    let g = chol.solve(&nu);
    let mut s_inv = chol.inverse();
    symmetrize_in_place(&mut s_inv);
    let log_z = log_pdf(&pred.output()?, z)?;
    let mut outer = (&g * g.transpose() - s_inv) * 0.5;
    symmetrize_in_place(&mut outer);
    Ok(chain_rule(
        pred,
        LogPartitionGrads {
            log_z,
            grad_mean: g,
            grad_cov: outer,
        },
    ))
}

/// Backward-site derivatives: the prediction of `x_{t+1}` from the cavity at
/// `t` integrated against the forward cavity at `t + 1`, which is kept in
/// natural form so that it may be improper.
pub fn backward_grads_from(
    pred: &UncertainPrediction,
    fwd_cavity_next: &NaturalGaussian,
) -> Result<LogPartitionGrads> {
    check_dim(pred.output_dim(), fwd_cavity_next.dim())?;
    let outer = natural_log_partition(&pred.output()?, fwd_cavity_next)?;
    Ok(chain_rule(pred, outer))
}

/// Measurement-site derivatives for the GP `gp_g` at `cavity`.
pub fn measurement_grads(
    gp_g: &TrainedGp,
    cavity: &Gaussian,
    z: &DVector<f64>,
    method: PredictMethod,
) -> Result<LogPartitionGrads> {
    measurement_grads_from(&propagate(gp_g, cavity, None, method)?, z)
}

/// Backward-site derivatives for the transition GP `gp_h` at `cavity_t`.
pub fn backward_grads(
    gp_h: &TrainedGp,
    cavity_t: &Gaussian,
    control: Option<&DVector<f64>>,
    fwd_cavity_next: &NaturalGaussian,
    method: PredictMethod,
) -> Result<LogPartitionGrads> {
    backward_grads_from(
        &propagate(gp_h, cavity_t, control, method)?,
        fwd_cavity_next,
    )
}

/// Forward message and marginal at `t`: the prediction of `x_t` from the
/// backward cavity at `t - 1`, multiplied by the forward cavity at `t`.
pub fn forward_update(
    gp_h: &TrainedGp,
    back_cavity_prev: &Gaussian,
    control: Option<&DVector<f64>>,
    fwd_cavity_t: &NaturalGaussian,
    method: PredictMethod,
) -> Result<(Gaussian, Gaussian)> {
    let q_fwd = propagate(gp_h, back_cavity_prev, control, method)?.output()?;
    let marginal = combine(&q_fwd, fwd_cavity_t)?;
    Ok((marginal, q_fwd))
}

/// Proper Gaussian times a natural-form message, normalized.
pub(crate) fn combine(g: &Gaussian, message: &NaturalGaussian) -> Result<Gaussian> {
    if message.is_improper() && message.shift().iter().all(|v| *v == 0.0) {
        return Ok(g.normalized());
    }
    g.normalized()
        .to_natural()?
        .with_log_scale(0.0)
        .product(&message.clone().with_log_scale(0.0))?
        .to_moments()
        .map(|m| m.normalized())
        .map_err(|_| Error::UpdateSkipped("marginal precision is not positive definite".into()))
}

/// Measurement update in gain form: `K = C S_z^-1`,
/// `mu = mu_c + K (z - mu_z)`, `S = S_c - K C'`.
pub fn kalman_form_measurement_update(
    cavity: &Gaussian,
    pred: &UncertainPrediction,
    z: &DVector<f64>,
) -> Result<Gaussian> {
    check_dim(cavity.dim(), pred.cross_cov.nrows())?;
    check_dim(pred.output_dim(), z.len())?;
    let chol = cholesky_strict(&pred.cov).ok_or(Error::SingularInnovation)?;
    let gain = chol.solve(&pred.cross_cov.transpose()).transpose();
    let mean = cavity.mean() + &gain * (z - &pred.mean);
    let mut cov = cavity.cov() - &gain * pred.cross_cov.transpose();
    symmetrize_in_place(&mut cov);
    Gaussian::new(mean, cov)
}
