use nalgebra::DVector;

use super::update::{
    backward_grads_from, combine, marginal_from_grads, measurement_grads_from, natural_to_cavity,
    site_update, Cavity,
};
use super::EpOptions;
use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, NaturalGaussian};
use crate::model::StateSpaceModel;

/// Initial variance of the marginals at `t > 1`.
pub const VAGUE_VARIANCE: f64 = 1e10;

/// Outcome of a single site update.
#[derive(Clone, Debug, PartialEq)]
pub enum UpdateOutcome {
    Applied,
    /// The update was numerically impossible; the bank is untouched.
    Skipped(String),
    /// Nothing to project (the fixed forward message at `t = 1`).
    NotApplicable,
}

/// Per-step messages and marginals of an EP run.
///
/// Forward messages are always proper and kept in moment form (`None` until
/// first computed, which acts as the unit message); measurement and backward
/// messages are kept in natural form because they may be improper or
/// indefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageBank {
    forward: Vec<Option<Gaussian>>,
    measurement: Vec<NaturalGaussian>,
    backward: Vec<NaturalGaussian>,
    pub marginals: Vec<Gaussian>,
}

impl MessageBank {
    pub fn new(prior: &Gaussian, len: usize) -> Self {
        let d = prior.dim();
        let vague =
            Gaussian::isotropic(DVector::zeros(d), VAGUE_VARIANCE).expect("finite vague marginal");
        let mut forward = vec![None; len];
        let mut marginals = vec![vague; len];
        if len > 0 {
            forward[0] = Some(prior.normalized());
            marginals[0] = prior.normalized();
        }
        Self {
            forward,
            measurement: vec![NaturalGaussian::unit(d); len],
            backward: vec![NaturalGaussian::unit(d); len],
            marginals,
        }
    }

    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.measurement.first().map(|m| m.dim()).unwrap_or(0)
    }

    pub fn forward_moments(&self, t: usize) -> Option<&Gaussian> {
        self.forward[t].as_ref()
    }

    pub fn forward(&self, t: usize) -> Result<NaturalGaussian> {
        match &self.forward[t] {
            Some(g) => g.to_natural(),
            None => Ok(NaturalGaussian::unit(self.dim())),
        }
    }

    pub fn measurement(&self, t: usize) -> &NaturalGaussian {
        &self.measurement[t]
    }

    pub fn backward(&self, t: usize) -> &NaturalGaussian {
        &self.backward[t]
    }

    pub fn set_measurement(&mut self, t: usize, msg: NaturalGaussian) {
        self.measurement[t] = msg;
    }

    pub fn set_backward(&mut self, t: usize, msg: NaturalGaussian) {
        self.backward[t] = msg;
    }

    /// Product of the three messages at `t`, normalized.
    pub fn message_product(&self, t: usize) -> Result<Gaussian> {
        Ok(self
            .forward(t)?
            .product(&self.measurement[t])?
            .product(&self.backward[t])?
            .to_moments()?
            .normalized())
    }

    /// Everything at `t` except the forward message.
    pub fn forward_cavity(&self, t: usize) -> Result<NaturalGaussian> {
        self.measurement[t].product(&self.backward[t])
    }

    fn moment_cavity(&self, t: usize, other: &NaturalGaussian) -> Result<Cavity> {
        match &self.forward[t] {
            Some(f) if is_unit(other) => Ok(Cavity::Proper(f.normalized())),
            _ => Ok(natural_to_cavity(self.forward(t)?.product(other)?)),
        }
    }

    /// Cavity for the measurement site at `t`.
    pub fn measurement_cavity(&self, t: usize) -> Result<Cavity> {
        self.moment_cavity(t, &self.backward[t])
    }

    /// Cavity for the backward site at `t`.
    pub fn backward_cavity(&self, t: usize) -> Result<Cavity> {
        self.moment_cavity(t, &self.measurement[t])
    }

    /// Recomputes the forward message at `t` from the backward cavity at
    /// `t - 1`; at `t = 0` the forward message stays the prior.
    pub fn update_forward<M: StateSpaceModel + ?Sized>(
        &mut self,
        model: &M,
        t: usize,
        control: Option<&DVector<f64>>,
        opts: &EpOptions,
    ) -> Result<UpdateOutcome> {
        let attempt = || -> Result<(Gaussian, Gaussian)> {
            let fwd_cavity = self.forward_cavity(t)?;
            if t == 0 {
                let prior = self.forward[0].clone().expect("prior is set");
                return Ok((combine(&prior, &fwd_cavity)?, prior));
            }
            let prev = self
                .backward_cavity(t - 1)?
                .proper()
                .ok_or(Error::IndefiniteCavity { t: t - 1 })?;
            let q_fwd = model.predict_state(&prev, control, opts.method)?.output()?;
            Ok((combine(&q_fwd, &fwd_cavity)?, q_fwd))
        };
        match attempt() {
            Ok((marginal, q_fwd)) => {
                self.marginals[t] = marginal;
                self.forward[t] = Some(q_fwd);
                Ok(if t == 0 {
                    UpdateOutcome::NotApplicable
                } else {
                    UpdateOutcome::Applied
                })
            }
            Err(e) => skip_or_fail(e, t, opts),
        }
    }

    pub fn update_measurement<M: StateSpaceModel + ?Sized>(
        &mut self,
        model: &M,
        t: usize,
        z: &DVector<f64>,
        opts: &EpOptions,
    ) -> Result<UpdateOutcome> {
        let attempt = || -> Result<(Gaussian, NaturalGaussian)> {
            let cav = self
                .measurement_cavity(t)?
                .proper()
                .ok_or(Error::IndefiniteCavity { t })?;
            let pred = model.predict_measurement(&cav, opts.method)?;
            let grads = measurement_grads_from(&pred, z)?;
            project(&cav, &grads, &self.measurement[t], opts.damping)
        };
        match attempt() {
            Ok((marginal, site)) => {
                self.marginals[t] = marginal;
                self.measurement[t] = site;
                Ok(UpdateOutcome::Applied)
            }
            Err(e) => skip_or_fail(e, t, opts),
        }
    }

    /// Refits the backward site at `t` against the forward cavity at `t + 1`;
    /// the last step has no backward factor.
    pub fn update_backward<M: StateSpaceModel + ?Sized>(
        &mut self,
        model: &M,
        t: usize,
        control: Option<&DVector<f64>>,
        opts: &EpOptions,
    ) -> Result<UpdateOutcome> {
        if t + 1 >= self.len() {
            return Ok(UpdateOutcome::NotApplicable);
        }
        let attempt = || -> Result<(Gaussian, NaturalGaussian)> {
            let cav = self
                .backward_cavity(t)?
                .proper()
                .ok_or(Error::IndefiniteCavity { t })?;
            let next = self.forward_cavity(t + 1)?;
            let pred = model.predict_state(&cav, control, opts.method)?;
            let grads = backward_grads_from(&pred, &next)?;
            project(&cav, &grads, &self.backward[t], opts.damping)
        };
        match attempt() {
            Ok((marginal, site)) => {
                self.marginals[t] = marginal;
                self.backward[t] = site;
                Ok(UpdateOutcome::Applied)
            }
            Err(e) => skip_or_fail(e, t, opts),
        }
    }
}

fn is_unit(m: &NaturalGaussian) -> bool {
    m.is_improper() && m.shift().iter().all(|v| *v == 0.0)
}

/// New marginal and site from the cavity and the log-partition derivatives.
fn project(
    cav: &Gaussian,
    grads: &super::LogPartitionGrads,
    previous: &NaturalGaussian,
    damping: f64,
) -> Result<(Gaussian, NaturalGaussian)> {
    let marginal = marginal_from_grads(cav, grads)?;
    let site = site_update(cav, grads, previous, damping)?;
    if site
        .precision()
        .iter()
        .chain(site.shift().iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::UpdateSkipped("non-finite site".into()));
    }
    if damping >= 1.0 {
        Ok((marginal, site))
    } else {
        Ok((combine(cav, &site)?, site))
    }
}

fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::NonPositiveDefinite(_)
            | Error::CholeskyFailure(_)
            | Error::NonFinite
            | Error::UpdateSkipped(_)
            | Error::IndefiniteCavity { .. }
            | Error::SingularInnovation
    )
}

fn skip_or_fail(e: Error, t: usize, opts: &EpOptions) -> Result<UpdateOutcome> {
    if is_numerical(&e) && opts.skip_on_indefinite_cavity {
        Ok(UpdateOutcome::Skipped(format!("t = {t}: {e}")))
    } else {
        Err(e)
    }
}
