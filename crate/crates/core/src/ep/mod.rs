//! Gaussian expectation propagation on a state-space chain.
//!
//! The posterior over each `x_t` is approximated by the product of three
//! sites: a forward message from the transition into `x_t`, a measurement
//! message from `z_t`, and a backward message from the transition out of
//! `x_t`. A sweep visits the forward and measurement sites for `t = 1..T`
//! and then, by default, the backward sites for `t = T-1..1`, so the first
//! sweep is the classic single-pass smoother and further sweeps refine the
//! measurement and backward sites in context.

mod bank;
mod diagnostics;
mod update;

pub use bank::{MessageBank, UpdateOutcome, VAGUE_VARIANCE};
pub use diagnostics::{DiagnosticsRecord, EpDiagnostics};
pub use update::{
    backward_grads, backward_grads_from, cavity, forward_update, kalman_form_measurement_update,
    marginal_from_grads, measurement_grads, measurement_grads_from, natural_log_partition,
    site_update, Cavity, LogPartitionGrads,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bench::{metric_nll_x, metric_nll_z};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{moment_distance, Gaussian};
use crate::model::StateSpaceModel;
use crate::propagate::PredictMethod;

/// Order in which sites are visited within one sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    /// Forward and measurement sites left to right, then backward sites right
    /// to left.
    #[default]
    ForwardBackward,
    /// Forward, measurement and backward site at each `t`, left to right.
    Interleaved,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Natural-parameter step size in `(0, 1]`; 1 is undamped.
    pub damping: f64,
    pub method: PredictMethod,
    /// Skip and count a site update whose cavity or result is not positive
    /// definite instead of failing the run.
    pub skip_on_indefinite_cavity: bool,
    pub schedule: Schedule,
}

impl Default for EpOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            damping: 1.0,
            method: PredictMethod::MomentMatching,
            skip_on_indefinite_cavity: true,
            schedule: Schedule::ForwardBackward,
        }
    }
}

impl EpOptions {
    pub fn with_method(method: PredictMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    /// A single sweep: the non-iterated smoother.
    pub fn single_sweep(method: PredictMethod) -> Self {
        Self {
            max_iters: 1,
            ..Self::with_method(method)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument("damping must lie in (0, 1]".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        self.method.validate()
    }
}

#[derive(Clone, Debug)]
pub struct EpResult {
    pub marginals: Vec<Gaussian>,
    pub bank: MessageBank,
    pub diagnostics: EpDiagnostics,
}

/// Runs EP to convergence or `opts.max_iters` sweeps.
///
/// `z` holds one measurement per row; `controls`, when given, holds the
/// control applied at each step (row `t` drives the transition `t -> t+1`).
pub fn ep_smooth<M: StateSpaceModel + ?Sized>(
    model: &M,
    z: &DMatrix<f64>,
    controls: Option<&DMatrix<f64>>,
    opts: &EpOptions,
) -> Result<EpResult> {
    run(model, z, controls, opts, None)
}

/// As [`ep_smooth`], additionally recording NLL_x against `truth` and NLL_z
/// after every sweep.
pub fn ep_smooth_with_truth<M: StateSpaceModel + ?Sized>(
    model: &M,
    z: &DMatrix<f64>,
    controls: Option<&DMatrix<f64>>,
    truth: &DMatrix<f64>,
    opts: &EpOptions,
) -> Result<EpResult> {
    check_dim(z.nrows(), truth.nrows())?;
    check_dim(model.state_dim(), truth.ncols())?;
    run(model, z, controls, opts, Some(truth))
}

fn run<M: StateSpaceModel + ?Sized>(
    model: &M,
    z: &DMatrix<f64>,
    controls: Option<&DMatrix<f64>>,
    opts: &EpOptions,
    truth: Option<&DMatrix<f64>>,
) -> Result<EpResult> {
    opts.validate()?;
    let t_len = z.nrows();
    if t_len == 0 {
        return Err(Error::InvalidArgument(
            "need at least one measurement".into(),
        ));
    }
    check_dim(model.measurement_dim(), z.ncols())?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if let Some(u) = controls {
        check_dim(t_len, u.nrows())?;
        check_dim(model.control_dim(), u.ncols())?;
    } else if model.control_dim() > 0 {
        return Err(Error::InvalidArgument("model expects controls".into()));
    }

    let zs: Vec<DVector<f64>> = z.row_iter().map(|r| r.transpose()).collect();
    let us: Option<Vec<DVector<f64>>> =
        controls.map(|u| u.row_iter().map(|r| r.transpose()).collect());
    let control = |t: usize| us.as_ref().map(|u| &u[t]);

    let mut bank = MessageBank::new(model.prior(), t_len);
    let mut diag = EpDiagnostics::default();

    for iteration in 1..=opts.max_iters {
        let previous = bank.marginals.clone();
        let mut attempted = 0usize;
        let mut skipped = 0usize;
        let mut tally = |outcome: Result<UpdateOutcome>| -> Result<()> {
            match outcome? {
                UpdateOutcome::Applied => attempted += 1,
                UpdateOutcome::Skipped(_) => {
                    attempted += 1;
                    skipped += 1;
                }
                UpdateOutcome::NotApplicable => {}
            }
            Ok(())
        };

        match opts.schedule {
            Schedule::ForwardBackward => {
                for t in 0..t_len {
                    let u_prev = if t > 0 { control(t - 1) } else { None };
                    tally(bank.update_forward(model, t, u_prev, opts))?;
                    tally(bank.update_measurement(model, t, &zs[t], opts))?;
                }
                for t in (0..t_len.saturating_sub(1)).rev() {
                    tally(bank.update_backward(model, t, control(t), opts))?;
                }
            }
            Schedule::Interleaved => {
                for t in 0..t_len {
                    let u_prev = if t > 0 { control(t - 1) } else { None };
                    tally(bank.update_forward(model, t, u_prev, opts))?;
                    tally(bank.update_measurement(model, t, &zs[t], opts))?;
                    if t + 1 < t_len {
                        tally(bank.update_backward(model, t, control(t), opts))?;
                    }
                }
            }
        }

        if attempted > 0 && skipped == attempted {
            return Err(Error::Divergence { iteration });
        }

        let mut change = 0.0;
        for (a, b) in previous.iter().zip(&bank.marginals) {
            change += moment_distance(a, b)?;
        }
        change /= t_len as f64;

        diag.iterations = iteration;
        diag.convergence.push(change);
        diag.skipped_per_iteration.push(skipped);
        diag.skipped += skipped;
        diag.attempted += attempted;
        if let Some(x) = truth {
            diag.nll_x.push(metric_nll_x(&bank.marginals, x)?);
            let preds = one_step_predictives(&bank, model, opts.method)?;
            diag.nll_z.push(metric_nll_z(&preds, z)?);
        }
        if change < opts.tol {
            diag.converged = true;
            break;
        }
    }

    Ok(EpResult {
        marginals: bank.marginals.clone(),
        bank,
        diagnostics: diag,
    })
}

/// One-step-ahead predictive distributions of `z_t`: the forward message at
/// `t` (the time update given `z_1..z_{t-1}`) pushed through the measurement
/// model.
pub fn one_step_predictives<M: StateSpaceModel + ?Sized>(
    bank: &MessageBank,
    model: &M,
    method: PredictMethod,
) -> Result<Vec<Gaussian>> {
    (0..bank.len())
        .map(|t| {
            let prior = bank.forward_moments(t).ok_or_else(|| {
                Error::InvalidArgument(format!("forward message at t = {t} was never computed"))
            })?;
            model.predict_measurement(prior, method)?.output()
        })
        .collect()
}
