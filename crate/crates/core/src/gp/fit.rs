//! Type-II maximum likelihood for the SE-ARD hyperparameters.
//!
//! Each output dimension is fitted independently by Adam ascent on the log
//! marginal likelihood in log-hyperparameter space. The best iterate seen is
//! returned, so the result is deterministic given the initial point and the
//! iteration budget.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{kernel_matrix, GpHyper};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky_jittered, log_det};

/// Log-parameters are kept inside this box during optimization.
const LOG_BOUND: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitOptions {
    pub iters: usize,
    pub learning_rate: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            iters: 200,
            learning_rate: 0.05,
        }
    }
}

/// `log p(y | X, hyper)` for one output column.
pub fn log_marginal_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, hyper: &GpHyper) -> Result<f64> {
    Ok(lml_and_grad(x, y, hyper, false)?.0)
}

/// Gradient of the log marginal likelihood with respect to
/// `[log l_1 .. log l_d, log sf2, log sn2]`.
pub fn log_marginal_likelihood_grad(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    hyper: &GpHyper,
) -> Result<Vec<f64>> {
    Ok(lml_and_grad(x, y, hyper, true)?.1)
}

fn lml_and_grad(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    hyper: &GpHyper,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    check_dim(x.nrows(), y.len())?;
    check_dim(hyper.input_dim(), x.ncols())?;
    let n = x.nrows();
    let kf = kernel_matrix(x, hyper);
    let mut k = kf.clone();
    for i in 0..n {
        k[(i, i)] += hyper.noise_var;
    }
    let chol = cholesky_jittered(&k, "marginal likelihood kernel")?;
    let alpha = chol.solve(y);
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det(&chol) - 0.5 * n as f64 * (2.0 * PI).ln();
    if !lml.is_finite() {
        return Err(Error::NonFinite);
    }
    if !with_grad {
        return Ok((lml, Vec::new()));
    }
    // dL/dtheta = 0.5 tr((alpha alpha' - K^-1) dK/dtheta)
    let w = &alpha * alpha.transpose() - chol.inverse();
    let d = hyper.input_dim();
    let mut grad = vec![0.0; d + 2];
    for (k_dim, g) in grad.iter_mut().take(d).enumerate() {
        let l2 = hyper.lengthscales[k_dim] * hyper.lengthscales[k_dim];
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let diff = x[(i, k_dim)] - x[(j, k_dim)];
                s += w[(i, j)] * kf[(i, j)] * diff * diff / l2;
            }
        }
        *g = 0.5 * s;
    }
    grad[d] = 0.5 * w.component_mul(&kf).sum();
    grad[d + 1] = 0.5 * hyper.noise_var * w.trace();
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok((lml, grad))
}

/// Fits one hyperparameter set per output column of `y`, starting every
/// column from `init`. `iters == 0` returns `init` unchanged.
pub fn fit_hyperparameters(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    init: &GpHyper,
    opts: FitOptions,
) -> Result<Vec<GpHyper>> {
    check_dim(x.nrows(), y.nrows())?;
    init.validate()?;
    if x.nrows() < 2 {
        return Err(Error::InvalidArgument(
            "hyperparameter fitting needs n >= 2".into(),
        ));
    }
    (0..y.ncols())
        .map(|a| fit_one(x, &y.column(a).into_owned(), init, opts))
        .collect()
}

fn fit_one(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    init: &GpHyper,
    opts: FitOptions,
) -> Result<GpHyper> {
    if opts.iters == 0 {
        return Ok(init.clone());
    }
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut theta = init.to_log_params();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let (mut best_theta, mut best) = (theta.clone(), f64::NEG_INFINITY);
    for it in 1..=opts.iters {
        let hyper = GpHyper::from_log_params(&theta);
        let (lml, grad) = match lml_and_grad(x, y, &hyper, true) {
            Ok(r) => r,
            Err(Error::NonFinite) if best.is_finite() => break,
            Err(e) => return Err(e),
        };
        if lml > best {
            best = lml;
            best_theta.clone_from(&theta);
        }
        for p in 0..theta.len() {
            m[p] = b1 * m[p] + (1.0 - b1) * grad[p];
            v[p] = b2 * v[p] + (1.0 - b2) * grad[p] * grad[p];
            let m_hat = m[p] / (1.0 - b1.powi(it as i32));
            let v_hat = v[p] / (1.0 - b2.powi(it as i32));
            theta[p] += opts.learning_rate * m_hat / (v_hat.sqrt() + eps);
            theta[p] = theta[p].clamp(-LOG_BOUND, LOG_BOUND);
        }
    }
    if let Ok(lml) = log_marginal_likelihood(x, y, &GpHyper::from_log_params(&theta)) {
        if lml > best {
            best_theta = theta;
        }
    }
    Ok(GpHyper::from_log_params(&best_theta))
}

/// Data-scaled starting point: lengthscales from the input spread, signal
/// variance from the target variance, noise at 1% of it.
pub fn initial_hyper(x: &DMatrix<f64>, y: &DVector<f64>) -> GpHyper {
    let n = x.nrows().max(1) as f64;
    let spread = |v: &[f64]| -> f64 {
        let m = v.iter().sum::<f64>() / n;
        (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt()
    };
    let lengthscales = (0..x.ncols())
        .map(|k| {
            let s = spread(x.column(k).as_slice());
            if s > 1e-8 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let var = spread(y.as_slice()).powi(2).max(1e-6);
    GpHyper {
        lengthscales,
        signal_var: var,
        noise_var: 0.01 * var,
    }
}

/// Fits every output column from its own [`initial_hyper`] and trains the GP.
pub fn fit_gp(x: &DMatrix<f64>, y: &DMatrix<f64>, opts: FitOptions) -> Result<super::TrainedGp> {
    check_dim(x.nrows(), y.nrows())?;
    let hypers = (0..y.ncols())
        .map(|a| {
            let col = y.column(a).into_owned();
            fit_hyperparameters(
                x,
                &DMatrix::from_column_slice(col.len(), 1, col.as_slice()),
                &initial_hyper(x, &col),
                opts,
            )
            .map(|mut h| h.remove(0))
        })
        .collect::<Result<Vec<_>>>()?;
    super::TrainedGp::train(x.clone(), y.clone(), hypers)
}
