//! Sampling reference for the closed-form propagation methods.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{augment, AugmentedInput, UncertainPrediction};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::gp::{PredictScratch, TrainedGp};
use crate::linalg::{cholesky_jittered, spd_inverse, symmetrize_in_place};

/// Monte-Carlo moments together with the standard error of every entry.
#[derive(Clone, Debug)]
pub struct MonteCarloEstimate {
    pub prediction: UncertainPrediction,
    pub mean_se: DVector<f64>,
    pub cov_se: DMatrix<f64>,
    pub cross_cov_se: DMatrix<f64>,
}

pub fn predict_monte_carlo(
    gp: &TrainedGp,
    input: &Gaussian,
    samples: usize,
    seed: u64,
) -> Result<UncertainPrediction> {
    Ok(monte_carlo_with_errors(gp, input, samples, seed)?.prediction)
}

pub fn monte_carlo_with_errors(
    gp: &TrainedGp,
    input: &Gaussian,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    monte_carlo_augmented(gp, &augment(gp, input, None)?, samples, seed)
}

/// Samples `x ~ input`, evaluates the point prediction and aggregates by the
/// law of total variance: `cov = cov(means) + diag(mean(variances))`.
pub(crate) fn monte_carlo_augmented(
    gp: &TrainedGp,
    inp: &AugmentedInput,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if samples < 2 {
        return Err(Error::InvalidArgument(
            "Monte Carlo needs at least 2 samples".into(),
        ));
    }
    let (d, ds, e) = (gp.input_dim(), inp.state_dim, gp.output_dim());
    let sigma_x = inp.cov.view((0, 0), (ds, ds)).into_owned();
    let chol_l = if sigma_x.iter().all(|v| *v == 0.0) {
        DMatrix::zeros(ds, ds)
    } else {
        cholesky_jittered(&sigma_x, "Monte Carlo input covariance")?.l()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = PredictScratch::new(gp);
    let mut xs = vec![0.0; samples * ds];
    let mut ms = vec![0.0; samples * e];
    let mut vs = vec![0.0; samples * e];
    let mut z = vec![0.0; ds];
    let mut x = inp.mean.as_slice().to_vec();
    for s in 0..samples {
        for zk in z.iter_mut() {
            *zk = StandardNormal.sample(&mut rng);
        }
        for r in 0..ds {
            let mut v = inp.mean[r];
            for c in 0..=r {
                v += chol_l[(r, c)] * z[c];
            }
            x[r] = v;
        }
        debug_assert_eq!(x.len(), d);
        xs[s * ds..(s + 1) * ds].copy_from_slice(&x[..ds]);
        let (m, v) = (&mut ms[s * e..(s + 1) * e], &mut vs[s * e..(s + 1) * e]);
        gp.predict_into(&x, &mut scratch, m, v);
    }

    let nf = samples as f64;
    let col_mean = |data: &[f64], width: usize, k: usize| -> f64 {
        (0..samples).map(|s| data[s * width + k]).sum::<f64>() / nf
    };
    let mbar: Vec<f64> = (0..e).map(|a| col_mean(&ms, e, a)).collect();
    let vbar: Vec<f64> = (0..e).map(|a| col_mean(&vs, e, a)).collect();
    let xbar: Vec<f64> = (0..ds).map(|k| col_mean(&xs, ds, k)).collect();

    // mean and sample standard deviation of a per-sample statistic
    let stats = |f: &dyn Fn(usize) -> f64| -> (f64, f64) {
        let mean = (0..samples).map(f).sum::<f64>() / nf;
        let var = (0..samples).map(|s| (f(s) - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        (mean, var.sqrt())
    };

    let mut mean = DVector::zeros(e);
    let mut mean_se = DVector::zeros(e);
    let mut cov = DMatrix::zeros(e, e);
    let mut cov_se = DMatrix::zeros(e, e);
    let unbias = nf / (nf - 1.0);
    for a in 0..e {
        mean[a] = mbar[a];
        mean_se[a] = stats(&|s| ms[s * e + a]).1 / nf.sqrt();
        for b in 0..=a {
            let diag = if a == b { 1.0 } else { 0.0 };
            let (c, sd) = stats(&|s| {
                (ms[s * e + a] - mbar[a]) * (ms[s * e + b] - mbar[b]) + diag * vs[s * e + a]
            });
            let v = (c - diag * vbar[a]) * unbias + diag * vbar[a];
            cov[(a, b)] = v;
            cov[(b, a)] = v;
            cov_se[(a, b)] = sd / nf.sqrt();
            cov_se[(b, a)] = sd / nf.sqrt();
        }
    }
    symmetrize_in_place(&mut cov);

    let mut cross_cov = DMatrix::zeros(ds, e);
    let mut cross_cov_se = DMatrix::zeros(ds, e);
    for k in 0..ds {
        for a in 0..e {
            let (c, sd) = stats(&|s| (xs[s * ds + k] - xbar[k]) * (ms[s * e + a] - mbar[a]));
            cross_cov[(k, a)] = c * unbias;
            cross_cov_se[(k, a)] = sd / nf.sqrt();
        }
    }

    let jacobian = if sigma_x.iter().all(|v| *v == 0.0) {
        DMatrix::zeros(e, ds)
    } else {
        cross_cov.transpose() * spd_inverse(&sigma_x, "Monte Carlo input covariance")?
    };

    Ok(MonteCarloEstimate {
        prediction: UncertainPrediction {
            mean,
            cov,
            cross_cov,
            jacobian,
        },
        mean_se,
        cov_se,
        cross_cov_se,
    })
}
