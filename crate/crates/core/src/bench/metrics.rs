use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::gaussian::{log_pdf, Gaussian};

/// Mean over `t` of `-log N(x_t | marginal_t)`.
pub fn metric_nll_x(marginals: &[Gaussian], truth: &DMatrix<f64>) -> Result<f64> {
    mean_nll(marginals, truth)
}

/// Mean over `t` and dimensions of `|mean_t - x_t|`.
pub fn metric_mae_x(marginals: &[Gaussian], truth: &DMatrix<f64>) -> Result<f64> {
    check_dim(truth.nrows(), marginals.len())?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (t, g) in marginals.iter().enumerate() {
        check_dim(truth.ncols(), g.dim())?;
        for k in 0..g.dim() {
            total += (g.mean()[k] - truth[(t, k)]).abs();
            count += 1;
        }
    }
    Ok(if count == 0 {
        0.0
    } else {
        total / count as f64
    })
}

/// Mean over `t` of `-log N(z_t | predictive_t)`.
pub fn metric_nll_z(predictives: &[Gaussian], z: &DMatrix<f64>) -> Result<f64> {
    mean_nll(predictives, z)
}

fn mean_nll(gs: &[Gaussian], rows: &DMatrix<f64>) -> Result<f64> {
    check_dim(rows.nrows(), gs.len())?;
    let mut total = 0.0;
    for (t, g) in gs.iter().enumerate() {
        total -= log_pdf(&g.normalized(), &rows.row(t).transpose())?;
    }
    Ok(total / gs.len().max(1) as f64)
}

/// Sample mean with the standard error `sd / sqrt(n)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let se = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt() / nf.sqrt()
        } else {
            0.0
        };
        Self { mean, se, n }
    }
}

impl std::fmt::Display for MeanSe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:+.3} ± {:.3}", self.mean, self.se)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_marginals(truth: &DMatrix<f64>, var: f64) -> Vec<Gaussian> {
        truth
            .row_iter()
            .map(|r| Gaussian::isotropic(r.transpose(), var).unwrap())
            .collect()
    }

    #[test]
    fn nll_x_at_truth_with_unit_variance() {
        let truth = DMatrix::from_column_slice(3, 1, &[0.2, -1.0, 4.0]);
        let v = metric_nll_x(&unit_marginals(&truth, 1.0), &truth).unwrap();
        assert_relative_eq!(v, 0.918_938_533_204_672_7, epsilon = 1e-12);
    }

    #[test]
    fn nll_decreases_as_variance_shrinks_at_the_truth() {
        let truth = DMatrix::from_column_slice(2, 1, &[0.5, 0.1]);
        let vals: Vec<f64> = [1.0, 0.1, 0.01]
            .iter()
            .map(|v| metric_nll_x(&unit_marginals(&truth, *v), &truth).unwrap())
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
    }

    #[test]
    fn mae_examples() {
        let truth = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        assert_eq!(
            metric_mae_x(&unit_marginals(&truth, 1.0), &truth).unwrap(),
            0.0
        );
        let shifted = truth.add_scalar(0.5);
        assert_relative_eq!(
            metric_mae_x(&unit_marginals(&shifted, 1.0), &truth).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn nll_z_two_dimensional() {
        let z = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, 0.3]);
        let v = metric_nll_z(&unit_marginals(&z, 1.0), &z).unwrap();
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
        let wide = metric_nll_z(&unit_marginals(&z, 100.0), &z).unwrap();
        assert!(wide > v);
    }

    #[test]
    fn standard_error() {
        let s = MeanSe::from_values(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(s.mean, 2.5);
        // sample sd = sqrt(5/3)
        assert_relative_eq!(s.se, (5.0f64 / 3.0).sqrt() / 2.0, epsilon = 1e-15);
    }
}
