//! Multivariate Gaussians in moment and natural form.
//!
//! [`Gaussian`] is the proper, moment-parameterized density
//! `exp(log_scale) * N(x | mean, cov)` used for marginals, cavities and
//! predictions. [`NaturalGaussian`] is the exponential-family form
//! `exp(log_scale + shift'x - 0.5 x' precision x)`, which also represents
//! improper messages (zero precision, the unit message) and indefinite
//! quotients produced by cavity division.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky_jittered, cholesky_strict, frobenius, log_det, symmetrize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    log_scale: f64,
}

impl Gaussian {
    /// Normalized Gaussian; the covariance is symmetrized on construction.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::with_log_scale(mean, cov, 0.0)
    }

    pub fn with_log_scale(mean: DVector<f64>, cov: DMatrix<f64>, log_scale: f64) -> Result<Self> {
        check_dim(mean.len(), cov.nrows())?;
        check_dim(mean.len(), cov.ncols())?;
        if mean.is_empty() {
            return Err(Error::InvalidArgument(
                "Gaussian dimension must be positive".into(),
            ));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            mean,
            cov: symmetrize(&cov),
            log_scale,
        })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, var),
        )
    }

    pub fn isotropic(mean: DVector<f64>, var: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * var)
    }

    pub fn diagonal(mean: &[f64], vars: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_diagonal(&DVector::from_column_slice(vars)),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn normalized(&self) -> Self {
        Self {
            log_scale: 0.0,
            ..self.clone()
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        cholesky_strict(&self.cov).is_some()
    }

    /// Natural parameters `(cov^-1, cov^-1 mean)` with the exponential-family
    /// constant carried in `log_scale`.
    pub fn to_natural(&self) -> Result<NaturalGaussian> {
        let chol = cholesky_jittered(&self.cov, "covariance to precision")?;
        let mut precision = chol.inverse();
        crate::linalg::symmetrize_in_place(&mut precision);
        let shift = &precision * &self.mean;
        let d = self.dim() as f64;
        let log_scale =
            self.log_scale - 0.5 * d * LN_2PI - 0.5 * log_det(&chol) - 0.5 * self.mean.dot(&shift);
        Ok(NaturalGaussian {
            precision,
            shift,
            log_scale,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NaturalGaussian {
    precision: DMatrix<f64>,
    shift: DVector<f64>,
    log_scale: f64,
}

impl NaturalGaussian {
    pub fn new(precision: DMatrix<f64>, shift: DVector<f64>, log_scale: f64) -> Result<Self> {
        check_dim(shift.len(), precision.nrows())?;
        check_dim(shift.len(), precision.ncols())?;
        Ok(Self {
            precision: symmetrize(&precision),
            shift,
            log_scale,
        })
    }

    /// The improper unit message `N(0, inf * I)`.
    pub fn unit(dim: usize) -> Self {
        Self {
            precision: DMatrix::zeros(dim, dim),
            shift: DVector::zeros(dim),
            log_scale: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn with_log_scale(mut self, log_scale: f64) -> Self {
        self.log_scale = log_scale;
        self
    }

    /// True for the zero-precision (unit) message.
    pub fn is_improper(&self) -> bool {
        self.precision.iter().all(|v| *v == 0.0)
    }

    /// True when the precision admits a strict Cholesky factorization, i.e.
    /// when a moment form exists.
    pub fn is_proper(&self) -> bool {
        cholesky_strict(&self.precision).is_some()
    }

    pub fn product(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self {
            precision: &self.precision + &other.precision,
            shift: &self.shift + &other.shift,
            log_scale: self.log_scale + other.log_scale,
        })
    }

    pub fn quotient(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self {
            precision: &self.precision - &other.precision,
            shift: &self.shift - &other.shift,
            log_scale: self.log_scale - other.log_scale,
        })
    }

    /// Convex blend of natural parameters, `weight * self + (1 - weight) * other`.
    pub fn blend(&self, other: &Self, weight: f64) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self {
            precision: &self.precision * weight + &other.precision * (1.0 - weight),
            shift: &self.shift * weight + &other.shift * (1.0 - weight),
            log_scale: weight * self.log_scale + (1.0 - weight) * other.log_scale,
        })
    }

    /// Moment form; fails with `NonPositiveDefinite` unless the precision is
    /// strictly positive definite.
    pub fn to_moments(&self) -> Result<Gaussian> {
        let chol = cholesky_strict(&self.precision)
            .ok_or(Error::NonPositiveDefinite("precision has no moment form"))?;
        let mut cov = chol.inverse();
        crate::linalg::symmetrize_in_place(&mut cov);
        let mean = &cov * &self.shift;
        let d = self.dim() as f64;
        let log_scale =
            self.log_scale + 0.5 * d * LN_2PI - 0.5 * log_det(&chol) + 0.5 * self.shift.dot(&mean);
        Gaussian::with_log_scale(mean, cov, log_scale)
    }
}

/// Normalized product `a * b` with the log of the product's integral (plus
/// both input log-scales) in `log_scale`.
pub fn multiply(a: &Gaussian, b: &Gaussian) -> Result<Gaussian> {
    check_dim(a.dim(), b.dim())?;
    a.to_natural()?
        .product(&b.to_natural()?)?
        .to_moments()
        .map_err(|_| Error::NonPositiveDefinite("sum of precisions"))
}

/// Quotient `a / b` in natural form. The result may be indefinite.
pub fn divide(a: &Gaussian, b: &NaturalGaussian) -> Result<NaturalGaussian> {
    check_dim(a.dim(), b.dim())?;
    a.to_natural()?.quotient(b)
}

/// `log(exp(log_scale) * N(x | mean, cov))`.
pub fn log_pdf(g: &Gaussian, x: &DVector<f64>) -> Result<f64> {
    check_dim(g.dim(), x.len())?;
    let chol = cholesky_strict(g.cov()).ok_or(Error::NonPositiveDefinite("log_pdf covariance"))?;
    let diff = x - g.mean();
    let maha = crate::linalg::quad_form(&chol, &diff);
    Ok(g.log_scale() - 0.5 * (g.dim() as f64 * (2.0 * PI).ln() + log_det(&chol) + maha))
}

/// `||mean_a - mean_b||_2 + ||cov_a - cov_b||_F`.
pub fn moment_distance(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok((a.mean() - b.mean()).norm() + frobenius(&(a.cov() - b.cov())))
}

/// Plain-array form used by the JSON documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianRecord {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl From<&Gaussian> for GaussianRecord {
    fn from(g: &Gaussian) -> Self {
        Self {
            mean: g.mean().iter().copied().collect(),
            cov: g
                .cov()
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }
}

impl TryFrom<&GaussianRecord> for Gaussian {
    type Error = Error;

    fn try_from(r: &GaussianRecord) -> Result<Self> {
        let d = r.mean.len();
        if r.cov.len() != d || r.cov.iter().any(|row| row.len() != d) {
            return Err(Error::Serialization(
                "covariance shape does not match mean".into(),
            ));
        }
        let flat: Vec<f64> = r.cov.iter().flatten().copied().collect();
        Gaussian::new(
            DVector::from_vec(r.mean.clone()),
            DMatrix::from_row_slice(d, d, &flat),
        )
    }
}
