//! State-space models the smoother can run on.
//!
//! The EP engine only needs two Gaussian maps: the time update through the
//! transition model and the prediction of measurements from a state
//! distribution. [`GpdsModel`] provides them through trained GPs,
//! [`LinearGaussianModel`] exactly, and [`ParametricModel`] by first-order
//! linearization of known functions (the EKS family).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{Gaussian, GaussianRecord};
use crate::gp::{GpRecord, TrainedGp, GPDS_MODEL_SCHEMA_VERSION};
use crate::linalg::{solve_general, symmetrize_in_place};
use crate::propagate::{propagate, PredictMethod, UncertainPrediction};

pub trait StateSpaceModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn measurement_dim(&self) -> usize;
    fn control_dim(&self) -> usize {
        0
    }
    fn prior(&self) -> &Gaussian;

    /// Gaussian approximation of `p(x_{t+1})` for `x_t ~ state`.
    fn predict_state(
        &self,
        state: &Gaussian,
        control: Option<&DVector<f64>>,
        method: PredictMethod,
    ) -> Result<UncertainPrediction>;

    /// Gaussian approximation of `p(z_t)` for `x_t ~ state`.
    fn predict_measurement(
        &self,
        state: &Gaussian,
        method: PredictMethod,
    ) -> Result<UncertainPrediction>;
}

/// GP dynamical system: transition GP `h` over `(x, u)`, measurement GP `g`,
/// and the initial-state prior. System and measurement noise live in the
/// GPs' noise variances.
#[derive(Clone, Debug)]
pub struct GpdsModel {
    pub gp_h: TrainedGp,
    pub gp_g: TrainedGp,
    pub prior: Gaussian,
    control_dim: usize,
}

impl GpdsModel {
    pub fn new(gp_h: TrainedGp, gp_g: TrainedGp, prior: Gaussian) -> Result<Self> {
        let d = prior.dim();
        check_dim(d, gp_h.output_dim())?;
        check_dim(d, gp_g.input_dim())?;
        if gp_h.input_dim() < d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: gp_h.input_dim(),
            });
        }
        let control_dim = gp_h.input_dim() - d;
        Ok(Self {
            gp_h,
            gp_g,
            prior,
            control_dim,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = GpdsModelRecord {
            schema_version: GPDS_MODEL_SCHEMA_VERSION,
            control_dim: self.control_dim,
            gp_h: GpRecord::from(&self.gp_h),
            gp_g: GpRecord::from(&self.gp_g),
            prior: GaussianRecord::from(&self.prior),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: GpdsModelRecord = serde_json::from_str(s)?;
        if rec.schema_version != GPDS_MODEL_SCHEMA_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model schema version {}",
                rec.schema_version
            )));
        }
        let model = Self::new(
            TrainedGp::try_from(&rec.gp_h)?,
            TrainedGp::try_from(&rec.gp_g)?,
            Gaussian::try_from(&rec.prior)?,
        )?;
        check_dim(rec.control_dim, model.control_dim)?;
        Ok(model)
    }
}

/// Versioned JSON document for a [`GpdsModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpdsModelRecord {
    pub schema_version: u32,
    pub control_dim: usize,
    pub gp_h: GpRecord,
    pub gp_g: GpRecord,
    pub prior: GaussianRecord,
}

impl StateSpaceModel for GpdsModel {
    fn state_dim(&self) -> usize {
        self.prior.dim()
    }

    fn measurement_dim(&self) -> usize {
        self.gp_g.output_dim()
    }

    fn control_dim(&self) -> usize {
        self.control_dim
    }

    fn prior(&self) -> &Gaussian {
        &self.prior
    }

    fn predict_state(
        &self,
        state: &Gaussian,
        control: Option<&DVector<f64>>,
        method: PredictMethod,
    ) -> Result<UncertainPrediction> {
        let control = if self.control_dim == 0 { None } else { control };
        if self.control_dim > 0 && control.is_none() {
            return Err(Error::InvalidArgument(
                "transition GP expects a control input".into(),
            ));
        }
        propagate(&self.gp_h, state, control, method)
    }

    fn predict_measurement(
        &self,
        state: &Gaussian,
        method: PredictMethod,
    ) -> Result<UncertainPrediction> {
        propagate(&self.gp_g, state, None, method)
    }
}

/// `x' = A x + B u + w`, `z = H x + v` with Gaussian noise.
///
/// Both prediction routes are exact. Moment matching goes through the
/// cross-covariance (`C = Sigma A'`, `J = C' Sigma^-1`), linearization through
/// the Jacobian (`J = A`, `C = Sigma J'`).
#[derive(Clone, Debug)]
pub struct LinearGaussianModel {
    pub transition: DMatrix<f64>,
    pub control: Option<DMatrix<f64>>,
    pub process_noise: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
    pub prior: Gaussian,
}

impl LinearGaussianModel {
    pub fn new(
        transition: DMatrix<f64>,
        process_noise: DMatrix<f64>,
        observation: DMatrix<f64>,
        measurement_noise: DMatrix<f64>,
        prior: Gaussian,
    ) -> Result<Self> {
        let d = prior.dim();
        check_dim(d, transition.nrows())?;
        check_dim(d, transition.ncols())?;
        check_dim(d, process_noise.nrows())?;
        check_dim(d, observation.ncols())?;
        check_dim(observation.nrows(), measurement_noise.nrows())?;
        Ok(Self {
            transition,
            control: None,
            process_noise,
            observation,
            measurement_noise,
            prior,
        })
    }

    pub fn with_control(mut self, control: DMatrix<f64>) -> Result<Self> {
        check_dim(self.prior.dim(), control.nrows())?;
        self.control = Some(control);
        Ok(self)
    }

    fn linear_map(
        map: &DMatrix<f64>,
        offset: Option<DVector<f64>>,
        noise: &DMatrix<f64>,
        state: &Gaussian,
        method: PredictMethod,
    ) -> Result<UncertainPrediction> {
        let sigma = state.cov();
        let mut mean = map * state.mean();
        if let Some(o) = offset {
            mean += o;
        }
        let (cov, cross_cov, jacobian) = match method {
            PredictMethod::Linearization => {
                let cross = sigma * map.transpose();
                (map * &cross + noise, cross, map.clone())
            }
            _ => {
                let cross = sigma * map.transpose();
                // J = C' Sigma^-1, solved rather than read off the model
                let jac = solve_general(sigma, &cross)?.transpose();
                (cross.transpose() * jac.transpose() + noise, cross, jac)
            }
        };
        let mut cov = cov;
        symmetrize_in_place(&mut cov);
        Ok(UncertainPrediction {
            mean,
            cov,
            cross_cov,
            jacobian,
        })
    }
}

impl StateSpaceModel for LinearGaussianModel {
    fn state_dim(&self) -> usize {
        self.prior.dim()
    }

    fn measurement_dim(&self) -> usize {
        self.observation.nrows()
    }

    fn control_dim(&self) -> usize {
        self.control.as_ref().map(|b| b.ncols()).unwrap_or(0)
    }

    fn prior(&self) -> &Gaussian {
        &self.prior
    }

    fn predict_state(
        &self,
        state: &Gaussian,
        control: Option<&DVector<f64>>,
        method: PredictMethod,
    ) -> Result<UncertainPrediction> {
        check_dim(self.state_dim(), state.dim())?;
        let offset = match (&self.control, control) {
            (Some(b), Some(u)) => Some(b * u),
            _ => None,
        };
        Self::linear_map(&self.transition, offset, &self.process_noise, state, method)
    }

    fn predict_measurement(
        &self,
        state: &Gaussian,
        method: PredictMethod,
    ) -> Result<UncertainPrediction> {
        check_dim(self.state_dim(), state.dim())?;
        Self::linear_map(
            &self.observation,
            None,
            &self.measurement_noise,
            state,
            method,
        )
    }
}

type VecFn = dyn Fn(&DVector<f64>, Option<&DVector<f64>>) -> DVector<f64> + Send + Sync;
type JacFn = dyn Fn(&DVector<f64>, Option<&DVector<f64>>) -> DMatrix<f64> + Send + Sync;

/// Known nonlinear functions with analytic Jacobians and additive Gaussian
/// noise. Predictions always linearize at the input mean, whatever
/// [`PredictMethod`] is requested.
#[derive(Clone)]
pub struct ParametricModel {
    transition: Arc<VecFn>,
    transition_jacobian: Arc<JacFn>,
    measurement: Arc<VecFn>,
    measurement_jacobian: Arc<JacFn>,
    pub process_noise: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
    pub prior: Gaussian,
    control_dim: usize,
}

impl std::fmt::Debug for ParametricModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParametricModel")
            .field("process_noise", &self.process_noise)
            .field("measurement_noise", &self.measurement_noise)
            .field("prior", &self.prior)
            .finish_non_exhaustive()
    }
}

impl ParametricModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        transition: impl Fn(&DVector<f64>, Option<&DVector<f64>>) -> DVector<f64>
            + Send
            + Sync
            + 'static,
        transition_jacobian: impl Fn(&DVector<f64>, Option<&DVector<f64>>) -> DMatrix<f64>
            + Send
            + Sync
            + 'static,
        measurement: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        measurement_jacobian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        process_noise: DMatrix<f64>,
        measurement_noise: DMatrix<f64>,
        prior: Gaussian,
        control_dim: usize,
    ) -> Self {
        Self {
            transition: Arc::new(transition),
            transition_jacobian: Arc::new(transition_jacobian),
            measurement: Arc::new(move |x: &DVector<f64>, _: Option<&DVector<f64>>| measurement(x)),
            measurement_jacobian: Arc::new(move |x: &DVector<f64>, _: Option<&DVector<f64>>| {
                measurement_jacobian(x)
            }),
            process_noise,
            measurement_noise,
            prior,
            control_dim,
        }
    }

    pub fn transition(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> DVector<f64> {
        (self.transition)(x, u)
    }

    pub fn transition_jacobian(&self, x: &DVector<f64>, u: Option<&DVector<f64>>) -> DMatrix<f64> {
        (self.transition_jacobian)(x, u)
    }

    pub fn measurement(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.measurement)(x, None)
    }

    pub fn measurement_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.measurement_jacobian)(x, None)
    }

    fn linearize(
        f: &VecFn,
        jac: &JacFn,
        noise: &DMatrix<f64>,
        state: &Gaussian,
        control: Option<&DVector<f64>>,
    ) -> Result<UncertainPrediction> {
        let mean = f(state.mean(), control);
        let j = jac(state.mean(), control);
        check_dim(mean.len(), j.nrows())?;
        check_dim(state.dim(), j.ncols())?;
        let cross_cov = state.cov() * j.transpose();
        let mut cov = &j * &cross_cov + noise;
        symmetrize_in_place(&mut cov);
        Ok(UncertainPrediction {
            mean,
            cov,
            cross_cov,
            jacobian: j,
        })
    }
}

impl StateSpaceModel for ParametricModel {
    fn state_dim(&self) -> usize {
        self.prior.dim()
    }

    fn measurement_dim(&self) -> usize {
        self.measurement_noise.nrows()
    }

    fn control_dim(&self) -> usize {
        self.control_dim
    }

    fn prior(&self) -> &Gaussian {
        &self.prior
    }

    fn predict_state(
        &self,
        state: &Gaussian,
        control: Option<&DVector<f64>>,
        _method: PredictMethod,
    ) -> Result<UncertainPrediction> {
        Self::linearize(
            &*self.transition,
            &*self.transition_jacobian,
            &self.process_noise,
            state,
            control,
        )
    }

    fn predict_measurement(
        &self,
        state: &Gaussian,
        _method: PredictMethod,
    ) -> Result<UncertainPrediction> {
        Self::linearize(
            &*self.measurement,
            &*self.measurement_jacobian,
            &self.measurement_noise,
            state,
            None,
        )
    }
}
