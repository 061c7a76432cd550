use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{seeded_rng, stream, Trajectory};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::model::ParametricModel;

/// `x_{t+1} = a sin(x_t) + w`, `z_t = a sin(x_t) + v`, `x_1 ~ N(m0, v0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineSystem {
    pub amplitude: f64,
    pub process_noise_sd: f64,
    pub measurement_noise_sd: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
    /// Training inputs are drawn uniformly from `[-range, range]`.
    pub training_range: f64,
}

impl Default for SineSystem {
    fn default() -> Self {
        Self {
            amplitude: 4.0,
            process_noise_sd: 0.1,
            measurement_noise_sd: 0.1,
            prior_mean: 0.0,
            prior_var: 1.0,
            training_range: 5.0,
        }
    }
}

/// GP training pairs for the transition and measurement models.
#[derive(Clone, Debug, PartialEq)]
pub struct SineTrainingData {
    pub inputs: DMatrix<f64>,
    pub next_states: DMatrix<f64>,
    pub measurements: DMatrix<f64>,
}

impl SineSystem {
    pub fn noise_free(self) -> Self {
        Self {
            process_noise_sd: 0.0,
            measurement_noise_sd: 0.0,
            ..self
        }
    }

    pub fn prior(&self) -> Gaussian {
        Gaussian::scalar(self.prior_mean, self.prior_var).expect("finite prior")
    }

    pub fn mean_map(&self, x: f64) -> f64 {
        self.amplitude * x.sin()
    }

    fn noise(sd: f64) -> Result<Normal<f64>> {
        Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn simulate(&self, seed: u64, len: usize) -> Result<Trajectory> {
        let mut rng = seeded_rng(seed, stream::TRAJECTORY);
        let x1 = self.prior_mean
            + self.prior_var.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
        self.simulate_with(&mut rng, x1, len, seed)
    }

    /// Simulation from a given initial state.
    pub fn simulate_from(&self, x1: f64, seed: u64, len: usize) -> Result<Trajectory> {
        let mut rng = seeded_rng(seed, stream::TRAJECTORY);
        self.simulate_with(&mut rng, x1, len, seed)
    }

    fn simulate_with(
        &self,
        rng: &mut impl Rng,
        x1: f64,
        len: usize,
        seed: u64,
    ) -> Result<Trajectory> {
        if len == 0 {
            return Err(Error::InvalidArgument(
                "trajectory length must be positive".into(),
            ));
        }
        let w = Self::noise(self.process_noise_sd)?;
        let v = Self::noise(self.measurement_noise_sd)?;
        let mut xs = Vec::with_capacity(len);
        let mut zs = Vec::with_capacity(len);
        let mut x = x1;
        for _ in 0..len {
            xs.push(x);
            zs.push(self.mean_map(x) + v.sample(rng));
            x = self.mean_map(x) + w.sample(rng);
        }
        Trajectory::new(
            DMatrix::from_vec(len, 1, xs),
            DMatrix::from_vec(len, 1, zs),
            None,
            seed,
        )
    }

    /// `n` states uniform on `[-range, range]` with noisy transition and
    /// measurement targets.
    pub fn training_set(&self, seed: u64, n: usize) -> Result<SineTrainingData> {
        let mut rng = seeded_rng(seed, stream::TRAINING);
        let w = Self::noise(self.process_noise_sd)?;
        let v = Self::noise(self.measurement_noise_sd)?;
        let r = self.training_range;
        let mut xs = Vec::with_capacity(n);
        let mut next = Vec::with_capacity(n);
        let mut meas = Vec::with_capacity(n);
        for _ in 0..n {
            let x = rng.random_range(-r..=r);
            xs.push(x);
            next.push(self.mean_map(x) + w.sample(&mut rng));
            meas.push(self.mean_map(x) + v.sample(&mut rng));
        }
        Ok(SineTrainingData {
            inputs: DMatrix::from_vec(n, 1, xs),
            next_states: DMatrix::from_vec(n, 1, next),
            measurements: DMatrix::from_vec(n, 1, meas),
        })
    }

    /// The known system as a parametric model for the extended Kalman
    /// smoother.
    pub fn parametric_model(&self) -> ParametricModel {
        let a = self.amplitude;
        ParametricModel::new(
            move |x, _| DVector::from_element(1, a * x[0].sin()),
            move |x, _| DMatrix::from_element(1, 1, a * x[0].cos()),
            move |x| DVector::from_element(1, a * x[0].sin()),
            move |x| DMatrix::from_element(1, 1, a * x[0].cos()),
            DMatrix::from_element(1, 1, self.process_noise_sd.powi(2)),
            DMatrix::from_element(1, 1, self.measurement_noise_sd.powi(2)),
            self.prior(),
            0,
        )
    }
}
