use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{seeded_rng, stream, Trajectory};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::linalg::cholesky_jittered;
use crate::model::LinearGaussianModel;

/// Random stable linear-Gaussian systems, the exactness benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub state_dim: usize,
    pub measurement_dim: usize,
    /// Upper bound on the spectral radius of the transition matrix.
    pub max_gain: f64,
}

impl Default for LinearSystem {
    fn default() -> Self {
        Self {
            state_dim: 2,
            measurement_dim: 2,
            max_gain: 0.95,
        }
    }
}

fn normal_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn random_spd(rng: &mut impl Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let b = normal_matrix(rng, d, d) * 0.5;
    &b * b.transpose() + DMatrix::identity(d, d) * floor
}

impl LinearSystem {
    /// Draws a model; the transition matrix is rescaled by its Frobenius norm
    /// so that its spectral radius stays below `max_gain`.
    pub fn model(&self, seed: u64) -> Result<LinearGaussianModel> {
        let (d, e) = (self.state_dim, self.measurement_dim);
        if d == 0 || e == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        let mut rng = seeded_rng(seed, stream::TRAINING);
        let a = normal_matrix(&mut rng, d, d);
        let a = &a * (self.max_gain / a.norm().max(1e-12));
        let q = random_spd(&mut rng, d, 0.05);
        let h = normal_matrix(&mut rng, e, d);
        let r = random_spd(&mut rng, e, 0.05);
        let mean = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let prior = Gaussian::new(mean, random_spd(&mut rng, d, 0.2))?;
        LinearGaussianModel::new(a, q, h, r, prior)
    }

    pub fn simulate(
        &self,
        model: &LinearGaussianModel,
        seed: u64,
        len: usize,
    ) -> Result<Trajectory> {
        simulate_linear(model, seed, len)
    }
}

/// Samples `x_1 ~ prior`, `x_{t+1} = A x_t + w`, `z_t = H x_t + v`.
pub fn simulate_linear(model: &LinearGaussianModel, seed: u64, len: usize) -> Result<Trajectory> {
    if len == 0 {
        return Err(Error::InvalidArgument(
            "trajectory length must be positive".into(),
        ));
    }
    let mut rng = seeded_rng(seed, stream::TRAJECTORY);
    let d = model.prior.dim();
    let e = model.observation.nrows();
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, cov: &DMatrix<f64>| -> Result<DVector<f64>> {
        let l = cholesky_jittered(cov, "simulation covariance")?.l();
        let n = DVector::from_fn(cov.nrows(), |_, _| StandardNormal.sample(rng));
        Ok(l * n)
    };
    let mut x = model.prior.mean() + draw(&mut rng, model.prior.cov())?;
    let mut xs = DMatrix::zeros(len, d);
    let mut zs = DMatrix::zeros(len, e);
    for t in 0..len {
        let z = &model.observation * &x + draw(&mut rng, &model.measurement_noise)?;
        xs.row_mut(t).copy_from(&x.transpose());
        zs.row_mut(t).copy_from(&z.transpose());
        x = &model.transition * &x + draw(&mut rng, &model.process_noise)?;
    }
    Trajectory::new(xs, zs, None, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_systems_are_stable() {
        for seed in 0..20 {
            let m = LinearSystem {
                state_dim: 3,
                measurement_dim: 2,
                max_gain: 0.95,
            }
            .model(seed)
            .unwrap();
            let eig = m.transition.complex_eigenvalues();
            assert!(eig.iter().all(|l| l.norm() < 0.95 + 1e-12));
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let sys = LinearSystem::default();
        let m = sys.model(4).unwrap();
        assert_eq!(
            sys.simulate(&m, 1, 10).unwrap(),
            sys.simulate(&m, 1, 10).unwrap()
        );
    }
}
