use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{seeded_rng, stream, Trajectory};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::model::ParametricModel;

/// Which rest position `phi = 0` denotes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroAngle {
    /// `phi'' = (u - m g (l/2) sin(phi + pi)) / (m l^2 / 3)`: the rest
    /// state is the unstable upright position and an unforced rod released
    /// near it keeps rotating.
    Upright,
    /// `phi'' = (u - m g (l/2) sin(phi)) / (m l^2 / 3)`: the rest state is
    /// stable and bounded torques produce partial swings.
    #[default]
    Hanging,
}

/// Torque-driven rod pendulum with state `(phi, phi_dot)`, observed by two
/// bearings sensors.
///
/// The continuous dynamics are integrated with RK4 under a zero-order-hold
/// torque; process noise is added once per control interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumSystem {
    pub zero_angle: ZeroAngle,
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub process_noise_var: [f64; 2],
    pub sensors: [[f64; 2]; 2],
    pub measurement_noise_var: [f64; 2],
    pub prior_mean: [f64; 2],
    pub prior_var: [f64; 2],
    pub substeps: usize,
}

impl Default for PendulumSystem {
    fn default() -> Self {
        Self {
            zero_angle: ZeroAngle::Hanging,
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            dt: 0.2,
            max_torque: 2.0,
            process_noise_var: [0.3 * 0.3, 0.1 * 0.1],
            sensors: [[-2.0, 0.0], [-0.5, -0.5]],
            measurement_noise_var: [0.1 * 0.1, 0.05 * 0.05],
            prior_mean: [0.0, 0.0],
            prior_var: [(PI / 16.0).powi(2), 0.5 * 0.5],
            substeps: 50,
        }
    }
}

/// Training and test data: transition pairs `((x_t, u_t), x_{t+1})` and
/// measurement pairs `(x_t, z_t)` pooled over several trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct PendulumTrainingData {
    pub trajectories: Vec<Trajectory>,
    pub transition_inputs: DMatrix<f64>,
    pub transition_targets: DMatrix<f64>,
    pub measurement_inputs: DMatrix<f64>,
    pub measurement_targets: DMatrix<f64>,
}

impl PendulumSystem {
    /// The default system with `phi = 0` at the unstable upright position.
    pub fn upright() -> Self {
        Self {
            zero_angle: ZeroAngle::Upright,
            ..Self::default()
        }
    }

    pub fn noise_free(self) -> Self {
        Self {
            process_noise_var: [0.0; 2],
            measurement_noise_var: [0.0; 2],
            ..self
        }
    }

    pub fn prior(&self) -> Gaussian {
        Gaussian::diagonal(&self.prior_mean, &self.prior_var).expect("finite prior")
    }

    fn accel(&self, phi: f64, u: f64) -> f64 {
        let (m, l) = (self.mass, self.length);
        (u - self.sign() * m * self.gravity * 0.5 * l * phi.sin()) / (m * l * l / 3.0)
    }

    fn sign(&self) -> f64 {
        match self.zero_angle {
            ZeroAngle::Upright => -1.0,
            ZeroAngle::Hanging => 1.0,
        }
    }

    /// Noise-free state after one control interval under torque `u`.
    pub fn step(&self, state: [f64; 2], u: f64, substeps: usize) -> [f64; 2] {
        let h = self.dt / substeps.max(1) as f64;
        let f = |s: [f64; 2]| [s[1], self.accel(s[0], u)];
        let mut s = state;
        for _ in 0..substeps.max(1) {
            let k1 = f(s);
            let k2 = f([s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
            let k3 = f([s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
            let k4 = f([s[0] + h * k3[0], s[1] + h * k3[1]]);
            for i in 0..2 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        s
    }

    /// Mechanical energy with the potential referenced to the pivot;
    /// constant without torque.
    pub fn energy(&self, state: [f64; 2]) -> f64 {
        let (m, l) = (self.mass, self.length);
        0.5 * (m * l * l / 3.0) * state[1] * state[1]
            - self.sign() * m * self.gravity * 0.5 * l * state[0].cos()
    }

    /// Noise-free bearings `atan2(sin(phi) - y_i, cos(phi) - x_i)` from the
    /// tip position `(cos(phi), sin(phi))`.
    pub fn bearings(&self, phi: f64) -> Result<[f64; 2]> {
        let (c, s) = (phi.cos(), phi.sin());
        let mut z = [0.0; 2];
        for (i, [x, y]) in self.sensors.iter().enumerate() {
            let (dx, dy) = (c - x, s - y);
            if dx.hypot(dy) < 1e-9 {
                return Err(Error::SensorCoincidence { sensor: i + 1 });
            }
            z[i] = dy.atan2(dx);
        }
        Ok(z)
    }

    /// Noisy bearings; the noise is drawn from a generator seeded by
    /// `noise_seed`.
    pub fn bearings_measure(&self, state: [f64; 2], noise_seed: u64) -> Result<[f64; 2]> {
        let mut rng = seeded_rng(noise_seed, stream::TRAJECTORY);
        self.noisy_bearings(state[0], &mut rng)
    }

    fn noisy_bearings(&self, phi: f64, rng: &mut impl Rng) -> Result<[f64; 2]> {
        let mut z = self.bearings(phi)?;
        for (zi, var) in z.iter_mut().zip(self.measurement_noise_var) {
            let e: f64 = StandardNormal.sample(rng);
            *zi += var.sqrt() * e;
        }
        Ok(z)
    }

    pub fn simulate(&self, seed: u64, len: usize, substeps: usize) -> Result<Trajectory> {
        let mut rng = seeded_rng(seed, stream::TRAJECTORY);
        self.simulate_with(&mut rng, None, len, substeps, seed)
    }

    /// Simulation from a given initial state with a fixed torque sequence
    /// (one value per step).
    pub fn simulate_from(
        &self,
        x1: [f64; 2],
        torques: &[f64],
        seed: u64,
        substeps: usize,
    ) -> Result<Trajectory> {
        let mut rng = seeded_rng(seed, stream::TRAJECTORY);
        self.simulate_with(&mut rng, Some((x1, torques)), torques.len(), substeps, seed)
    }

    fn simulate_with(
        &self,
        rng: &mut impl Rng,
        fixed: Option<([f64; 2], &[f64])>,
        len: usize,
        substeps: usize,
        seed: u64,
    ) -> Result<Trajectory> {
        if len == 0 || substeps == 0 {
            return Err(Error::InvalidArgument(
                "length and substeps must be positive".into(),
            ));
        }
        let mut x = match fixed {
            Some((x1, _)) => x1,
            None => {
                let mut x = [0.0; 2];
                for i in 0..2 {
                    let e: f64 = StandardNormal.sample(rng);
                    x[i] = self.prior_mean[i] + self.prior_var[i].sqrt() * e;
                }
                x
            }
        };
        let (mut xs, mut zs, mut us) = (Vec::new(), Vec::new(), Vec::new());
        for t in 0..len {
            let u = match fixed {
                Some((_, torques)) => torques[t],
                None => rng.random_range(-self.max_torque..=self.max_torque),
            };
            let z = self.noisy_bearings(x[0], rng)?;
            xs.extend_from_slice(&x);
            zs.extend_from_slice(&z);
            us.push(u);
            let next = self.step(x, u, substeps);
            for i in 0..2 {
                let e: f64 = StandardNormal.sample(rng);
                x[i] = next[i] + self.process_noise_var[i].sqrt() * e;
            }
        }
        Trajectory::new(
            DMatrix::from_row_slice(len, 2, &xs),
            DMatrix::from_row_slice(len, 2, &zs),
            Some(DMatrix::from_vec(len, 1, us)),
            seed,
        )
    }

    /// `count` trajectories of length `len`; the training and test sets use
    /// independent random streams of the same seed.
    pub fn dataset(
        &self,
        seed: u64,
        count: usize,
        len: usize,
        test: bool,
    ) -> Result<PendulumTrainingData> {
        let mut rng = seeded_rng(seed, if test { stream::TEST } else { stream::TRAINING });
        let trajectories = (0..count)
            .map(|_| self.simulate_with(&mut rng, None, len, self.substeps, seed))
            .collect::<Result<Vec<_>>>()?;
        let pairs = count * len.saturating_sub(1);
        let mut tin = DMatrix::zeros(pairs, 3);
        let mut tout = DMatrix::zeros(pairs, 2);
        let mut min = DMatrix::zeros(count * len, 2);
        let mut mout = DMatrix::zeros(count * len, 2);
        let (mut p, mut q) = (0, 0);
        for traj in &trajectories {
            let u = traj
                .controls
                .as_ref()
                .expect("pendulum trajectories carry controls");
            for t in 0..len {
                min.row_mut(q).copy_from(&traj.states.row(t));
                mout.row_mut(q).copy_from(&traj.measurements.row(t));
                q += 1;
                if t + 1 < len {
                    tin[(p, 0)] = traj.states[(t, 0)];
                    tin[(p, 1)] = traj.states[(t, 1)];
                    tin[(p, 2)] = u[(t, 0)];
                    tout.row_mut(p).copy_from(&traj.states.row(t + 1));
                    p += 1;
                }
            }
        }
        Ok(PendulumTrainingData {
            trajectories,
            transition_inputs: tin,
            transition_targets: tout,
            measurement_inputs: min,
            measurement_targets: mout,
        })
    }

    /// The 4 training trajectories of length 20.
    pub fn training_set(&self, seed: u64) -> Result<PendulumTrainingData> {
        self.dataset(seed, 4, 20, false)
    }

    /// The 12 test trajectories of length 20.
    pub fn test_set(&self, seed: u64) -> Result<PendulumTrainingData> {
        self.dataset(seed, 12, 20, true)
    }

    /// The known system as a parametric model: RK4 transition with a
    /// central-difference Jacobian and analytic bearing derivatives.
    pub fn parametric_model(&self) -> ParametricModel {
        let (a, b, c, d) = (self.clone(), self.clone(), self.clone(), self.clone());
        let substeps = self.substeps;
        let torque = |u: Option<&DVector<f64>>| u.map(|u| u[0]).unwrap_or(0.0);
        ParametricModel::new(
            move |x, u| {
                let s = a.step([x[0], x[1]], torque(u), substeps);
                DVector::from_row_slice(&s)
            },
            move |x, u| {
                let mut j = DMatrix::zeros(2, 2);
                for k in 0..2 {
                    let h = 1e-6;
                    let (mut lo, mut hi) = ([x[0], x[1]], [x[0], x[1]]);
                    lo[k] -= h;
                    hi[k] += h;
                    let (fl, fh) = (
                        b.step(lo, torque(u), substeps),
                        b.step(hi, torque(u), substeps),
                    );
                    for r in 0..2 {
                        j[(r, k)] = (fh[r] - fl[r]) / (2.0 * h);
                    }
                }
                j
            },
            move |x| {
                let phi = x[0];
                let z = c
                    .sensors
                    .map(|[sx, sy]| (phi.sin() - sy).atan2(phi.cos() - sx));
                DVector::from_row_slice(&z)
            },
            move |x| {
                let (co, si) = (x[0].cos(), x[0].sin());
                let mut j = DMatrix::zeros(2, 2);
                for (i, [sx, sy]) in d.sensors.iter().enumerate() {
                    let (dx, dy) = (co - sx, si - sy);
                    j[(i, 0)] = (dx * co + dy * si) / (dx * dx + dy * dy);
                }
                j
            },
            DMatrix::from_diagonal(&DVector::from_row_slice(&self.process_noise_var)),
            DMatrix::from_diagonal(&DVector::from_row_slice(&self.measurement_noise_var)),
            self.prior(),
            1,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rest_is_an_equilibrium() {
        for p in [PendulumSystem::upright(), PendulumSystem::default()] {
            let traj = p
                .noise_free()
                .simulate_from([0.0, 0.0], &[0.0; 6], 1, 10)
                .unwrap();
            assert!(traj.states.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn upright_is_unstable() {
        let p = PendulumSystem::upright().noise_free();
        let traj = p.simulate_from([0.01, 0.0], &[0.0; 4], 1, 10).unwrap();
        let phis: Vec<f64> = traj.states.column(0).iter().map(|v| v.abs()).collect();
        assert!(phis.windows(2).all(|w| w[1] > w[0]), "{phis:?}");
    }

    #[test]
    fn hanging_swings_stay_bounded() {
        let p = PendulumSystem::default().noise_free();
        let traj = p
            .simulate_from([0.3, 0.0], &[0.0; 40], 1, p.substeps)
            .unwrap();
        assert!(traj.states.column(0).iter().all(|v| v.abs() <= 0.3 + 1e-9));
        // small-angle period 2 pi sqrt(2 l / (3 g)) is about 1.64 s
        assert!(traj.states.column(0).iter().any(|v| *v < -0.29));
    }

    #[test]
    fn bearings_examples() {
        let p = PendulumSystem::default();
        let z = p.bearings(0.0).unwrap();
        assert_eq!(z[0], 0.0);
        assert_relative_eq!(z[1], (0.5f64 / 1.5).atan(), epsilon = 1e-15);
        assert_relative_eq!(z[1], 0.32175, epsilon = 1e-5);
        assert_eq!(
            p.bearings_measure([0.3, 0.0], 4).unwrap(),
            p.bearings_measure([0.3, 0.0], 4).unwrap()
        );
        let quiet = p.clone().noise_free();
        assert_eq!(
            quiet.bearings_measure([0.3, 0.0], 4).unwrap(),
            quiet.bearings(0.3).unwrap()
        );
    }

    #[test]
    fn sensor_on_the_circle_is_rejected() {
        let mut p = PendulumSystem::default();
        p.sensors[1] = [0.0, 1.0];
        assert_eq!(
            p.bearings(std::f64::consts::FRAC_PI_2),
            Err(Error::SensorCoincidence { sensor: 2 })
        );
    }

    #[test]
    fn rk4_converges_under_step_halving() {
        for p in [PendulumSystem::upright(), PendulumSystem::default()] {
            for state in [[0.3, -0.5], [2.0, 1.5], [-1.0, 3.0]] {
                let a = p.step(state, 1.3, p.substeps);
                let b = p.step(state, 1.3, 2 * p.substeps);
                let d = (a[0] - b[0]).abs().max((a[1] - b[1]).abs());
                assert!(d < 1e-8, "{d:e}");
                let e = (p.energy(a) - p.energy(b)).abs();
                assert!(e < 1e-6, "{e}");
            }
        }
    }

    #[test]
    fn unforced_energy_is_conserved() {
        for p in [PendulumSystem::upright(), PendulumSystem::default()] {
            let s0 = [0.5, 0.2];
            let s1 = p.step(s0, 0.0, 50);
            assert_relative_eq!(p.energy(s0), p.energy(s1), epsilon = 1e-8);
        }
    }

    #[test]
    fn dataset_shapes() {
        let p = PendulumSystem::default();
        let train = p.training_set(1).unwrap();
        assert_eq!(train.trajectories.len(), 4);
        assert_eq!(train.transition_inputs.nrows(), 4 * 19);
        assert_eq!(train.transition_inputs.ncols(), 3);
        assert_eq!(train.measurement_inputs.nrows(), 4 * 20);
        let test = p.test_set(1).unwrap();
        assert_eq!(test.trajectories.len(), 12);
        assert_ne!(test.trajectories[0], train.trajectories[0]);
        assert_eq!(p.training_set(1).unwrap(), train);
    }

    #[test]
    fn measurements_stay_in_principal_range() {
        let p = PendulumSystem::default();
        let data = p.test_set(9).unwrap();
        for traj in &data.trajectories {
            assert!(traj.measurements.iter().all(|z| z.abs() <= PI + 1.0));
        }
        // noise-free bearings lie in (-pi, pi]
        for k in 0..100 {
            let z = p.bearings(k as f64 * 0.37 - 18.0).unwrap();
            assert!(z.iter().all(|v| *v > -PI && *v <= PI));
        }
    }

    #[test]
    fn parametric_jacobians_match_differences() {
        let model = p_model();
        let x = DVector::from_vec(vec![0.4, -0.3]);
        let jac = model.measurement_jacobian(&x);
        let h = 1e-6;
        let mut lo = x.clone();
        let mut hi = x.clone();
        lo[0] -= h;
        hi[0] += h;
        let fd = (model.measurement(&hi) - model.measurement(&lo)) / (2.0 * h);
        assert_relative_eq!(jac[(0, 0)], fd[0], epsilon = 1e-7);
        assert_relative_eq!(jac[(1, 0)], fd[1], epsilon = 1e-7);
        assert_eq!(jac[(0, 1)], 0.0);
    }

    fn p_model() -> ParametricModel {
        PendulumSystem::default().parametric_model()
    }
}
