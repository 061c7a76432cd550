#![allow(dead_code)]

use gpds_ep::{Gaussian, GpHyper, LinearGaussianModel, TrainedGp};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn random_spd(rng: &mut impl Rng, d: usize, scale: f64, floor: f64) -> DMatrix<f64> {
    let b = normal_matrix(rng, d, d) * scale;
    &b * b.transpose() + DMatrix::identity(d, d) * floor
}

pub fn random_gaussian(rng: &mut impl Rng, d: usize) -> Gaussian {
    Gaussian::new(normal_vector(rng, d), random_spd(rng, d, 0.6, 0.05)).unwrap()
}

/// GP on `n` random inputs in `[-2, 2]^din` with smooth nonlinear targets.
pub fn random_gp(rng: &mut impl Rng, din: usize, dout: usize, n: usize) -> TrainedGp {
    let x = DMatrix::from_fn(n, din, |_, _| rng.random_range(-2.0..2.0));
    let w = normal_matrix(rng, din, dout);
    let y = DMatrix::from_fn(n, dout, |i, a| {
        let s: f64 = (0..din).map(|k| w[(k, a)] * x[(i, k)]).sum();
        s.sin() + 0.1 * rng.sample::<f64, _>(StandardNormal)
    });
    let hypers = (0..dout)
        .map(|_| {
            let ls = (0..din).map(|_| rng.random_range(0.5..2.0)).collect();
            GpHyper::new(ls, rng.random_range(0.5..2.0), rng.random_range(0.01..0.1)).unwrap()
        })
        .collect();
    TrainedGp::train(x, y, hypers).unwrap()
}

/// 1-D GP trained densely on `y = slope * x` over `[-6, 6]` with tiny noise.
pub fn linear_gp(slope: f64) -> TrainedGp {
    linear_gp_with_noise(slope, 1e-4, 121)
}

/// As [`linear_gp`] with noise variance `noise_var` and `n` evenly spaced
/// training inputs.
pub fn linear_gp_with_noise(slope: f64, noise_var: f64, n: usize) -> TrainedGp {
    let x = DMatrix::from_fn(n, 1, |i, _| -6.0 + 12.0 * i as f64 / (n - 1) as f64);
    let y = x.map(|v| slope * v);
    let hyper = GpHyper::new(vec![3.0], 100.0, noise_var).unwrap();
    TrainedGp::train(x, y, vec![hyper]).unwrap()
}

/// Random stable linear-Gaussian model.
pub fn random_linear_model(rng: &mut impl Rng, d: usize, e: usize) -> LinearGaussianModel {
    let a = normal_matrix(rng, d, d);
    let a = &a * (0.95 / a.norm());
    let q = random_spd(rng, d, 0.4, 0.05);
    let h = normal_matrix(rng, e, d);
    let r = random_spd(rng, e, 0.4, 0.05);
    LinearGaussianModel::new(a, q, h, r, random_gaussian(rng, d)).unwrap()
}

/// Largest moment distance between two lists of Gaussians.
pub fn max_distance(a: &[Gaussian], b: &[Gaussian]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| gpds_ep::moment_distance(x, y).unwrap())
        .fold(0.0, f64::max)
}

/// Well-conditioned 1-D GP on `y = slope * x` over `[-20, 20]` whose
/// posterior mean is close to linear near the origin.
pub fn near_linear_gp(slope: f64) -> TrainedGp {
    let x = DMatrix::from_fn(201, 1, |i, _| -20.0 + 40.0 * i as f64 / 200.0);
    let y = x.map(|v| slope * v);
    TrainedGp::train(x, y, vec![GpHyper::new(vec![10.0], 400.0, 1e-2).unwrap()]).unwrap()
}
