mod common;

use common::{normal_vector, random_gp, rng};
use gpds_ep::gp::{fit_hyperparameters, FitOptions};
use gpds_ep::systems::SineSystem;
use gpds_ep::{GpHyper, TrainedGp};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// Draw from a zero-mean SE GP prior with noise at the given inputs.
fn sample_gp(r: &mut impl Rng, x: &DMatrix<f64>, h: &GpHyper) -> DMatrix<f64> {
    let n = x.nrows();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let d: f64 = (0..x.ncols())
            .map(|c| ((x[(i, c)] - x[(j, c)]) / h.lengthscales[c]).powi(2))
            .sum();
        h.signal_var * (-0.5 * d).exp() + if i == j { h.noise_var } else { 0.0 }
    });
    let l = k.cholesky().unwrap().l();
    let y = l * normal_vector(r, n);
    DMatrix::from_column_slice(n, 1, y.as_slice())
}

#[test]
fn refit_recovers_generating_hyperparameters() {
    let truth = GpHyper::new(vec![1.0], 1.0, 0.01).unwrap();
    let mut r = rng(5);
    let x = DMatrix::from_fn(100, 1, |_, _| r.random_range(-5.0..5.0));
    let y = sample_gp(&mut r, &x, &truth);
    let init = GpHyper::new(vec![2.0], 0.5, 0.1).unwrap();
    let opts = FitOptions {
        iters: 600,
        learning_rate: 0.05,
    };
    let fit = fit_hyperparameters(&x, &y, &init, opts).unwrap().remove(0);
    let (a, b) = (fit.to_log_params(), truth.to_log_params());
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 0.5, "fitted {fit:?}");
    }
}

// A zero-mean GP fits any constant offset, even the sample mean of pure
// noise, with a long lengthscale; the targets are therefore centered.
#[test]
fn constant_targets_collapse_the_signal() {
    let mut r = rng(6);
    let x = DMatrix::from_fn(40, 1, |_, _| r.random_range(-3.0..3.0));
    let y = DMatrix::from_fn(40, 1, |_, _| {
        0.1 * r.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let y = y.add_scalar(-y.mean());
    let init = GpHyper::new(vec![1.0], 1.0, 0.1).unwrap();
    let fit = fit_hyperparameters(
        &x,
        &y,
        &init,
        FitOptions {
            iters: 2000,
            learning_rate: 0.05,
        },
    )
    .unwrap()
    .remove(0);
    assert!(fit.signal_var / fit.noise_var < 0.1, "{fit:?}");
}

#[test]
fn weights_solve_the_training_system() {
    let sys = SineSystem::default();
    let data = sys.training_set(0, 30).unwrap();
    let h = GpHyper::new(vec![1.0], 16.0, 0.01).unwrap();
    let gp = TrainedGp::train(data.inputs.clone(), data.next_states.clone(), vec![h]).unwrap();
    let residual = gp.noisy_kernel_matrix(0) * gp.beta(0) - data.next_states.column(0);
    assert!(residual.amax() < 1e-6, "{}", residual.amax());
}

#[test]
fn near_noise_free_gp_interpolates() {
    let x = DMatrix::from_column_slice(5, 1, &[-2.0, -0.9, 0.1, 1.0, 2.2]);
    let y = DMatrix::from_column_slice(5, 1, &[0.3, -1.1, 0.4, 0.9, -0.2]);
    let gp = TrainedGp::train(
        x.clone(),
        y.clone(),
        vec![GpHyper::new(vec![0.8], 1.0, 1e-10).unwrap()],
    )
    .unwrap();
    for i in 0..5 {
        let (m, _) = gp.predict_point(&DVector::from_element(1, x[i])).unwrap();
        assert!((m[0] - y[i]).abs() < 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictive_variance_is_bounded(seed in any::<u64>(), din in 1usize..4) {
        let mut r = rng(seed);
        let gp = random_gp(&mut r, din, 2, 15);
        for _ in 0..20 {
            let at = normal_vector(&mut r, din) * 2.0;
            let (_, var) = gp.predict_point(&at).unwrap();
            for (a, h) in gp.hypers().iter().enumerate() {
                prop_assert!(var[a] >= h.noise_var - 1e-12);
                prop_assert!(var[a] <= h.signal_var + h.noise_var + 1e-9);
            }
        }
    }
}
