mod common;

use common::{normal_matrix, random_gaussian, rng};
use gpds_ep::bench::{metric_mae_x, metric_nll_x, metric_nll_z, MeanSe};
use gpds_ep::Gaussian;
use nalgebra::DMatrix;
use std::f64::consts::PI;

// Textbook densities via explicit inverse and determinant.
fn naive_nll(gs: &[Gaussian], rows: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for (t, g) in gs.iter().enumerate() {
        let d = g.dim() as f64;
        let diff = rows.row(t).transpose() - g.mean();
        let inv = g.cov().clone().try_inverse().unwrap();
        let maha = (diff.transpose() * inv * &diff)[0];
        total += 0.5 * (d * (2.0 * PI).ln() + g.cov().determinant().ln() + maha);
    }
    total / gs.len() as f64
}

fn naive_mae(gs: &[Gaussian], truth: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for (t, g) in gs.iter().enumerate() {
        for k in 0..g.dim() {
            total += (g.mean()[k] - truth[(t, k)]).abs();
        }
    }
    total / (gs.len() * truth.ncols()) as f64
}

#[test]
fn metrics_match_a_naive_implementation() {
    let mut r = rng(17);
    for case in 0..50 {
        let d = 1 + case % 4;
        let len = 1 + case % 9;
        let gs: Vec<Gaussian> = (0..len).map(|_| random_gaussian(&mut r, d)).collect();
        let truth = normal_matrix(&mut r, len, d);
        let tol = |v: f64| 1e-10 * (1.0 + v.abs());
        let (a, b) = (metric_nll_x(&gs, &truth).unwrap(), naive_nll(&gs, &truth));
        assert!((a - b).abs() < tol(b), "nll_x {a} vs {b}");
        let (a, b) = (metric_nll_z(&gs, &truth).unwrap(), naive_nll(&gs, &truth));
        assert!((a - b).abs() < tol(b), "nll_z {a} vs {b}");
        let (a, b) = (metric_mae_x(&gs, &truth).unwrap(), naive_mae(&gs, &truth));
        assert!((a - b).abs() < tol(b), "mae {a} vs {b}");
    }
}

#[test]
fn log_scale_does_not_leak_into_the_metric() {
    let g = Gaussian::scalar(0.0, 1.0).unwrap();
    let scaled = Gaussian::with_log_scale(g.mean().clone(), g.cov().clone(), 7.0).unwrap();
    let x = DMatrix::from_element(1, 1, 0.3);
    assert_eq!(
        metric_nll_x(&[g], &x).unwrap(),
        metric_nll_x(&[scaled], &x).unwrap()
    );
}

#[test]
fn mean_and_standard_error() {
    let v = [1.0, 2.0, 3.0, 4.0];
    let s = MeanSe::from_values(&v);
    let mean = 2.5;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 3.0;
    assert!((s.mean - mean).abs() < 1e-15);
    assert!((s.se - (var / 4.0).sqrt()).abs() < 1e-15);
    assert_eq!(s.n, 4);
}
