//! One PASS/FAIL line per acceptance criterion. Exits non-zero on any FAIL.

mod common;

use std::time::{Duration, Instant};

use common::{
    max_distance, near_linear_gp, normal_vector, random_gaussian, random_gp, random_linear_model,
    rng,
};
use gpds_ep::bench::{
    metric_mae_x, metric_nll_x, metric_nll_z, run_experiment, ExperimentConfig, MeanSe,
    MetricsReport, SmootherKind, SystemSpec,
};
use gpds_ep::ep::{
    backward_grads, backward_grads_from, ep_smooth, kalman_form_measurement_update,
    marginal_from_grads, measurement_grads, measurement_grads_from, EpOptions, LogPartitionGrads,
};
use gpds_ep::kalman::rts_smooth;
use gpds_ep::propagate::{monte_carlo_with_errors, propagate};
use gpds_ep::systems::{simulate_linear, PendulumSystem, SineSystem};
use gpds_ep::{
    divide, log_pdf, moment_distance, multiply, Gaussian, PredictMethod, StateSpaceModel,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

// Pinned tolerances.
const RTS_TOL: f64 = 1e-6;
const FIXED_POINT_TOL: f64 = 1e-8;
const MC_SAMPLES: usize = 1_000_000;
const MC_CASES: usize = 20;
const MC_SE: f64 = 4.0;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const GP_FD_STEP: f64 = 1e-3;
const GP_FD_REL_TOL: f64 = 1e-3;
const KALMAN_FORM_TOL: f64 = 1e-8;
const SINE_EP_NLL: (f64, f64) = (-2.5, -1.3);
const SINE_EP_MAE: f64 = 0.10;
const PENDULUM_SEEDS: u64 = 12;
const PENDULUM_NLL_SLACK: f64 = 0.05;
const PENDULUM_MAE: f64 = 0.6;
const LINEARIZATION_FAILURES: (f64, f64) = (0.0, 0.5);
const ROUNDTRIP_TOL: f64 = 1e-8;
const NATURAL_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-12;
const LOG_SCALE_TOL: f64 = 1e-8;
const METRIC_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(cond: bool, detail: String) -> Outcome {
    Outcome { pass: cond, detail }
}

fn run(id: &str, title: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = out.pass && in_time;
    println!(
        "{} criterion {id} {title}: {} [{:.1} s, budget {} s]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn linear_exactness() -> Outcome {
    let mut r = rng(1001);
    let mut worst = 0.0f64;
    let mut worst_step = 0.0f64;
    for case in 0..50u64 {
        let d = 1 + (case % 3) as usize;
        let len = [5, 20, 50][(case / 3 % 3) as usize];
        let model = random_linear_model(&mut r, d, 1 + (case % 2) as usize);
        let traj = simulate_linear(&model, case, len).unwrap();
        let oracle = rts_smooth(&model, &traj.measurements, None).unwrap();
        for method in [PredictMethod::MomentMatching, PredictMethod::Linearization] {
            let opts = EpOptions {
                max_iters: 2,
                ..EpOptions::with_method(method)
            };
            let res = match ep_smooth(&model, &traj.measurements, None, &opts) {
                Ok(res) => res,
                Err(e) => return check(false, format!("case {case} {method:?}: {e}")),
            };
            worst = worst.max(max_distance(&res.marginals, &oracle.smoothed));
            worst_step = worst_step.max(
                res.diagnostics
                    .convergence
                    .get(1)
                    .copied()
                    .unwrap_or(f64::INFINITY),
            );
        }
    }
    check(
        worst < RTS_TOL && worst_step < FIXED_POINT_TOL,
        format!("max |EP - RTS| = {worst:.1e} (< {RTS_TOL:.0e}), sweep-2 change = {worst_step:.1e} (< {FIXED_POINT_TOL:.0e}) over 50 systems x 2 methods"),
    )
}

fn moment_matching_oracle() -> Outcome {
    let mut r = rng(1002);
    let cases: Vec<_> = (0..MC_CASES)
        .map(|case| {
            let (din, dout) = (1 + case % 3, 1 + (case / 3) % 2);
            (
                random_gp(&mut r, din, dout, 12),
                random_gaussian(&mut r, din),
            )
        })
        .collect();
    let worst = cases
        .par_iter()
        .enumerate()
        .map(|(case, (gp, input))| {
            let mm = propagate(gp, input, None, PredictMethod::MomentMatching).unwrap();
            let mc = monte_carlo_with_errors(gp, input, MC_SAMPLES, 7000 + case as u64).unwrap();
            let p = &mc.prediction;
            let z = |a: &[f64], b: &[f64], se: &[f64]| {
                a.iter()
                    .zip(b)
                    .zip(se)
                    .map(|((x, y), s)| (x - y).abs() / s.max(1e-300))
                    .fold(0.0, f64::max)
            };
            z(mm.mean.as_slice(), p.mean.as_slice(), mc.mean_se.as_slice())
                .max(z(mm.cov.as_slice(), p.cov.as_slice(), mc.cov_se.as_slice()))
                .max(z(
                    mm.cross_cov.as_slice(),
                    p.cross_cov.as_slice(),
                    mc.cross_cov_se.as_slice(),
                ))
        })
        .reduce(|| 0.0, f64::max);
    check(
        worst <= MC_SE,
        format!(
            "largest deviation {worst:.2} SE (<= {MC_SE}) over {MC_CASES} cases, n = {MC_SAMPLES}"
        ),
    )
}

fn fd_error(
    cavity: &Gaussian,
    g: &LogPartitionGrads,
    f: impl Fn(&Gaussian) -> f64,
    step: f64,
) -> f64 {
    let d = cavity.dim();
    let mut gm = DVector::zeros(d);
    let mut gs = DMatrix::zeros(d, d);
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = step;
        let plus = Gaussian::new(cavity.mean() + &e, cavity.cov().clone()).unwrap();
        let minus = Gaussian::new(cavity.mean() - &e, cavity.cov().clone()).unwrap();
        gm[i] = (f(&plus) - f(&minus)) / (2.0 * step);
        for j in 0..=i {
            let mut e = DMatrix::zeros(d, d);
            e[(i, j)] = step;
            e[(j, i)] = step;
            let plus = Gaussian::new(cavity.mean().clone(), cavity.cov() + &e).unwrap();
            let minus = Gaussian::new(cavity.mean().clone(), cavity.cov() - &e).unwrap();
            let v = (f(&plus) - f(&minus)) / (2.0 * step);
            let v = if i == j { v } else { 0.5 * v };
            gs[(i, j)] = v;
            gs[(j, i)] = v;
        }
    }
    let em = (&g.grad_mean - gm).norm() / g.grad_mean.norm().max(1e-3);
    let es = (&g.grad_cov - gs).norm() / g.grad_cov.norm().max(1e-3);
    em.max(es)
}

fn derivative_consistency() -> Outcome {
    // exactly linear means: the linear-Gaussian model through both routes
    let mut r = rng(1004);
    let mut fd_worst = 0.0f64;
    for case in 0..20 {
        let d = 1 + case % 3;
        let model = random_linear_model(&mut r, d, 2);
        let cavity = random_gaussian(&mut r, d);
        let z = normal_vector(&mut r, 2);
        let next = random_gaussian(&mut r, d).to_natural().unwrap();
        for method in [PredictMethod::MomentMatching, PredictMethod::Linearization] {
            let meas = |c: &Gaussian| {
                measurement_grads_from(&model.predict_measurement(c, method).unwrap(), &z).unwrap()
            };
            let back = |c: &Gaussian| {
                backward_grads_from(&model.predict_state(c, None, method).unwrap(), &next).unwrap()
            };
            fd_worst = fd_worst.max(fd_error(
                &cavity,
                &meas(&cavity),
                |c| meas(c).log_z,
                FD_STEP,
            ));
            fd_worst = fd_worst.max(fd_error(
                &cavity,
                &back(&cavity),
                |c| back(c).log_z,
                FD_STEP,
            ));
        }
    }
    // SE-kernel GP trained on a line: linear only up to shrinkage and
    // round-off, hence the separate tolerance
    let mut gp_worst = 0.0f64;
    for slope in [0.7, 1.0, 1.5] {
        let gp = near_linear_gp(slope);
        for (m, v, z) in [(0.4, 0.3, 1.1), (-0.8, 0.5, -0.2), (0.0, 1.0, 0.5)] {
            let cavity = Gaussian::scalar(m, v).unwrap();
            let next = Gaussian::scalar(z, 0.8).unwrap().to_natural().unwrap();
            let zz = DVector::from_element(1, z);
            for method in [PredictMethod::MomentMatching, PredictMethod::Linearization] {
                let meas = |c: &Gaussian| measurement_grads(&gp, c, &zz, method).unwrap();
                let back = |c: &Gaussian| backward_grads(&gp, c, None, &next, method).unwrap();
                gp_worst = gp_worst.max(fd_error(
                    &cavity,
                    &meas(&cavity),
                    |c| meas(c).log_z,
                    GP_FD_STEP,
                ));
                gp_worst = gp_worst.max(fd_error(
                    &cavity,
                    &back(&cavity),
                    |c| back(c).log_z,
                    GP_FD_STEP,
                ));
            }
        }
    }
    let mut r = rng(1003);
    let mut form_worst = 0.0f64;
    for case in 0..100 {
        let (d, e) = (1 + case % 2, 1 + (case / 2) % 2);
        let gp = random_gp(&mut r, d, e, 12);
        let cavity = random_gaussian(&mut r, d);
        let method = if case % 3 == 0 {
            PredictMethod::Linearization
        } else {
            PredictMethod::MomentMatching
        };
        let pred = propagate(&gp, &cavity, None, method).unwrap();
        let z = &pred.mean + normal_vector(&mut r, e);
        let a = marginal_from_grads(&cavity, &measurement_grads_from(&pred, &z).unwrap()).unwrap();
        let b = kalman_form_measurement_update(&cavity, &pred, &z).unwrap();
        let scale = 1.0 + b.mean().norm() + b.cov().norm();
        form_worst = form_worst.max(moment_distance(&a, &b).unwrap() / scale);
    }
    check(
        fd_worst < FD_REL_TOL && gp_worst < GP_FD_REL_TOL && form_worst < KALMAN_FORM_TOL,
        format!("finite-difference rel. error {fd_worst:.1e} on linear models (< {FD_REL_TOL:.0e}), {gp_worst:.1e} on a near-linear GP (< {GP_FD_REL_TOL:.0e}); gradient vs Kalman form {form_worst:.1e} (< {KALMAN_FORM_TOL:.0e}) on 100 cases"),
    )
}

fn nll_by_iteration(report: &MetricsReport, kind: SmootherKind, iteration: usize) -> f64 {
    let v: Vec<f64> = report
        .runs_of(kind)
        .filter_map(|r| r.diagnostics.as_ref())
        .map(|d| d.nll_x[(iteration - 1).min(d.nll_x.len() - 1)])
        .collect();
    MeanSe::from_values(&v).mean
}

fn synthetic() -> Outcome {
    let cfg = ExperimentConfig {
        methods: vec![SmootherKind::Gpads, SmootherKind::EpGpads],
        ..ExperimentConfig::new(SystemSpec::Sine(SineSystem::default()))
    };
    let report = run_experiment(&cfg).unwrap();
    let per_seed = |k| {
        report
            .runs_of(k)
            .map(|r| r.metrics.map(|m| m.nll_x).unwrap_or(f64::INFINITY))
            .collect::<Vec<_>>()
    };
    let (gp, ep) = (
        per_seed(SmootherKind::Gpads),
        per_seed(SmootherKind::EpGpads),
    );
    let wins = ep.iter().zip(&gp).filter(|(e, g)| e < g).count();
    let ep_sum = report.summary(SmootherKind::EpGpads).unwrap();
    let gp_sum = report.summary(SmootherKind::Gpads).unwrap();
    let ep_nll = ep_sum.nll_x.map(|m| m.mean).unwrap_or(f64::NAN);
    let gp_nll = gp_sum.nll_x.map(|m| m.mean).unwrap_or(f64::NAN);
    let ep_mae = ep_sum.mae_x.map(|m| m.mean).unwrap_or(f64::NAN);
    let (it1, it10) = (
        nll_by_iteration(&report, SmootherKind::EpGpads, 1),
        nll_by_iteration(&report, SmootherKind::EpGpads, 10),
    );
    let a = wins >= 9;
    let b = ep_nll >= SINE_EP_NLL.0 && ep_nll <= SINE_EP_NLL.1 && gp_nll > 0.0;
    let c = ep_mae < SINE_EP_MAE;
    let d = it10 <= it1;
    check(
        a && b && c && d,
        format!(
            "(a) EP wins {wins}/10 {}; (b) EP-GPADS NLL_x {ep_nll:+.3}, GPADS {gp_nll:+.3} {}; (c) EP-GPADS MAE_x {ep_mae:.3} {}; (d) NLL_x it.1 {it1:+.3} -> it.10 {it10:+.3} {}",
            ok(a), ok(b), ok(c), ok(d)
        ),
    )
}

fn pendulum() -> Outcome {
    let cfg = ExperimentConfig {
        seeds: (0..PENDULUM_SEEDS).collect(),
        ..ExperimentConfig::new(SystemSpec::Pendulum(PendulumSystem::default()))
    };
    let report = run_experiment(&cfg).unwrap();
    let sum = |k| report.summary(k).unwrap();
    let mm_failures = sum(SmootherKind::Gpads).failures + sum(SmootherKind::EpGpads).failures;
    let lin_runs = sum(SmootherKind::Gpeks).runs + sum(SmootherKind::EpGpeks).runs;
    let lin_failures = sum(SmootherKind::Gpeks).failures + sum(SmootherKind::EpGpeks).failures;
    let lin_frac = lin_failures as f64 / lin_runs as f64;
    let nll = |k| sum(k).nll_x.map(|m| m.mean).unwrap_or(f64::NAN);
    let (ep_nll, gp_nll) = (nll(SmootherKind::EpGpads), nll(SmootherKind::Gpads));
    let worst_mae = SmootherKind::ALL
        .iter()
        .map(|k| sum(*k).mae_x.map(|m| m.mean).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let a = mm_failures == 0;
    let b = lin_frac >= LINEARIZATION_FAILURES.0 && lin_frac <= LINEARIZATION_FAILURES.1;
    let c = ep_nll <= gp_nll + PENDULUM_NLL_SLACK;
    let d = worst_mae < PENDULUM_MAE;
    check(
        a && b && c && d,
        format!(
            "(a) moment-matching failures {mm_failures} {}; (b) linearization failure fraction {lin_frac:.2} {}; (c) EP-GPADS NLL_x {ep_nll:+.3} vs GPADS {gp_nll:+.3} {}; (d) worst MAE_x {worst_mae:.3} {}",
            ok(a), ok(b), ok(c), ok(d)
        ),
    )
}

fn algebra_and_metrics() -> Outcome {
    let mut r = rng(1006);
    let (mut roundtrip, mut natural, mut symmetry, mut log_scale, mut metric) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for case in 0..500 {
        let d = 1 + case % 5;
        let (a, b) = (random_gaussian(&mut r, d), random_gaussian(&mut r, d));
        let scale = 1.0 + a.mean().norm() + a.cov().norm();
        let ab = multiply(&a, &b).unwrap();
        let back = divide(&ab, &b.to_natural().unwrap())
            .unwrap()
            .to_moments()
            .unwrap();
        roundtrip = roundtrip.max(moment_distance(&back, &a).unwrap() / scale);
        let nat = a.to_natural().unwrap().to_moments().unwrap();
        natural = natural.max(moment_distance(&nat, &a).unwrap() / scale);
        symmetry = symmetry.max((ab.cov() - ab.cov().transpose()).norm() / ab.cov().norm());
        let x = normal_vector(&mut r, d);
        let lhs = log_pdf(&ab, &x).unwrap();
        let rhs = log_pdf(&a, &x).unwrap() + log_pdf(&b, &x).unwrap();
        log_scale = log_scale.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
        // metric oracle: textbook density through an explicit inverse
        let truth = DMatrix::from_row_slice(1, d, x.as_slice());
        let diff = &x - a.mean();
        let naive = 0.5
            * (d as f64 * (2.0 * std::f64::consts::PI).ln()
                + a.cov().determinant().ln()
                + (diff.transpose() * a.cov().clone().try_inverse().unwrap() * &diff)[0]);
        let m = std::slice::from_ref(&a);
        let naive_mae = diff.abs().sum() / d as f64;
        metric = metric
            .max((metric_nll_x(m, &truth).unwrap() - naive).abs() / (1.0 + naive.abs()))
            .max((metric_nll_z(m, &truth).unwrap() - naive).abs() / (1.0 + naive.abs()))
            .max((metric_mae_x(m, &truth).unwrap() - naive_mae).abs() / (1.0 + naive_mae));
    }
    let pass = roundtrip < ROUNDTRIP_TOL
        && natural < NATURAL_TOL
        && symmetry < SYMMETRY_TOL
        && log_scale < LOG_SCALE_TOL
        && metric < METRIC_TOL;
    check(
        pass,
        format!("roundtrip {roundtrip:.1e}, natural {natural:.1e}, symmetry {symmetry:.1e}, log-scale {log_scale:.1e}, metrics {metric:.1e} on 500 cases"),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "MISSED"
    }
}

fn main() {
    // Ignore harness flags such as --nocapture or a name filter.
    let secs = Duration::from_secs;
    let results = [
        run("1", "linear-Gaussian exactness", secs(30), linear_exactness),
        run(
            "2",
            "moment matching vs Monte Carlo",
            secs(120),
            moment_matching_oracle,
        ),
        run(
            "3",
            "derivative consistency",
            secs(60),
            derivative_consistency,
        ),
        run("4", "synthetic sine experiment", secs(300), synthetic),
        run("5", "pendulum experiment", secs(900), pendulum),
        run(
            "6",
            "Gaussian algebra and metric suites",
            secs(10),
            algebra_and_metrics,
        ),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
