//! EP with a hand-written state-space model: a known nonlinear map with
//! analytic Jacobians.

use gpds_ep::ep::{ep_smooth, EpOptions};
use gpds_ep::{Gaussian, ParametricModel, PredictMethod};
use nalgebra::{DMatrix, DVector};

fn main() -> gpds_ep::Result<()> {
    // x' = x + 0.5 tanh(x), z = x^2 / 4
    let model = ParametricModel::new(
        |x, _| DVector::from_element(1, x[0] + 0.5 * x[0].tanh()),
        |x, _| DMatrix::from_element(1, 1, 1.0 + 0.5 / x[0].cosh().powi(2)),
        |x| DVector::from_element(1, 0.25 * x[0] * x[0]),
        |x| DMatrix::from_element(1, 1, 0.5 * x[0]),
        DMatrix::from_element(1, 1, 0.01),
        DMatrix::from_element(1, 1, 0.04),
        Gaussian::scalar(1.0, 0.5)?,
        0,
    );
    let z = DMatrix::from_column_slice(6, 1, &[0.3, 0.5, 0.8, 1.2, 1.9, 2.8]);
    let res = ep_smooth(
        &model,
        &z,
        None,
        &EpOptions::with_method(PredictMethod::Linearization),
    )?;
    for (t, m) in res.marginals.iter().enumerate() {
        println!(
            "t {}: {:.3} +/- {:.3}",
            t + 1,
            m.mean()[0],
            m.cov()[(0, 0)].sqrt()
        );
    }
    Ok(())
}
