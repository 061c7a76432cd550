//! Extended Kalman smoothing with the known sine model, single sweep and
//! iterated with EP.

use gpds_ep::bench::{metric_mae_x, metric_nll_x};
use gpds_ep::ep::{ep_smooth, EpOptions};
use gpds_ep::kalman::eks_smooth;
use gpds_ep::systems::SineSystem;
use gpds_ep::PredictMethod;

fn main() -> gpds_ep::Result<()> {
    let sys = SineSystem::default();
    let model = sys.parametric_model();
    for seed in 0..5 {
        let traj = sys.simulate(seed, 20)?;
        let eks = eks_smooth(&model, &traj.measurements, None)?;
        let ep = ep_smooth(
            &model,
            &traj.measurements,
            None,
            &EpOptions::with_method(PredictMethod::Linearization),
        )?;
        println!(
            "seed {seed}: EKS NLL_x {:+.3} MAE {:.3} | EP-EKS NLL_x {:+.3} MAE {:.3} ({} sweeps)",
            metric_nll_x(&eks.smoothed, &traj.states)?,
            metric_mae_x(&eks.smoothed, &traj.states)?,
            metric_nll_x(&ep.marginals, &traj.states)?,
            metric_mae_x(&ep.marginals, &traj.states)?,
            ep.diagnostics.iterations
        );
    }
    Ok(())
}
