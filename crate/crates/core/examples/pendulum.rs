//! Bearings-only tracking of a torqued pendulum: simulate, train GPs from
//! random trajectories and smooth a test run.

use gpds_ep::bench::{metric_mae_x, metric_nll_x, train_pendulum_model};
use gpds_ep::ep::{ep_smooth, EpOptions};
use gpds_ep::gp::FitOptions;
use gpds_ep::systems::PendulumSystem;

fn main() -> gpds_ep::Result<()> {
    let sys = PendulumSystem::default();
    let model = train_pendulum_model(&sys, 0, FitOptions::default())?;
    let traj = sys.simulate(7, 20, sys.substeps)?;
    let controls = traj.controls.as_ref();
    for (name, max_iters) in [("GPADS", 1), ("EP-GPADS", 100)] {
        let opts = EpOptions {
            max_iters,
            ..EpOptions::default()
        };
        let res = ep_smooth(&model, &traj.measurements, controls, &opts)?;
        println!(
            "{name:<9} NLL_x {:+.3}  MAE_x {:.3}",
            metric_nll_x(&res.marginals, &traj.states)?,
            metric_mae_x(&res.marginals, &traj.states)?
        );
    }
    println!(
        "{:>3} {:>7} {:>7} {:>6} {:>9} {:>7} {:>6}",
        "t", "angle", "mean", "sd", "ang. vel", "mean", "sd"
    );
    let res = ep_smooth(&model, &traj.measurements, controls, &EpOptions::default())?;
    for (t, m) in res.marginals.iter().enumerate() {
        println!(
            "{:>3} {:>7.3} {:>7.3} {:>6.3} {:>9.3} {:>7.3} {:>6.3}",
            t + 1,
            traj.states[(t, 0)],
            m.mean()[0],
            m.cov()[(0, 0)].sqrt(),
            traj.states[(t, 1)],
            m.mean()[1],
            m.cov()[(1, 1)].sqrt()
        );
    }
    Ok(())
}
