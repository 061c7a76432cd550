//! NLL_x and the moment change after each EP sweep on one sine trajectory.

use gpds_ep::bench::train_sine_model;
use gpds_ep::ep::{ep_smooth_with_truth, EpOptions};
use gpds_ep::gp::FitOptions;
use gpds_ep::systems::SineSystem;

fn main() -> gpds_ep::Result<()> {
    let sys = SineSystem::default();
    let model = train_sine_model(&sys, 1, 30, FitOptions::default())?;
    let traj = sys.simulate(1, 20)?;
    let res = ep_smooth_with_truth(
        &model,
        &traj.measurements,
        None,
        &traj.states,
        &EpOptions::default(),
    )?;
    let d = &res.diagnostics;
    println!("sweep    NLL_x    NLL_z    change  skipped");
    for i in 0..d.iterations {
        println!(
            "{:>5} {:+8.3} {:+8.3} {:9.2e} {:>8}",
            i + 1,
            d.nll_x[i],
            d.nll_z[i],
            d.convergence[i],
            d.skipped_per_iteration[i]
        );
    }
    println!("converged: {}", d.converged);
    Ok(())
}
