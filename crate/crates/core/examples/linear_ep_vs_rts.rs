//! On a linear-Gaussian system EP converges to the RTS smoother.

use gpds_ep::ep::{ep_smooth, EpOptions};
use gpds_ep::kalman::rts_smooth;
use gpds_ep::systems::LinearSystem;
use gpds_ep::{moment_distance, PredictMethod};

fn main() -> gpds_ep::Result<()> {
    let sys = LinearSystem::default();
    let model = sys.model(3)?;
    let traj = sys.simulate(&model, 3, 30)?;
    let rts = rts_smooth(&model, &traj.measurements, None)?;
    for method in [PredictMethod::MomentMatching, PredictMethod::Linearization] {
        let res = ep_smooth(
            &model,
            &traj.measurements,
            None,
            &EpOptions::with_method(method),
        )?;
        let worst = res
            .marginals
            .iter()
            .zip(&rts.smoothed)
            .map(|(a, b)| moment_distance(a, b))
            .collect::<gpds_ep::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        println!(
            "{method:?}: {} sweeps, change per sweep {:?}, max distance to RTS {worst:.2e}",
            res.diagnostics.iterations, res.diagnostics.convergence
        );
    }
    Ok(())
}
