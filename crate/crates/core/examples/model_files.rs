//! Save a trained model and a trajectory, reload both and smooth.

use gpds_ep::bench::{train_sine_model, write_marginals_csv};
use gpds_ep::ep::{ep_smooth, EpOptions};
use gpds_ep::gp::FitOptions;
use gpds_ep::systems::{SineSystem, SystemConfig, Trajectory};
use gpds_ep::GpdsModel;

fn main() -> gpds_ep::Result<()> {
    let dir = std::env::temp_dir().join("gpds-ep-example");
    let sys = SineSystem::default();
    let model = train_sine_model(&sys, 2, 30, FitOptions::default())?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("model.json"), model.to_json()?)?;
    let (csv, _) = sys
        .simulate(2, 20)?
        .save(&dir, "run", &SystemConfig::Sine(sys))?;

    let model = GpdsModel::from_json(&std::fs::read_to_string(dir.join("model.json"))?)?;
    let (traj, meta) = Trajectory::load(&csv)?;
    let res = ep_smooth(&model, &traj.measurements, None, &EpOptions::default())?;
    write_marginals_csv(
        &dir.join("marginals.csv"),
        &res.marginals,
        Some(&traj.states),
    )?;
    println!(
        "seed {} with {} steps smoothed into {}",
        meta.seed,
        meta.len,
        dir.display()
    );
    Ok(())
}
