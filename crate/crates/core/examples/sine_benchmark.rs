//! The six smoothers on the scalar sine system.

use gpds_ep::bench::{run_experiment, ExperimentConfig, SystemSpec};
use gpds_ep::systems::SineSystem;

fn main() -> gpds_ep::Result<()> {
    let cfg = ExperimentConfig::new(SystemSpec::Sine(SineSystem::default()));
    let report = run_experiment(&cfg)?;
    print!("{}", report.table());
    Ok(())
}
