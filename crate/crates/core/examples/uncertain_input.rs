//! Push a Gaussian through a GP with moment matching, linearization and
//! sampling.

use gpds_ep::bench::train_sine_model;
use gpds_ep::gp::FitOptions;
use gpds_ep::propagate::{monte_carlo_with_errors, propagate};
use gpds_ep::systems::SineSystem;
use gpds_ep::{Gaussian, PredictMethod};

fn main() -> gpds_ep::Result<()> {
    let model = train_sine_model(&SineSystem::default(), 0, 30, FitOptions::default())?;
    for (mean, var) in [(0.5, 0.01), (0.5, 0.25), (0.0, 1.0)] {
        let input = Gaussian::scalar(mean, var)?;
        println!("input N({mean}, {var})");
        for (name, method) in [
            ("moment matching", PredictMethod::MomentMatching),
            ("linearization", PredictMethod::Linearization),
        ] {
            let p = propagate(&model.gp_h, &input, None, method)?;
            println!(
                "  {name:<16} mean {:+.4} var {:.4} cov[x, f] {:+.4}",
                p.mean[0],
                p.cov[(0, 0)],
                p.cross_cov[(0, 0)]
            );
        }
        let mc = monte_carlo_with_errors(&model.gp_h, &input, 200_000, 1)?;
        println!(
            "  {:<16} mean {:+.4} var {:.4} cov[x, f] {:+.4}  (se {:.4}, {:.4}, {:.4})",
            "Monte Carlo",
            mc.prediction.mean[0],
            mc.prediction.cov[(0, 0)],
            mc.prediction.cross_cov[(0, 0)],
            mc.mean_se[0],
            mc.cov_se[(0, 0)],
            mc.cross_cov_se[(0, 0)]
        );
    }
    Ok(())
}
