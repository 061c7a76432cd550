//! Fit a GP to noisy samples of `4 sin(x)` and query it.

use gpds_ep::gp::{fit_gp, FitOptions};
use gpds_ep::systems::SineSystem;
use nalgebra::DVector;

fn main() -> gpds_ep::Result<()> {
    let sys = SineSystem::default();
    let data = sys.training_set(0, 30)?;
    let gp = fit_gp(&data.inputs, &data.next_states, FitOptions::default())?;
    let h = &gp.hypers()[0];
    println!(
        "lengthscale {:.3}, signal var {:.3}, noise var {:.5}",
        h.lengthscales[0], h.signal_var, h.noise_var
    );
    println!("{:>6} {:>9} {:>9} {:>7}", "x", "4 sin x", "mean", "sd");
    for i in 0..=10 {
        let x = -5.0 + i as f64;
        let (m, v) = gp.predict_point(&DVector::from_element(1, x))?;
        println!(
            "{x:>6.1} {:>9.4} {:>9.4} {:>7.4}",
            sys.mean_map(x),
            m[0],
            v[0].sqrt()
        );
    }
    Ok(())
}
