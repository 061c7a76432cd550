use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpds_ep::bench::{
    parse_seeds, run_experiment, train_pendulum_model, train_sine_model, write_marginals_csv,
    ExperimentConfig, SmootherKind, SystemSpec,
};
use gpds_ep::ep::{ep_smooth, DiagnosticsRecord, EpOptions};
use gpds_ep::gp::FitOptions;
use gpds_ep::systems::{SystemConfig, Trajectory};
use gpds_ep::{Error, GpdsModel, Result};

const CSV_HELP: &str = "\
CSV formats:
  trajectories (simulate):  t, x_1..x_D, z_1..z_E[, u_1..u_U]
      one row per time step; u_t is the control applied between t and t+1.
      A sibling .json file records the seed and system parameters.
  marginals (smooth, bench runs/):  t, mean_i, lower_i, upper_i for each
      state dimension i (bounds are mean -/+ 2 sd), followed by the true
      state x_1..x_D when it is known.";

#[derive(Parser)]
#[command(name = "gpds-ep", version, about = "Expectation propagation smoothing for GP dynamical systems", after_help = CSV_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate seeded trajectories and write them as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train transition and measurement GPs and write the model as JSON.
    Train {
        #[arg(long, default_value = "sine")]
        system: String,
        /// Training seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training points (sine only).
        #[arg(long, default_value_t = 30)]
        points: usize,
        #[arg(long, default_value_t = 200)]
        fit_iters: usize,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Smooth one trajectory file with a saved GP model.
    Smooth {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value = "ep-gpads")]
        method: SmootherKind,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value = "smoothed")]
        out: PathBuf,
    },
    /// Run a benchmark over seeds and methods and write a report.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods, or "all".
        #[arg(long, default_value = "all")]
        method: String,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Run sequentially in a fixed order.
        #[arg(long)]
        deterministic: bool,
        /// Seed of the pendulum training trajectories.
        #[arg(long, default_value_t = 0)]
        model_seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// sine, pendulum or linear.
    #[arg(long, default_value = "sine")]
    system: String,
    /// "0..10" (half open) or "1,2,3".
    #[arg(long, default_value = "0..10")]
    seeds: String,
    /// Trajectory length.
    #[arg(long = "T", default_value_t = 20)]
    len: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn simulate(common: &Common) -> Result<()> {
    let spec = SystemSpec::by_name(&common.system)?;
    for seed in parse_seeds(&common.seeds)? {
        let (traj, config) = match &spec {
            SystemSpec::Sine(s) => (s.simulate(seed, common.len)?, SystemConfig::Sine(s.clone())),
            SystemSpec::Pendulum(p) => (
                p.simulate(seed, common.len, p.substeps)?,
                SystemConfig::Pendulum(p.clone()),
            ),
            SystemSpec::Linear(l) => (
                l.simulate(&l.model(seed)?, seed, common.len)?,
                SystemConfig::Linear(l.clone()),
            ),
            SystemSpec::File { .. } => unreachable!("by_name never yields a file system"),
        };
        let (csv, _) = traj.save(&common.out, &format!("{}_seed{seed}", spec.name()), &config)?;
        println!("{}", csv.display());
    }
    Ok(())
}

fn train(system: &str, seed: u64, points: usize, fit_iters: usize, out: &Path) -> Result<()> {
    let fit = FitOptions {
        iters: fit_iters,
        ..FitOptions::default()
    };
    let model = match SystemSpec::by_name(system)? {
        SystemSpec::Sine(s) => train_sine_model(&s, seed, points, fit)?,
        SystemSpec::Pendulum(p) => train_pendulum_model(&p, seed, fit)?,
        _ => {
            return Err(Error::Config(format!(
                "no GP training data for system '{system}'"
            )))
        }
    };
    fs::write(out, model.to_json()?)?;
    println!("{}", out.display());
    Ok(())
}

fn smooth(
    model: &Path,
    trajectory: &Path,
    method: SmootherKind,
    opts: EpOptions,
    out: &Path,
) -> Result<()> {
    if method.uses_known_model() {
        return Err(Error::Config(format!(
            "{method} needs the known system; use `bench` instead"
        )));
    }
    let model = GpdsModel::from_json(&fs::read_to_string(model)?)?;
    let (traj, _) = Trajectory::load(trajectory)?;
    let opts = method.options(&opts);
    let res = ep_smooth(&model, &traj.measurements, traj.controls.as_ref(), &opts)?;
    fs::create_dir_all(out)?;
    write_marginals_csv(
        &out.join("marginals.csv"),
        &res.marginals,
        Some(&traj.states),
    )?;
    fs::write(
        out.join("diagnostics.json"),
        DiagnosticsRecord::new(&res.diagnostics, &res.marginals).to_json()?,
    )?;
    println!(
        "{} sweeps, converged: {}, skipped updates: {}/{}",
        res.diagnostics.iterations,
        res.diagnostics.converged,
        res.diagnostics.skipped,
        res.diagnostics.attempted
    );
    Ok(())
}

fn run() -> Result<i32> {
    match Cli::parse().command {
        Command::Simulate { common } => simulate(&common)?,
        Command::Train {
            system,
            seed,
            points,
            fit_iters,
            out,
        } => train(&system, seed, points, fit_iters, &out)?,
        Command::Smooth {
            model,
            trajectory,
            method,
            max_iters,
            tol,
            out,
        } => smooth(
            &model,
            &trajectory,
            method,
            EpOptions {
                max_iters,
                tol,
                ..EpOptions::default()
            },
            &out,
        )?,
        Command::Bench {
            common,
            method,
            max_iters,
            tol,
            deterministic,
            model_seed,
        } => {
            let methods = if method.trim() == "all" {
                SmootherKind::ALL.to_vec()
            } else {
                method.split(',').map(str::parse).collect::<Result<_>>()?
            };
            let cfg = ExperimentConfig {
                methods,
                seeds: parse_seeds(&common.seeds)?,
                len: common.len,
                ep: EpOptions {
                    max_iters,
                    tol,
                    ..EpOptions::default()
                },
                out_dir: Some(common.out.clone()),
                deterministic,
                model_seed,
                ..ExperimentConfig::new(SystemSpec::by_name(&common.system)?)
            };
            let report = run_experiment(&cfg)?;
            print!("{}", report.table());
            println!("report: {}", common.out.join("report.json").display());
            return Ok(report.exit_code());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
