//! Benchmark dynamical systems with seeded simulation and trajectory files.

mod linear;
mod pendulum;
mod sine;

pub use linear::{simulate_linear, LinearSystem};
pub use pendulum::{PendulumSystem, PendulumTrainingData, ZeroAngle};
pub use sine::{SineSystem, SineTrainingData};

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Independent random streams derived from one seed.
pub(crate) mod stream {
    pub const TRAJECTORY: u64 = 1;
    pub const TRAINING: u64 = 2;
    pub const TEST: u64 = 3;
}

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A simulated run: one row per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: DMatrix<f64>,
    pub measurements: DMatrix<f64>,
    /// Row `t` is the control applied between `t` and `t + 1`.
    pub controls: Option<DMatrix<f64>>,
    pub seed: u64,
}

/// The systems a trajectory can come from, as recorded in metadata files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemConfig {
    Sine(SineSystem),
    Pendulum(PendulumSystem),
    Linear(LinearSystem),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub seed: u64,
    pub len: usize,
    pub state_dim: usize,
    pub measurement_dim: usize,
    pub control_dim: usize,
    pub system: SystemConfig,
}

impl Trajectory {
    pub fn new(
        states: DMatrix<f64>,
        measurements: DMatrix<f64>,
        controls: Option<DMatrix<f64>>,
        seed: u64,
    ) -> Result<Self> {
        check_dim(states.nrows(), measurements.nrows())?;
        if let Some(u) = &controls {
            check_dim(states.nrows(), u.nrows())?;
        }
        Ok(Self {
            states,
            measurements,
            controls,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurements.ncols()
    }

    pub fn control_dim(&self) -> usize {
        self.controls.as_ref().map(|u| u.ncols()).unwrap_or(0)
    }

    /// `t, x_1..x_D, z_1..z_E, u_1..u_U` with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.state_dim()).map(|i| format!("x_{i}")));
        header.extend((1..=self.measurement_dim()).map(|i| format!("z_{i}")));
        header.extend((1..=self.control_dim()).map(|i| format!("u_{i}")));
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(self.states.row(t).iter().map(|v| format!("{v:.17e}")));
            row.extend(self.measurements.row(t).iter().map(|v| format!("{v:.17e}")));
            if let Some(u) = &self.controls {
                row.extend(u.row(t).iter().map(|v| format!("{v:.17e}")));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`Trajectory::write_csv`]; column groups are
    /// recognized by their `x_`, `z_` and `u_` prefixes.
    pub fn read_csv(path: &Path, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let cols = |prefix: &str| -> Vec<usize> {
            header
                .iter()
                .enumerate()
                .filter(|(_, h)| h.starts_with(prefix))
                .map(|(i, _)| i)
                .collect()
        };
        let (xc, zc, uc) = (cols("x_"), cols("z_"), cols("u_"));
        if xc.is_empty() || zc.is_empty() {
            return Err(Error::Serialization(
                "trajectory CSV needs x_ and z_ columns".into(),
            ));
        }
        let (mut xs, mut zs, mut us) = (Vec::new(), Vec::new(), Vec::new());
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Serialization("short CSV row".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Serialization(e.to_string()))
            };
            for &i in &xc {
                xs.push(field(i)?);
            }
            for &i in &zc {
                zs.push(field(i)?);
            }
            for &i in &uc {
                us.push(field(i)?);
            }
            rows += 1;
        }
        let controls = (!uc.is_empty()).then(|| DMatrix::from_row_slice(rows, uc.len(), &us));
        Trajectory::new(
            DMatrix::from_row_slice(rows, xc.len(), &xs),
            DMatrix::from_row_slice(rows, zc.len(), &zs),
            controls,
            seed,
        )
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(
        &self,
        dir: &Path,
        stem: &str,
        system: &SystemConfig,
    ) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let meta_path = dir.join(format!("{stem}.json"));
        self.write_csv(&csv_path)?;
        let meta = TrajectoryMetadata {
            seed: self.seed,
            len: self.len(),
            state_dim: self.state_dim(),
            measurement_dim: self.measurement_dim(),
            control_dim: self.control_dim(),
            system: system.clone(),
        };
        fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
        Ok((csv_path, meta_path))
    }

    /// Loads a trajectory CSV and its sibling metadata file.
    pub fn load(csv_path: &Path) -> Result<(Self, TrajectoryMetadata)> {
        let meta: TrajectoryMetadata =
            serde_json::from_str(&fs::read_to_string(csv_path.with_extension("json"))?)?;
        let traj = Self::read_csv(csv_path, meta.seed)?;
        check_dim(meta.len, traj.len())?;
        Ok((traj, meta))
    }
}
