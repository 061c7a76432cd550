use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metric_mae_x, metric_nll_x, metric_nll_z, MeanSe};
use crate::ep::{ep_smooth_with_truth, one_step_predictives, EpDiagnostics, EpOptions};
use crate::error::{Error, Result};
use crate::gaussian::{moment_distance, Gaussian};
use crate::gp::{fit_gp, FitOptions};
use crate::kalman::rts_smooth;
use crate::model::{GpdsModel, LinearGaussianModel, ParametricModel, StateSpaceModel};
use crate::propagate::PredictMethod;
use crate::systems::{LinearSystem, PendulumSystem, SineSystem, Trajectory};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GPDS_EP_THREADS";

/// Maximum deviation from the RTS smoother for a linear run to count as exact.
pub const EXACT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmootherKind {
    Eks,
    EpEks,
    Gpeks,
    EpGpeks,
    Gpads,
    EpGpads,
}

impl SmootherKind {
    pub const ALL: [SmootherKind; 6] = [
        SmootherKind::Eks,
        SmootherKind::EpEks,
        SmootherKind::Gpeks,
        SmootherKind::EpGpeks,
        SmootherKind::Gpads,
        SmootherKind::EpGpads,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SmootherKind::Eks => "eks",
            SmootherKind::EpEks => "ep-eks",
            SmootherKind::Gpeks => "gpeks",
            SmootherKind::EpGpeks => "ep-gpeks",
            SmootherKind::Gpads => "gpads",
            SmootherKind::EpGpads => "ep-gpads",
        }
    }

    pub fn method(self) -> PredictMethod {
        match self {
            SmootherKind::Gpads | SmootherKind::EpGpads => PredictMethod::MomentMatching,
            _ => PredictMethod::Linearization,
        }
    }

    pub fn is_iterated(self) -> bool {
        matches!(
            self,
            SmootherKind::EpEks | SmootherKind::EpGpeks | SmootherKind::EpGpads
        )
    }

    /// Whether the smoother runs on the known system rather than learned GPs.
    pub fn uses_known_model(self) -> bool {
        matches!(self, SmootherKind::Eks | SmootherKind::EpEks)
    }

    /// EP options for this smoother given the experiment-wide settings.
    pub fn options(self, base: &EpOptions) -> EpOptions {
        let mut opts = EpOptions {
            method: self.method(),
            ..*base
        };
        if !self.is_iterated() {
            opts.max_iters = 1;
        }
        opts
    }
}

impl fmt::Display for SmootherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SmootherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        SmootherKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Parses `"0..10"` (half open), `"3"` or `"1,4,7"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = |e: std::num::ParseIntError| Error::Config(format!("bad seed list '{s}': {e}"));
    let s = s.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(bad)?,
            b.trim().parse().map_err(bad)?,
        );
        (a..b).collect()
    } else {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse().map_err(bad))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(Error::Config(format!("seed list '{s}' is empty")));
    }
    Ok(seeds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    /// Per seed: fresh GP training set and test trajectory.
    Sine(SineSystem),
    /// GPs trained once on the training trajectories of `model_seed`; each
    /// seed yields one test trajectory.
    Pendulum(PendulumSystem),
    /// Random stable linear systems, smoothed exactly and checked against
    /// the RTS smoother.
    Linear(LinearSystem),
    /// A saved GP model and trajectory files; seeds index the files.
    File {
        model: PathBuf,
        trajectories: Vec<PathBuf>,
    },
}

impl SystemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::Sine(_) => "sine",
            SystemSpec::Pendulum(_) => "pendulum",
            SystemSpec::Linear(_) => "linear",
            SystemSpec::File { .. } => "file",
        }
    }

    /// Default system by name; `file` needs explicit paths.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "sine" => Ok(SystemSpec::Sine(SineSystem::default())),
            "pendulum" => Ok(SystemSpec::Pendulum(PendulumSystem::default())),
            "linear" => Ok(SystemSpec::Linear(LinearSystem::default())),
            other => Err(Error::Config(format!("unknown system '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub methods: Vec<SmootherKind>,
    pub seeds: Vec<u64>,
    /// Trajectory length.
    pub len: usize,
    /// Settings for the iterated smoothers; single-sweep smoothers run one
    /// sweep with the same options.
    pub ep: EpOptions,
    /// Report and per-run CSVs are written here when set.
    pub out_dir: Option<PathBuf>,
    /// GP training points per seed on the sine system.
    pub train_points: usize,
    pub fit: FitOptions,
    pub deterministic: bool,
    /// A method whose fraction of failed runs exceeds this fails the
    /// experiment.
    pub max_failure_fraction: f64,
    /// Seed of the pendulum training trajectories.
    pub model_seed: u64,
}

impl ExperimentConfig {
    pub fn new(system: SystemSpec) -> Self {
        Self {
            system,
            methods: SmootherKind::ALL.to_vec(),
            seeds: (0..10).collect(),
            len: 20,
            ep: EpOptions::default(),
            out_dir: None,
            train_points: 30,
            fit: FitOptions::default(),
            deterministic: false,
            max_failure_fraction: 0.5,
            model_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds selected".into()));
        }
        if self.len == 0 {
            return Err(Error::Config("trajectory length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(Error::Config(
                "max_failure_fraction must lie in [0, 1]".into(),
            ));
        }
        self.ep
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if let SystemSpec::File { trajectories, .. } = &self.system {
            if self.methods.iter().any(|m| m.uses_known_model()) {
                return Err(Error::Config(
                    "EKS methods need a known system, not a model file".into(),
                ));
            }
            if let Some(s) = self
                .seeds
                .iter()
                .find(|s| **s as usize >= trajectories.len())
            {
                return Err(Error::Config(format!("seed {s} has no trajectory file")));
            }
        }
        if let SystemSpec::Sine(_) = self.system {
            if self.train_points == 0 {
                return Err(Error::Config("train_points must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Learned and known models for one scenario.
struct Scenario {
    seed: u64,
    trajectory: Trajectory,
    gpds: Option<GpdsModel>,
    known: Option<ParametricModel>,
    linear: Option<LinearGaussianModel>,
}

impl Scenario {
    fn model(&self, kind: SmootherKind) -> Result<&dyn StateSpaceModel> {
        if let Some(m) = &self.linear {
            return Ok(m);
        }
        let m: Option<&dyn StateSpaceModel> = if kind.uses_known_model() {
            self.known.as_ref().map(|m| m as &dyn StateSpaceModel)
        } else {
            self.gpds.as_ref().map(|m| m as &dyn StateSpaceModel)
        };
        m.ok_or_else(|| Error::Config(format!("{kind} is not available for this system")))
    }
}

/// Trains transition and measurement GPs on sine data.
pub fn train_sine_model(
    sys: &SineSystem,
    seed: u64,
    n: usize,
    fit: FitOptions,
) -> Result<GpdsModel> {
    let data = sys.training_set(seed, n)?;
    let gp_h = fit_gp(&data.inputs, &data.next_states, fit)?;
    let gp_g = fit_gp(&data.inputs, &data.measurements, fit)?;
    GpdsModel::new(gp_h, gp_g, sys.prior())
}

/// Trains transition and measurement GPs on the pendulum training
/// trajectories of `seed`.
pub fn train_pendulum_model(sys: &PendulumSystem, seed: u64, fit: FitOptions) -> Result<GpdsModel> {
    let data = sys.training_set(seed)?;
    let gp_h = fit_gp(&data.transition_inputs, &data.transition_targets, fit)?;
    let gp_g = fit_gp(&data.measurement_inputs, &data.measurement_targets, fit)?;
    GpdsModel::new(gp_h, gp_g, sys.prior())
}

fn build_scenarios(cfg: &ExperimentConfig, pool: &Pool) -> Result<Vec<Scenario>> {
    let wants_known = cfg.methods.iter().any(|m| m.uses_known_model());
    let wants_gp = cfg.methods.iter().any(|m| !m.uses_known_model());
    match &cfg.system {
        SystemSpec::Sine(sys) => pool.map(&cfg.seeds, |&seed| {
            Ok(Scenario {
                seed,
                trajectory: sys.simulate(seed, cfg.len)?,
                gpds: if wants_gp {
                    Some(train_sine_model(sys, seed, cfg.train_points, cfg.fit)?)
                } else {
                    None
                },
                known: wants_known.then(|| sys.parametric_model()),
                linear: None,
            })
        }),
        SystemSpec::Pendulum(sys) => {
            let gpds = if wants_gp {
                Some(train_pendulum_model(sys, cfg.model_seed, cfg.fit)?)
            } else {
                None
            };
            pool.map(&cfg.seeds, |&seed| {
                Ok(Scenario {
                    seed,
                    trajectory: sys.simulate(seed, cfg.len, sys.substeps)?,
                    gpds: gpds.clone(),
                    known: wants_known.then(|| sys.parametric_model()),
                    linear: None,
                })
            })
        }
        SystemSpec::Linear(sys) => pool.map(&cfg.seeds, |&seed| {
            let model = sys.model(seed)?;
            Ok(Scenario {
                seed,
                trajectory: sys.simulate(&model, seed, cfg.len)?,
                gpds: None,
                known: None,
                linear: Some(model),
            })
        }),
        SystemSpec::File {
            model,
            trajectories,
        } => {
            let gpds = GpdsModel::from_json(&fs::read_to_string(model)?)?;
            pool.map(&cfg.seeds, |&seed| {
                let (trajectory, _) = Trajectory::load(&trajectories[seed as usize])?;
                Ok(Scenario {
                    seed,
                    trajectory,
                    gpds: Some(gpds.clone()),
                    known: None,
                    linear: None,
                })
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub nll_x: f64,
    pub mae_x: f64,
    pub nll_z: f64,
}

impl RunMetrics {
    fn is_finite(&self) -> bool {
        self.nll_x.is_finite() && self.mae_x.is_finite() && self.nll_z.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub method: SmootherKind,
    /// `None` on success, otherwise why the run was excluded.
    pub failure: Option<String>,
    pub metrics: Option<RunMetrics>,
    pub diagnostics: Option<EpDiagnostics>,
    /// Largest deviation from the RTS smoother (linear systems only).
    pub rts_deviation: Option<f64>,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub marginals: Vec<Gaussian>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: SmootherKind,
    pub runs: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    /// Over successful runs; `None` when every run failed.
    pub nll_x: Option<MeanSe>,
    pub mae_x: Option<MeanSe>,
    pub nll_z: Option<MeanSe>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub system: String,
    pub config: ExperimentConfig,
    pub methods: Vec<MethodSummary>,
    pub runs: Vec<RunRecord>,
    /// Linear systems only: every run matched the RTS smoother.
    pub exact: Option<bool>,
}

impl MetricsReport {
    pub fn summary(&self, method: SmootherKind) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn runs_of(&self, method: SmootherKind) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(move |r| r.method == method)
    }

    /// 2 if any method failed more often than the configured budget.
    pub fn exit_code(&self) -> i32 {
        let over = self
            .methods
            .iter()
            .any(|m| m.failure_fraction > self.config.max_failure_fraction);
        if over {
            2
        } else {
            0
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text table, one row per method.
    pub fn table(&self) -> String {
        let cell = |m: &Option<MeanSe>| m.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
        let mut s = format!(
            "{:<10} {:>18} {:>18} {:>18} {:>9} {:>9}\n",
            "method", "NLL_x", "MAE_x", "NLL_z", "failures", "time [s]"
        );
        for m in &self.methods {
            s.push_str(&format!(
                "{:<10} {:>18} {:>18} {:>18} {:>5}/{:<3} {:>9.2}\n",
                m.method.name(),
                cell(&m.nll_x),
                cell(&m.mae_x),
                cell(&m.nll_z),
                m.failures,
                m.runs,
                m.wall_time_s
            ));
        }
        if let Some(exact) = self.exact {
            s.push_str(&format!(
                "exact (all runs within {EXACT_TOL:e} of RTS): {exact}\n"
            ));
        }
        s
    }
}

/// Runs one smoother on one scenario. Errors inside the smoother become
/// failed runs; only configuration errors propagate.
fn run_one(scenario: &Scenario, kind: SmootherKind, cfg: &ExperimentConfig) -> Result<RunRecord> {
    let model = scenario.model(kind)?;
    let opts = kind.options(&cfg.ep);
    let traj = &scenario.trajectory;
    let start = Instant::now();
    let mut record = RunRecord {
        seed: scenario.seed,
        method: kind,
        failure: None,
        metrics: None,
        diagnostics: None,
        rts_deviation: None,
        wall_time_s: 0.0,
        marginals: Vec::new(),
    };
    let outcome = ep_smooth_with_truth(
        model,
        &traj.measurements,
        traj.controls.as_ref(),
        &traj.states,
        &opts,
    )
    .and_then(|res| {
        let preds = one_step_predictives(&res.bank, model, opts.method)?;
        let metrics = RunMetrics {
            nll_x: metric_nll_x(&res.marginals, &traj.states)?,
            mae_x: metric_mae_x(&res.marginals, &traj.states)?,
            nll_z: metric_nll_z(&preds, &traj.measurements)?,
        };
        Ok((res, metrics))
    });
    match outcome {
        Ok((res, metrics)) => {
            if let Some(lin) = &scenario.linear {
                let oracle = rts_smooth(lin, &traj.measurements, traj.controls.as_ref())?;
                let mut dev: f64 = 0.0;
                for (a, b) in res.marginals.iter().zip(&oracle.smoothed) {
                    dev = dev.max(moment_distance(a, b)?);
                }
                record.rts_deviation = Some(dev);
            }
            let skipped = res.diagnostics.skipped_fraction();
            if skipped > 0.5 {
                record.failure = Some(format!("{:.0}% of site updates skipped", 100.0 * skipped));
            } else if !metrics.is_finite() {
                record.failure = Some("non-finite metrics".into());
            }
            record.metrics = Some(metrics);
            record.diagnostics = Some(res.diagnostics);
            record.marginals = res.marginals;
        }
        Err(e) => record.failure = Some(e.to_string()),
    }
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(record)
}

fn summarize(method: SmootherKind, runs: &[RunRecord]) -> MethodSummary {
    let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.method == method).collect();
    let ok: Vec<RunMetrics> = mine
        .iter()
        .filter(|r| !r.failed())
        .filter_map(|r| r.metrics)
        .collect();
    let stat = |f: fn(&RunMetrics) -> f64| {
        (!ok.is_empty()).then(|| MeanSe::from_values(&ok.iter().map(f).collect::<Vec<_>>()))
    };
    let failures = mine.iter().filter(|r| r.failed()).count();
    MethodSummary {
        method,
        runs: mine.len(),
        failures,
        failure_fraction: if mine.is_empty() {
            0.0
        } else {
            failures as f64 / mine.len() as f64
        },
        nll_x: stat(|m| m.nll_x),
        mae_x: stat(|m| m.mae_x),
        nll_z: stat(|m| m.nll_z),
        wall_time_s: mine.iter().map(|r| r.wall_time_s).sum(),
    }
}

/// Sequential or thread-pool execution preserving input order.
struct Pool {
    pool: Option<rayon::ThreadPool>,
}

impl Pool {
    fn new(deterministic: bool) -> Result<Self> {
        if deterministic {
            return Ok(Self { pool: None });
        }
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Ok(v) = std::env::var(THREADS_ENV) {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV} must be an integer")))?;
            builder = builder.num_threads(n.max(1));
        }
        let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { pool: Some(pool) })
    }

    fn map<T: Sync, R: Send>(
        &self,
        items: &[T],
        f: impl Fn(&T) -> Result<R> + Sync + Send,
    ) -> Result<Vec<R>> {
        match &self.pool {
            None => items.iter().map(f).collect(),
            Some(p) => p.install(|| items.par_iter().map(f).collect()),
        }
    }
}

/// Generates data, trains models, runs every method on every seed and
/// aggregates the metrics. Failed runs are recorded, not propagated.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let pool = Pool::new(cfg.deterministic)?;
    let scenarios = build_scenarios(cfg, &pool)?;
    let jobs: Vec<(usize, SmootherKind)> = (0..scenarios.len())
        .flat_map(|i| cfg.methods.iter().map(move |m| (i, *m)))
        .collect();
    let runs = pool.map(&jobs, |&(i, kind)| run_one(&scenarios[i], kind, cfg))?;

    let methods = cfg.methods.iter().map(|m| summarize(*m, &runs)).collect();
    let exact = matches!(cfg.system, SystemSpec::Linear(_)).then(|| {
        runs.iter()
            .all(|r| !r.failed() && r.rts_deviation.is_some_and(|d| d < EXACT_TOL))
    });
    let report = MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        system: cfg.system.name().into(),
        config: cfg.clone(),
        methods,
        runs,
        exact,
    };
    if let Some(dir) = &cfg.out_dir {
        write_report(&report, &scenarios, dir)?;
    }
    Ok(report)
}

fn write_report(report: &MetricsReport, scenarios: &[Scenario], dir: &Path) -> Result<()> {
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir)?;
    fs::write(dir.join("report.json"), report.to_json()?)?;
    for run in report.runs.iter().filter(|r| !r.marginals.is_empty()) {
        let scenario = scenarios
            .iter()
            .find(|s| s.seed == run.seed)
            .expect("run belongs to a scenario");
        let path = runs_dir.join(format!("{}_seed{}.csv", run.method.name(), run.seed));
        write_marginals_csv(&path, &run.marginals, Some(&scenario.trajectory.states))?;
    }
    Ok(())
}

/// `t, mean_i, lower_i, upper_i[, x_i]` with 2-sigma bounds per dimension.
pub fn write_marginals_csv(
    path: &Path,
    marginals: &[Gaussian],
    truth: Option<&DMatrix<f64>>,
) -> Result<()> {
    let d = marginals.first().map(|g| g.dim()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    for i in 1..=d {
        header.extend([
            format!("mean_{i}"),
            format!("lower_{i}"),
            format!("upper_{i}"),
        ]);
    }
    if truth.is_some() {
        header.extend((1..=d).map(|i| format!("x_{i}")));
    }
    w.write_record(&header)?;
    for (t, g) in marginals.iter().enumerate() {
        let mut row = vec![(t + 1).to_string()];
        for i in 0..d {
            let (m, sd) = (g.mean()[i], g.cov()[(i, i)].max(0.0).sqrt());
            row.extend(
                [m, m - 2.0 * sd, m + 2.0 * sd]
                    .iter()
                    .map(|v| format!("{v:.17e}")),
            );
        }
        if let Some(x) = truth {
            row.extend(x.row(t).iter().map(|v| format!("{v:.17e}")));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
