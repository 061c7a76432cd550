use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gaussian::{Gaussian, GaussianRecord};

/// Per-run bookkeeping of an EP smoother.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpDiagnostics {
    pub iterations: usize,
    /// Mean over `t` of the moment distance between consecutive sweeps.
    pub convergence: Vec<f64>,
    /// NLL_x after each sweep, when ground truth was supplied.
    pub nll_x: Vec<f64>,
    /// NLL_z after each sweep, when ground truth was supplied.
    pub nll_z: Vec<f64>,
    pub skipped: usize,
    pub attempted: usize,
    pub skipped_per_iteration: Vec<usize>,
    pub converged: bool,
}

impl EpDiagnostics {
    pub fn skipped_fraction(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.skipped as f64 / self.attempted as f64
        }
    }
}

/// JSON export of one run: diagnostics plus the final marginals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    #[serde(flatten)]
    pub diagnostics: EpDiagnostics,
    pub marginals: Vec<GaussianRecord>,
}

impl DiagnosticsRecord {
    pub fn new(diagnostics: &EpDiagnostics, marginals: &[Gaussian]) -> Self {
        Self {
            diagnostics: diagnostics.clone(),
            marginals: marginals.iter().map(GaussianRecord::from).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skipped_fraction_handles_no_attempts() {
        let mut d = EpDiagnostics::default();
        assert_eq!(d.skipped_fraction(), 0.0);
        d.attempted = 8;
        d.skipped = 2;
        assert_eq!(d.skipped_fraction(), 0.25);
    }

    #[test]
    fn record_is_flat_json() {
        let d = EpDiagnostics {
            iterations: 2,
            ..Default::default()
        };
        let rec = DiagnosticsRecord::new(&d, &[Gaussian::scalar(1.0, 2.0).unwrap()]);
        let v: serde_json::Value = serde_json::from_str(&rec.to_json().unwrap()).unwrap();
        assert_eq!(v["iterations"], 2);
        assert_eq!(v["marginals"][0]["cov"][0][0], 2.0);
    }
}
