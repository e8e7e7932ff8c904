use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Command, RunConfig};
use crate::bounds::BoundReport;
use crate::error::{DmlError, Result};
use crate::inference::{BandResult, CdfBandResult, EstimateRow};
use crate::montecarlo::{AuditReport, CoverageReport, KsReport};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateResults {
    pub n: usize,
    pub folds: usize,
    pub targets: Vec<EstimateRow>,
}

/// Output of the dispatched module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Results {
    Estimate(EstimateResults),
    Bands(BandResult),
    CdfBands(CdfBandResult),
    Bound(BoundReport),
    Coverage(CoverageReport),
    Ks(KsReport),
    Audit(AuditReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub command: Command,
    /// Resolved configuration; re-running it reproduces `results`.
    pub config: RunConfig,
    pub spec_hash: String,
    pub results: Results,
    pub warnings: Vec<String>,
    pub timing: Timing,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| DmlError::Evaluation(format!("report does not serialize: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DmlError::Config {
            key: "report".into(),
            message: e.to_string(),
        })
    }

    /// Canonical JSON of the results block alone.
    pub fn results_json(&self) -> Result<String> {
        serde_json::to_string(&self.results).map_err(|e| DmlError::Evaluation(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// A few human-readable lines for standard output.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        match &self.results {
            Results::Estimate(e) => {
                line(format!("n = {}, folds = {}", e.n, e.folds));
                for r in &e.targets {
                    line(format!(
                        "{}: {:.6} (se {:.6})",
                        r.target, r.estimate, r.std_error
                    ));
                }
            }
            Results::Bands(b) => {
                line(format!(
                    "level {} critical value {:.4}",
                    b.level, b.critical_value
                ));
                for r in &b.targets {
                    line(format!(
                        "{}: {:.6} [{:.6}, {:.6}]",
                        r.target, r.estimate, r.lower, r.upper
                    ));
                }
            }
            Results::CdfBands(b) => {
                line(format!(
                    "level {} critical value {:.4}",
                    b.level, b.critical_value
                ));
                for (g, u) in b.grid.iter().enumerate() {
                    line(format!(
                        "F({u}) = {:.4} [{:.4}, {:.4}]",
                        b.estimate[g], b.lower[g], b.upper[g]
                    ));
                }
            }
            Results::Bound(b) => {
                for t in &b.terms {
                    line(format!("{} = {:.6e}", t.name, t.value));
                }
                line(format!("total = {:.6e} ({})", b.total, b.note));
            }
            Results::Coverage(c) => {
                line(format!(
                    "joint coverage {:.4} (MC se {:.4}) over {} replications, {} failed",
                    c.joint_coverage,
                    c.mc_se,
                    c.replications - c.failed,
                    c.failed
                ));
            }
            Results::Ks(k) => {
                line(format!(
                    "KS distance {:.4} over {} replications, {} failed",
                    k.ks,
                    k.sup_t.len(),
                    k.failed
                ));
                if let Some(b) = &k.bound {
                    line(format!(
                        "bound total {:.4e}, consistent: {}",
                        b.total, b.consistent
                    ));
                }
            }
            Results::Audit(a) => {
                line(format!(
                    "max scaled residual {:.3e}, median |D| {:.3e}, {} replications",
                    a.max_residual_scaled,
                    a.median_abs_d,
                    a.rows.len()
                ));
            }
        }
        for w in &self.warnings {
            line(format!("warning: {w}"));
        }
        out
    }
}
