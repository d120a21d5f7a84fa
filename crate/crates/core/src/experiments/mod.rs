//! Configured Monte Carlo experiments, their statistics and result files.
//!
//! Samples run on a local rayon pool sized by `HOMOGLAT_THREADS`. Every
//! sample draws from its own lineage stream and results are reduced in
//! sample-index order, so output files do not depend on the worker count.

pub mod check;
pub mod config;
mod runners;
pub mod stats;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{ExperimentConfig, ExperimentKind, TorusRule, SCHEMA};
pub use runners::{
    model_comparison, run_caccioppoli, run_green_decay, run_identity_check, run_moment_growth,
    run_spectral_gap, run_susceptibility_battery, run_variance_scaling, slope_band,
    sum_green_sq_scaling, ModelComparison,
};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "HOMOGLAT_THREADS";

/// Runs `f` on a rayon pool sized by `HOMOGLAT_THREADS` (all cores if unset).
pub fn with_workers<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// A rectangular result table with string cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Formats a float for tables: shortest round-trip representation.
pub fn cell(v: f64) -> String {
    format!("{v:?}")
}

/// Everything one experiment run produces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutput {
    pub experiment: String,
    pub config: serde_json::Value,
    pub table: Table,
    pub summary: serde_json::Value,
    pub warnings: Vec<String>,
    /// `None` when the run carries no pass/fail criterion.
    pub passed: Option<bool>,
}

impl RunOutput {
    pub fn new(cfg: &ExperimentConfig, table: Table, summary: serde_json::Value, passed: Option<bool>) -> Self {
        Self {
            experiment: cfg.experiment.name().to_string(),
            config: serde_json::to_value(cfg).expect("config serializes"),
            table,
            summary,
            warnings: cfg.torus_violations(),
            passed,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("output serializes");
        s.push('\n');
        s
    }

    /// Writes `<out>.csv` and `<out>.json`.
    pub fn write(&self, cfg: &ExperimentConfig) -> Result<()> {
        let csv = cfg.csv_path();
        if let Some(dir) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&csv, self.table.to_csv())?;
        std::fs::write(cfg.json_path(), self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Runs the configured experiment on the worker pool.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    with_workers(|| match cfg.experiment {
        ExperimentKind::VarianceScaling => run_variance_scaling(cfg),
        ExperimentKind::GreenDecay => run_green_decay(cfg),
        ExperimentKind::MomentGrowth => run_moment_growth(cfg),
        ExperimentKind::IdentityCheck => run_identity_check(cfg),
        ExperimentKind::SusceptibilityBattery => run_susceptibility_battery(cfg),
        ExperimentKind::SpectralGap => run_spectral_gap(cfg),
        ExperimentKind::Caccioppoli => run_caccioppoli(cfg),
    })?
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), cell(0.5)]);
        assert_eq!(t.to_csv(), "a,b\n1,0.5\n");
        assert_eq!(cell(1e-20), "1e-20");
    }
}
