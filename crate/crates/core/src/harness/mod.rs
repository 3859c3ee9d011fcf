//! Experiment orchestration: configuration, rate studies, diagnostics and
//! result files.

pub mod config;
pub mod diagnostics;
pub mod rate;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
pub use config::{ParticleSpec, ReferenceSpec, Rho0Spec, SchemeConfig};
pub use diagnostics::{cross_validate_mc, run_diagnostics, Check, DiagnosticsReport, McReport};
pub use rate::{fit_rate, run_alpha_sweep, run_rate_study, slopes_increasing, RateFit, RateStudyResult};

pub const SCHEMA: &str = "ddsde.manifest";
pub const SCHEMA_VERSION: u32 = 1;

/// Top-level result file. Contains no timestamps or host data, so identical
/// inputs give identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<T: Serialize> {
    pub schema: &'static str,
    pub schema_version: u32,
    pub version: &'static str,
    pub command: String,
    pub config: SchemeConfig,
    pub passed: bool,
    pub result: T,
}

impl<T: Serialize> Manifest<T> {
    pub fn new(command: &str, config: SchemeConfig, passed: bool, result: T) -> Self {
        Self {
            schema: SCHEMA,
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config,
            passed,
            result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Per-step error table with columns
/// `alpha,h,l1_error,reference_kind,grid_n,domain_L,seed`.
pub fn write_rate_csv<W: Write>(mut w: W, cfg: &SchemeConfig, results: &[RateStudyResult]) -> Result<()> {
    writeln!(w, "alpha,h,l1_error,reference_kind,grid_n,domain_L,seed")?;
    for r in results {
        for p in &r.points {
            writeln!(
                w,
                "{},{},{:e},{},{},{},{}",
                r.alpha, p.h, p.l1_error, r.reference_kind, cfg.points, cfg.half_width, cfg.seed
            )?;
        }
    }
    Ok(())
}
