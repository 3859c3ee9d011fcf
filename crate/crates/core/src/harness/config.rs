//! Experiment configuration. TOML, flat keys, unknown keys rejected:
//!
//! ```toml
//! alpha = 1.5
//! dim = 1
//! half_width = 10.0
//! points = 512
//! T = 0.5
//! h_ladder = [0.0625, 0.03125, 0.015625]
//! seed = 7
//! drift = { kind = "nemytskii_sat", kappa = 1.0, direction = "sine" }
//! rho0 = { kind = "gaussian", sigma = 0.5 }
//! reference = { kind = "self_convergence", divisor = 8 }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::drift::{BuiltinDrift, Direction, DriftSpec};
use crate::error::{Error, Result};
use crate::fpe_solver::{FpeConfig, Splitting, Transport};
use crate::grid::{Grid, GridDensity, DEFAULT_MASS_TOL};
use crate::heat_kernel::{HeatSemigroup, DEFAULT_TAIL_TOL};
use crate::particles::{Bandwidth, KdeConfig, KdeKernel};
use crate::stable_noise::StableParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rho0Spec {
    /// Centered Gaussian with standard deviation `sigma` per axis.
    Gaussian { sigma: f64 },
    /// The stable kernel `q_α(t)` itself.
    Stable { t: f64 },
    /// `(1 - r²/w²)^4` on `r < w`.
    UniformBump { width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Scheme density at `h_min / divisor`.
    SelfConvergence { divisor: u32 },
    /// Fokker–Planck solution at time step `dt`.
    Fpe {
        dt: f64,
        #[serde(default = "default_splitting")]
        splitting: Splitting,
        #[serde(default = "default_transport")]
        transport: Transport,
    },
}

impl ReferenceSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ReferenceSpec::SelfConvergence { .. } => "self_convergence",
            ReferenceSpec::Fpe { .. } => "fpe",
        }
    }
}

fn default_splitting() -> Splitting {
    Splitting::Strang
}

fn default_transport() -> Transport {
    Transport::CenteredLimited
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec::SelfConvergence { divisor: 8 }
    }
}

/// Particle cross-check settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub count: usize,
    pub h: f64,
    #[serde(default = "default_kernel")]
    pub kernel: KdeKernel,
    /// Fixed bandwidth; Silverman's rule when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

fn default_kernel() -> KdeKernel {
    KdeKernel::Gaussian
}

impl ParticleSpec {
    pub fn kde(&self) -> KdeConfig {
        KdeConfig {
            kernel: self.kernel,
            bandwidth: self.bandwidth.map_or(Bandwidth::Auto, Bandwidth::Fixed),
        }
    }
}

impl Default for ParticleSpec {
    fn default() -> Self {
        Self {
            count: 100_000,
            h: 1.0 / 32.0,
            kernel: KdeKernel::Gaussian,
            bandwidth: None,
        }
    }
}

fn default_dim() -> usize {
    1
}

fn default_tail_tol() -> f64 {
    DEFAULT_TAIL_TOL
}

fn default_mass_tol() -> f64 {
    DEFAULT_MASS_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub alpha: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub drift: BuiltinDrift,
    pub rho0: Rho0Spec,
    pub half_width: f64,
    pub points: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub h_ladder: Vec<f64>,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "default_mass_tol")]
    pub mass_tol: f64,
    #[serde(default)]
    pub particles: Option<ParticleSpec>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl SchemeConfig {
    /// The reference problem: saturated Nemytskii drift along `sin x`,
    /// `α = 1.5`, `d = 1`, `L = 10`, `n = 512`, `T = 0.5`, Gaussian `ρ_0`
    /// with `σ = 0.5`, `h = 2^-4 ... 2^-9`.
    pub fn reference() -> Self {
        Self {
            alpha: 1.5,
            dim: 1,
            drift: BuiltinDrift::NemytskiiSat {
                kappa: 1.0,
                direction: Direction::Sine,
            },
            rho0: Rho0Spec::Gaussian { sigma: 0.5 },
            half_width: 10.0,
            points: 512,
            horizon: 0.5,
            h_ladder: (4..=9).map(|k| 2f64.powi(-k)).collect(),
            reference: ReferenceSpec::default(),
            seed: 0,
            tail_tol: DEFAULT_TAIL_TOL,
            mass_tol: DEFAULT_MASS_TOL,
            particles: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        StableParams::new(self.alpha, self.dim).map_err(|e| config_error(e.to_string()))?;
        Grid::new(self.dim, self.half_width, self.points).map_err(|e| config_error(e.to_string()))?;
        if self.h_ladder.is_empty() {
            return Err(config_error("h_ladder is empty"));
        }
        if let Some(h) = self.h_ladder.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
            return Err(config_error(format!("every h must lie in (0, 1), got {h}")));
        }
        if self.h_ladder.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(config_error("h_ladder must be strictly decreasing"));
        }
        if !(self.horizon > self.h_ladder[0]) || !self.horizon.is_finite() {
            return Err(config_error(format!(
                "T = {} must exceed the largest step {}",
                self.horizon, self.h_ladder[0]
            )));
        }
        if !(self.tail_tol > 0.0) || !(self.mass_tol > 0.0) {
            return Err(config_error("tail_tol and mass_tol must be positive"));
        }
        let kappa = self.drift.kappa();
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(config_error(format!("drift kappa must be finite and nonnegative, got {kappa}")));
        }
        match self.rho0 {
            Rho0Spec::Gaussian { sigma } if !(sigma > 0.0) => {
                return Err(config_error(format!("rho0 sigma must be positive, got {sigma}")))
            }
            Rho0Spec::Stable { t } if !(t > 0.0) => {
                return Err(config_error(format!("rho0 t must be positive, got {t}")))
            }
            Rho0Spec::UniformBump { width } if !(width > 0.0) => {
                return Err(config_error(format!("rho0 width must be positive, got {width}")))
            }
            _ => {}
        }
        match self.reference {
            ReferenceSpec::SelfConvergence { divisor } if divisor < 2 => {
                return Err(config_error("reference divisor must be at least 2"))
            }
            ReferenceSpec::Fpe { dt, .. } if !(dt > 0.0) => {
                return Err(config_error(format!("reference dt must be positive, got {dt}")))
            }
            _ => {}
        }
        if let Some(p) = &self.particles {
            if p.count == 0 || !(p.h > 0.0 && p.h < 1.0) {
                return Err(config_error("particles need count >= 1 and h in (0, 1)"));
            }
            if let Some(b) = p.bandwidth {
                if !(b > 0.0) {
                    return Err(config_error(format!("bandwidth must be positive, got {b}")));
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<StableParams> {
        StableParams::new(self.alpha, self.dim)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.half_width, self.points)
    }

    pub fn drift_spec(&self) -> DriftSpec {
        self.drift.clone().into_spec(self.dim)
    }

    pub fn h_min(&self) -> f64 {
        *self.h_ladder.last().expect("validated nonempty")
    }

    pub fn particle_spec(&self) -> ParticleSpec {
        self.particles.unwrap_or_default()
    }

    pub fn initial_density(&self) -> Result<GridDensity> {
        let grid = self.grid()?;
        match self.rho0 {
            Rho0Spec::Gaussian { sigma } => GridDensity::gaussian(grid, sigma, [0.0, 0.0]),
            Rho0Spec::UniformBump { width } => GridDensity::bump(grid, width),
            Rho0Spec::Stable { t } => {
                let sg = HeatSemigroup::with_tail_tol(self.params()?, &grid, self.tail_tol)?;
                Ok(sg.kernel(t)?.density)
            }
        }
    }

    pub fn fpe_config(&self, dt: f64) -> FpeConfig {
        match self.reference {
            ReferenceSpec::Fpe { splitting, transport, .. } => FpeConfig { dt, splitting, transport },
            ReferenceSpec::SelfConvergence { .. } => FpeConfig::new(dt),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
alpha = 1.5
dim = 1
half_width = 10.0
points = 512
T = 0.5
h_ladder = [0.0625, 0.03125, 0.015625]
seed = 7
drift = { kind = "nemytskii_sat", kappa = 1.0, direction = "sine" }
rho0 = { kind = "gaussian", sigma = 0.5 }
reference = { kind = "self_convergence", divisor = 8 }
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = SchemeConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.h_ladder.len(), 3);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.tail_tol, DEFAULT_TAIL_TOL);
        let again = SchemeConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
        SchemeConfig::reference().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_errors() {
        let typo = SAMPLE.replace("seed = 7", "sede = 7");
        assert!(matches!(SchemeConfig::from_toml_str(&typo), Err(Error::Config(_))));
        let nested = SAMPLE.replace("sigma = 0.5", "sigma = 0.5, mu = 1.0");
        assert!(SchemeConfig::from_toml_str(&nested).is_err());
    }

    #[test]
    fn invalid_values_are_errors() {
        for (from, to) in [
            ("alpha = 1.5", "alpha = 2.5"),
            ("points = 512", "points = 511"),
            ("T = 0.5", "T = 0.05"),
            ("[0.0625, 0.03125, 0.015625]", "[0.03125, 0.0625, 0.015625]"),
            ("[0.0625, 0.03125, 0.015625]", "[1.5, 0.03125, 0.015625]"),
            ("divisor = 8", "divisor = 1"),
        ] {
            let bad = SAMPLE.replace(from, to);
            assert!(
                matches!(SchemeConfig::from_toml_str(&bad), Err(Error::Config(_))),
                "{to}"
            );
        }
    }

    #[test]
    fn fpe_reference_defaults() {
        let cfg = SAMPLE.replace(
            r#"reference = { kind = "self_convergence", divisor = 8 }"#,
            r#"reference = { kind = "fpe", dt = 1e-4 }"#,
        );
        let cfg = SchemeConfig::from_toml_str(&cfg).unwrap();
        assert_eq!(cfg.fpe_config(1e-4), FpeConfig::new(1e-4));
    }
}
