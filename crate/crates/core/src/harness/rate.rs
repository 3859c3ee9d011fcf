//! Convergence-rate study: `e(h) = ‖ρ_T - ρ^h_T‖_1` along a step ladder and
//! a least-squares fit of `log e` against `log h`.

use rayon::prelude::*;
use serde::Serialize;

use crate::density_scheme::{em_density_evolve_with, SchemeOptions};
use crate::error::{Error, Result};
use crate::fpe_solver::fpe_solve_with;
use crate::grid::{lp_distance, GridDensity};
use crate::harness::config::{ReferenceSpec, SchemeConfig};

/// Errors at or below this are treated as exact.
pub const NOISE_FLOOR: f64 = 1e-12;

/// Margin below the theoretical slope accepted by the study.
pub const SLOPE_MARGIN: f64 = 0.15;

pub const MIN_R_SQUARED: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ln e` on `ln h`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 points, got {}", pairs.len())));
    }
    if let Some((h, e)) = pairs.iter().find(|(h, e)| !(*e > NOISE_FLOOR) || !(*h > 0.0)) {
        return Err(Error::DegenerateFit(format!(
            "error {e:e} at h = {h} is at or below the noise floor {NOISE_FLOOR:e}"
        )));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|(h, _)| h.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, e)| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("all steps are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let sst: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    let stderr = if pairs.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit {
        slope,
        intercept,
        stderr,
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub h: f64,
    pub l1_error: f64,
    pub clamped_mass: f64,
    pub max_tail_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateStudyResult {
    pub alpha: f64,
    pub theoretical_slope: f64,
    pub reference_kind: String,
    /// `h_ref` or the FPE `dt`.
    pub reference_step: f64,
    /// Distance between the reference and the same reference at twice the
    /// step.
    pub reference_resolution: f64,
    pub points: Vec<RatePoint>,
    pub fit: Option<RateFit>,
    /// Reason the fit was not reported.
    pub degenerate: Option<String>,
    /// `e(h)` strictly decreasing along the ladder.
    pub monotone: bool,
    pub passed: bool,
}

impl RateStudyResult {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }
}

fn scheme_density(cfg: &SchemeConfig, rho_0: &GridDensity, h: f64) -> Result<(GridDensity, f64, f64)> {
    let opts = SchemeOptions {
        tail_tol: cfg.tail_tol,
        mass_tol: cfg.mass_tol,
    };
    let traj = em_density_evolve_with(
        rho_0,
        &cfg.drift_spec(),
        h,
        cfg.horizon,
        &cfg.params()?,
        &[],
        opts,
    )?;
    let (_, last) = traj.last();
    Ok((last.clone(), traj.clamped_mass, traj.max_tail_mass))
}

fn fpe_density(cfg: &SchemeConfig, rho_0: &GridDensity, dt: f64) -> Result<GridDensity> {
    let traj = fpe_solve_with(
        rho_0,
        &cfg.drift_spec(),
        &cfg.params()?,
        cfg.horizon,
        &cfg.fpe_config(dt),
        cfg.tail_tol,
    )?;
    Ok(traj.last().clone())
}

/// Computes the reference, the per-step errors and the fit.
pub fn run_rate_study(cfg: &SchemeConfig) -> Result<RateStudyResult> {
    cfg.validate()?;
    if cfg.h_ladder.len() < 3 {
        return Err(Error::Config(format!(
            "a slope fit needs at least 3 steps, got {}",
            cfg.h_ladder.len()
        )));
    }
    let params = cfg.params()?;
    let rho_0 = cfg.initial_density()?;
    let h_min = cfg.h_min();

    let (reference, reference_step, reference_resolution) = match cfg.reference {
        ReferenceSpec::SelfConvergence { divisor } => {
            if divisor < 8 {
                return Err(Error::ReferenceTooCoarse(format!(
                    "divisor {divisor} < 8: reference step must be at least 8x finer than h_min"
                )));
            }
            let h_ref = h_min / f64::from(divisor);
            let (fine, coarse) = rayon::join(
                || scheme_density(cfg, &rho_0, h_ref),
                || scheme_density(cfg, &rho_0, 2.0 * h_ref),
            );
            let (fine, _, _) = fine?;
            let resolution = lp_distance(&fine, &coarse?.0, 1.0)?;
            (fine, h_ref, resolution)
        }
        ReferenceSpec::Fpe { dt, .. } => {
            let limit = (h_min / 8.0).min(h_min * h_min).min(1e-3);
            if dt > limit {
                return Err(Error::ReferenceTooCoarse(format!(
                    "FPE dt = {dt} exceeds min(h_min/8, h_min^2, 1e-3) = {limit}"
                )));
            }
            let (fine, coarse) = rayon::join(
                || fpe_density(cfg, &rho_0, dt),
                || fpe_density(cfg, &rho_0, 2.0 * dt),
            );
            let fine = fine?;
            let resolution = lp_distance(&fine, &coarse?, 1.0)?;
            (fine, dt, resolution)
        }
    };

    let points: Vec<RatePoint> = cfg
        .h_ladder
        .par_iter()
        .map(|&h| {
            let (density, clamped_mass, max_tail_mass) = scheme_density(cfg, &rho_0, h)?;
            Ok(RatePoint {
                h,
                l1_error: lp_distance(&density, &reference, 1.0)?,
                clamped_mass,
                max_tail_mass,
            })
        })
        .collect::<Result<_>>()?;

    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.h, p.l1_error)).collect();
    let (fit, degenerate) = match fit_rate(&pairs) {
        Ok(f) => (Some(f), None),
        Err(Error::DegenerateFit(reason)) => (None, Some(reason)),
        Err(e) => return Err(e),
    };
    let monotone = points.windows(2).all(|w| w[1].l1_error < w[0].l1_error);
    let theoretical_slope = params.rate_exponent();
    let passed = fit.is_some_and(|f| {
        f.slope >= theoretical_slope - SLOPE_MARGIN && f.r_squared >= MIN_R_SQUARED
    });
    Ok(RateStudyResult {
        alpha: cfg.alpha,
        theoretical_slope,
        reference_kind: cfg.reference.kind().to_string(),
        reference_step,
        reference_resolution,
        points,
        fit,
        degenerate,
        monotone,
        passed,
    })
}

/// Rate studies of one configuration at several `α`, in input order.
pub fn run_alpha_sweep(cfg: &SchemeConfig, alphas: &[f64]) -> Result<Vec<RateStudyResult>> {
    alphas
        .par_iter()
        .map(|&alpha| {
            let mut c = cfg.clone();
            c.alpha = alpha;
            run_rate_study(&c)
        })
        .collect()
}

/// True when fitted slopes exist and strictly increase with `α` (inputs
/// sorted by `α`).
pub fn slopes_increasing(results: &[RateStudyResult]) -> bool {
    let mut sorted: Vec<&RateStudyResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let slopes: Option<Vec<f64>> = sorted.iter().map(|r| r.slope()).collect();
    slopes.is_some_and(|s| s.windows(2).all(|w| w[1] > w[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ladder() -> Vec<f64> {
        (4..=9).map(|k| 2f64.powi(-k)).collect()
    }

    #[test]
    fn exact_power_laws() {
        let f = fit_rate(&ladder().iter().map(|&h| (h, h)).collect::<Vec<_>>()).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);

        let f = fit_rate(&ladder().iter().map(|&h| (h, 3.0 * h.powf(1.0 / 3.0))).collect::<Vec<_>>()).unwrap();
        assert!((f.slope - 1.0 / 3.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.stderr < 1e-12);

        let f = fit_rate(&ladder().iter().map(|&h| (h, 0.2)).collect::<Vec<_>>()).unwrap();
        assert!(f.slope.abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_rate(&[(0.1, 1.0), (0.05, 0.5)]), Err(Error::DegenerateFit(_))));
        assert!(matches!(
            fit_rate(&[(0.1, 1.0), (0.05, 1e-13), (0.025, 0.1)]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_rate(&[(0.1, 1.0), (0.1, 0.5), (0.1, 0.1)]),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn ordering_helper() {
        let mk = |alpha: f64, slope: f64| RateStudyResult {
            alpha,
            theoretical_slope: 0.0,
            reference_kind: "self_convergence".into(),
            reference_step: 0.0,
            reference_resolution: 0.0,
            points: vec![],
            fit: Some(RateFit {
                slope,
                intercept: 0.0,
                stderr: 0.0,
                r_squared: 1.0,
            }),
            degenerate: None,
            monotone: true,
            passed: true,
        };
        assert!(slopes_increasing(&[mk(1.8, 0.5), mk(1.2, 0.2), mk(1.5, 0.3)]));
        assert!(!slopes_increasing(&[mk(1.2, 0.2), mk(1.5, 0.2)]));
    }

    proptest! {
        #[test]
        fn recovers_power_laws(c in 0.01f64..10.0, p in -1.0f64..2.0) {
            let pairs: Vec<(f64, f64)> = ladder().iter().map(|&h| (h, c * h.powf(p))).collect();
            prop_assume!(pairs.iter().all(|(_, e)| *e > 1e-10));
            let f = fit_rate(&pairs).unwrap();
            prop_assert!((f.slope - p).abs() < 1e-9);
            prop_assert!((f.intercept - c.ln()).abs() < 1e-8);
        }
    }
}
