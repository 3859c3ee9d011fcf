//! Pass/fail diagnostics on one configuration. Failures are reported, not
//! returned as errors.

use serde::Serialize;

use crate::density_scheme::{
    check_uniform_bound, duhamel_residual, em_density_evolve_with, lemma21_check,
    time_holder_modulus, SchemeOptions, SchemeTrajectory,
};
use crate::drift::validate_drift;
use crate::error::Result;
use crate::grid::{lp_distance, GridFunction, OnGrid};
use crate::harness::config::SchemeConfig;
use crate::heat_kernel::{kernel_suite, suite_grid, HeatSemigroup};
use crate::particles::{em_particle_simulate, kde_density, GridSampler};

/// Steps used by the lemma checks.
pub const DIAGNOSTIC_STEPS: [f64; 3] = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];

/// Residuals below this are roundoff; refinement cannot shrink them.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: String,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, statistic: f64, threshold: &str, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            statistic,
            threshold: threshold.into(),
            detail,
        }
    }

    fn failed(name: &str, err: &crate::Error) -> Self {
        Self::new(name, false, f64::NAN, "-", err.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl DiagnosticsReport {
    fn from_checks(checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self { checks, passed }
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Runs `f` and folds an error into a failed check.
fn guarded(name: &str, f: impl FnOnce() -> Result<Vec<Check>>) -> Vec<Check> {
    f().unwrap_or_else(|e| vec![Check::failed(name, &e)])
}

fn evolve(cfg: &SchemeConfig, h: f64, extra: &[f64]) -> Result<SchemeTrajectory> {
    em_density_evolve_with(
        &cfg.initial_density()?,
        &cfg.drift_spec(),
        h,
        cfg.horizon,
        &cfg.params()?,
        extra,
        SchemeOptions {
            tail_tol: cfg.tail_tol,
            mass_tol: cfg.mass_tol,
        },
    )
}

pub fn kernel_checks(cfg: &SchemeConfig) -> Result<Vec<Check>> {
    let s = kernel_suite(&cfg.params()?, &suite_grid(cfg.dim)?)?;
    let finite = s.bound_ratios.iter().all(|(_, lo, hi)| lo.is_finite() && hi.is_finite() && *lo > 0.0);
    Ok(vec![
        Check::new(
            "kernel_scaling",
            s.scaling_rel_err < 1e-4,
            s.scaling_rel_err,
            "< 1e-4",
            format!("sup relative error, t in {{1/2, 1, 2}}, |x| <= {}", s.scaling_window),
        ),
        Check::new("kernel_chapman_kolmogorov", s.ck_l1 < 1e-6, s.ck_l1, "< 1e-6", "L1".into()),
        Check::new("kernel_symmetry", s.symmetry < 1e-10, s.symmetry, "< 1e-10", "sup |q(x) - q(-x)|".into()),
        Check::new(
            "kernel_normalization",
            s.normalization_defect < 1e-3,
            s.normalization_defect,
            "< 1e-3",
            "mass defect plus clamped ringing".into(),
        ),
        Check::new(
            "kernel_heat_equation",
            s.heat_residual_rel < 1e-3,
            s.heat_residual_rel,
            "< 1e-3",
            "central difference in t vs fractional Laplacian".into(),
        ),
        Check::new(
            "kernel_two_sided_bound",
            finite && s.bound_drift < 0.1,
            s.bound_drift,
            "< 0.1",
            format!("(t, min, max) of q / rho_alpha: {:?}", s.bound_ratios),
        ),
    ])
}

/// Duhamel residual at `T` for `h = 1/32` with 8 and 16 quadrature cells.
pub fn duhamel_checks(cfg: &SchemeConfig) -> Result<Vec<Check>> {
    let traj = evolve(cfg, DIAGNOSTIC_STEPS[1], &[])?;
    let coarse = duhamel_residual(&traj, cfg.horizon, 8)?;
    let fine = duhamel_residual(&traj, cfg.horizon, 16)?;
    let ratio = if coarse > 0.0 { fine / coarse } else { 0.0 };
    let at_floor = fine < ROUNDOFF_FLOOR;
    let refine_ok = (0.25..=1.0).contains(&ratio) || at_floor;
    Ok(vec![
        Check::new("duhamel_residual", coarse < 1e-2, coarse, "< 1e-2", "L1, 8 cells per step".into()),
        Check::new(
            "duhamel_refinement",
            refine_ok,
            ratio,
            "in [0.25, 1] or residual < 1e-12",
            format!(
                "residual {coarse:e} -> {fine:e}{}",
                if at_floor { " (at roundoff)" } else { "" }
            ),
        ),
    ])
}

/// Uniform-estimate ratio across `h ∈ {1/16, 1/32, 1/64}`.
pub fn uniform_bound_checks(cfg: &SchemeConfig) -> Result<Vec<Check>> {
    let rho_0 = cfg.initial_density()?;
    let params = cfg.params()?;
    let mut ratios = Vec::new();
    let mut linf = 0.0_f64;
    let sg = HeatSemigroup::with_tail_tol(params, &cfg.grid()?, f64::INFINITY)?;
    for &h in &DIAGNOSTIC_STEPS {
        let traj = evolve(cfg, h, &[])?;
        ratios.push(check_uniform_bound(&traj, &rho_0, &params)?.max_ratio);
        for (t, d) in traj.times.iter().zip(&traj.densities).skip(1) {
            let free = sg.convolve_signed(*t, rho_0.values())?;
            let m = free.iter().fold(0.0_f64, |a, v| a.max(*v));
            linf = linf.max(d.max_value() / m);
        }
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let variation = (hi - lo) / lo;
    Ok(vec![
        Check::new(
            "uniform_bound",
            hi.is_finite() && variation < 0.2,
            variation,
            "< 0.2",
            format!("max ratio per h in {{1/16, 1/32, 1/64}}: {ratios:?}"),
        ),
        Check::new(
            "linf_bound",
            linf <= 1.5,
            linf,
            "<= 1.5",
            "max rho^h_t / max q(t) * rho_0".into(),
        ),
    ])
}

/// Time-Hölder tables for `p = 1, 2` at `h = 1/16`.
pub fn holder_checks(cfg: &SchemeConfig) -> Result<Vec<Check>> {
    let traj = evolve(cfg, DIAGNOSTIC_STEPS[0], &[])?;
    let params = cfg.params()?;
    let mut checks = Vec::new();
    for (p, name) in [(1.0, "time_holder_p1"), (2.0, "time_holder_p2")] {
        let rows = time_holder_modulus(&traj, &params, p)?;
        let lo = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let spread = hi / lo;
        checks.push(Check::new(
            name,
            rows.len() >= 2 && hi.is_finite() && spread < 4.0,
            spread,
            "max/min < 4",
            format!(
                "(s, 2s, ratio): {:?}",
                rows.iter().map(|r| (r.s, r.t, r.ratio)).collect::<Vec<_>>()
            ),
        ));
    }
    Ok(checks)
}

/// One-step bound ratio at `s = T/2 + θh`, maximized over θ, compared
/// between `h = 1/16` and `h = 1/32`.
pub fn lemma21_checks(cfg: &SchemeConfig) -> Result<Vec<Check>> {
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let l = grid.half_width();
    let k = std::f64::consts::PI * (l / 2.0).round().max(1.0) / l;
    let f1 = GridFunction::from_fn(grid, |_| 1.0);
    let f2 = GridFunction::from_fn(grid, |x| {
        if grid.dim() == 1 {
            (k * x[0]).cos()
        } else {
            (k * x[0]).cos() * (k * x[1]).cos()
        }
    });
    let mut stats = Vec::new();
    for &h in &DIAGNOSTIC_STEPS[..2] {
        let times: Vec<f64> = [0.25, 0.5, 0.75, 0.999]
            .iter()
            .map(|th| 0.5 * cfg.horizon + th * h)
            .collect();
        let traj = evolve(cfg, h, &times)?;
        let mut best = 0.0_f64;
        for &s in &times {
            best = best.max(lemma21_check(&f1, &f2, &traj, s, &params)?.ratio);
        }
        stats.push(best);
    }
    let ratio = stats[0] / stats[1];
    Ok(vec![Check::new(
        "lemma21_h_halving",
        (0.5..=4.0).contains(&ratio),
        ratio,
        "in [0.5, 4]",
        format!("lhs/rhs at h = 1/16, 1/32: {stats:?}"),
    )])
}

/// Mass and clamping invariants at the smallest ladder step.
pub fn mass_checks(cfg: &SchemeConfig) -> Result<Vec<Check>> {
    let traj = evolve(cfg, cfg.h_min(), &[])?;
    let deficit = traj
        .densities
        .iter()
        .map(|d| (1.0 - d.mass()).abs())
        .fold(0.0, f64::max);
    Ok(vec![
        Check::new("mass", deficit <= cfg.mass_tol, deficit, "<= mass_tol", "max |1 - mass|".into()),
        Check::new(
            "clamped_mass",
            traj.clamped_mass < 1e-5,
            traj.clamped_mass,
            "< 1e-5",
            format!("tail mass outside L/2: {:e}", traj.max_tail_mass),
        ),
    ])
}

/// Drift guard, kernel suite and lemma diagnostics.
pub fn run_diagnostics(cfg: &SchemeConfig) -> DiagnosticsReport {
    let mut checks = Vec::new();
    let drift_ok = match validate_drift(&cfg.drift_spec(), 4096) {
        Ok(r) => {
            checks.push(Check::new(
                "drift_hypothesis",
                true,
                r.max_abs.max(r.max_lipschitz),
                "<= kappa",
                format!("max |b| {:e}, max Lipschitz quotient {:e}", r.max_abs, r.max_lipschitz),
            ));
            true
        }
        Err(e) => {
            checks.push(Check::failed("drift_hypothesis", &e));
            false
        }
    };
    checks.extend(guarded("kernel_suite", || kernel_checks(cfg)));
    if drift_ok {
        checks.extend(guarded("mass", || mass_checks(cfg)));
        checks.extend(guarded("duhamel", || duhamel_checks(cfg)));
        checks.extend(guarded("uniform_bound", || uniform_bound_checks(cfg)));
        checks.extend(guarded("time_holder", || holder_checks(cfg)));
        checks.extend(guarded("lemma21", || lemma21_checks(cfg)));
    }
    DiagnosticsReport::from_checks(checks)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub count: usize,
    pub h: f64,
    /// `‖KDE - ρ^h_T‖_1` at `count` and at `count / 10` particles.
    pub gap: f64,
    pub gap_small: f64,
    pub budget: f64,
    pub decreased: bool,
    pub max_wrap_fraction: f64,
    pub passed: bool,
}

/// Particle KDE against the deterministic scheme at `T`.
pub fn cross_validate_mc(cfg: &SchemeConfig, count: usize) -> Result<McReport> {
    if count < 10_000 {
        return Err(crate::Error::InvalidParameter(format!(
            "cross-validation needs at least 10^4 particles, got {count}"
        )));
    }
    let spec = cfg.particle_spec();
    let rho_0 = cfg.initial_density()?;
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let drift = cfg.drift_spec();
    let traj = evolve(cfg, spec.h, &[])?;
    let (_, exact) = traj.last();
    let sampler = GridSampler::new(&rho_0)?;
    let kde = spec.kde();
    let gap_at = |n: usize| -> Result<(f64, f64)> {
        let run = em_particle_simulate(n, &sampler, &drift, spec.h, cfg.horizon, &params, &kde, &grid, cfg.seed)?;
        let est = kde_density(run.last(), &kde, &grid)?;
        Ok((lp_distance(&est, exact, 1.0)?, run.max_wrap_fraction))
    };
    let (gap, wrap) = gap_at(count)?;
    let (gap_small, _) = gap_at(count / 10)?;
    let budget = if drift.is_zero() { 0.03 } else { 0.05 };
    let decreased = gap < gap_small;
    Ok(McReport {
        count,
        h: spec.h,
        gap,
        gap_small,
        budget,
        decreased,
        max_wrap_fraction: wrap,
        passed: gap < budget && decreased,
    })
}
