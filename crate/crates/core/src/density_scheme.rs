//! Deterministic evolution of the Euler–Maruyama scheme density `ρ^h`.
//!
//! One step from `kh` to `(k+1)h` freezes the position and the density value
//! at `kh`, moves every particle by `D_k(x) = ∫_{kh}^{(k+1)h} b(s, x, ρ^h_{kh}(x)) ds`
//! and adds an independent stable increment, so
//!
//! ```text
//! ρ^h_{(k+1)h}(y) = ∫ q_α(h, y - x - D_k(x)) ρ^h_{kh}(x) dx.
//! ```
//!
//! The fast path redistributes each cell's mass linearly onto the cells
//! bracketing `x + D_k(x)` and convolves with `q_α(h)` spectrally. The direct
//! path evaluates the integral above as an `O(n^{2d})` sum against the
//! piecewise-linear interpolant of the periodic kernel table, which is the
//! same spatial discretization computed independently. The first step
//! `[0, h]` carries no drift.

use rayon::prelude::*;
use serde::Serialize;

use crate::drift::{displacement_over, pi_h, step_index, DVec, DriftSpec};
use crate::error::{Error, Result};
use crate::grid::{lp_distance, lp_norm, Grid, GridDensity, GridFunction, OnGrid, DEFAULT_MASS_TOL};
use crate::heat_kernel::{HeatSemigroup, DEFAULT_TAIL_TOL};
use crate::spectral::interpolate;
use crate::stable_noise::StableParams;

/// Numerical guards for the density scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemeOptions {
    /// Ceiling on the wrapped kernel tail (see [`HeatSemigroup::check_domain`]).
    pub tail_tol: f64,
    /// Per-step ceiling on clamped negative mass.
    pub mass_tol: f64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            tail_tol: DEFAULT_TAIL_TOL,
            mass_tol: DEFAULT_MASS_TOL,
        }
    }
}

/// Densities of the scheme at a set of output times.
#[derive(Debug, Clone)]
pub struct SchemeTrajectory {
    pub params: StableParams,
    pub drift: DriftSpec,
    pub h: f64,
    /// Strictly increasing; `times[0] = 0` holds `ρ_0`.
    pub times: Vec<f64>,
    pub densities: Vec<GridDensity>,
    /// Total negative mass clamped over the run.
    pub clamped_mass: f64,
    /// Largest mass outside `[-L/2, L/2]^d` among stored densities.
    pub max_tail_mass: f64,
}

impl SchemeTrajectory {
    pub fn grid(&self) -> &Grid {
        self.densities[0].grid()
    }

    pub fn initial(&self) -> &GridDensity {
        &self.densities[0]
    }

    pub fn last(&self) -> (f64, &GridDensity) {
        let i = self.times.len() - 1;
        (self.times[i], &self.densities[i])
    }

    /// Stored density at time `t` (matched to `1e-9 h`).
    pub fn at(&self, t: f64) -> Option<&GridDensity> {
        let tol = 1e-9 * self.h;
        self.times
            .iter()
            .position(|s| (s - t).abs() <= tol)
            .map(|i| &self.densities[i])
    }

    /// Stored density at the grid time `jh`.
    pub fn at_step(&self, j: usize) -> Option<&GridDensity> {
        self.at(j as f64 * self.h)
    }

    fn require(&self, t: f64) -> Result<&GridDensity> {
        self.at(t).ok_or_else(|| {
            Error::InvalidParameter(format!("time {t} is not stored in the trajectory"))
        })
    }
}

/// Mass-conservative linear redistribution of `values` along per-cell
/// displacements (linear in 1-d, bilinear in 2-d), periodic wrap.
pub fn push_forward(grid: &Grid, values: &[f64], displacement: &[DVec]) -> Vec<f64> {
    let n = grid.points_per_axis() as i64;
    let dx = grid.spacing();
    let mut out = vec![0.0; grid.len()];
    let split = |d: f64| -> (i64, f64) {
        let s = d / dx;
        let m = s.floor();
        (m as i64, s - m)
    };
    let wrap = |i: i64| i.rem_euclid(n) as usize;
    for (k, (&v, d)) in values.iter().zip(displacement).enumerate() {
        if v == 0.0 {
            continue;
        }
        let [i, j] = grid.unflatten(k);
        let (m0, f0) = split(d[0]);
        let i0 = wrap(i as i64 + m0);
        let i1 = wrap(i as i64 + m0 + 1);
        if grid.dim() == 1 {
            out[i0] += (1.0 - f0) * v;
            out[i1] += f0 * v;
        } else {
            let (m1, f1) = split(d[1]);
            let j0 = wrap(j as i64 + m1);
            let j1 = wrap(j as i64 + m1 + 1);
            out[grid.flatten([i0, j0])] += (1.0 - f0) * (1.0 - f1) * v;
            out[grid.flatten([i1, j0])] += f0 * (1.0 - f1) * v;
            out[grid.flatten([i0, j1])] += (1.0 - f0) * f1 * v;
            out[grid.flatten([i1, j1])] += f0 * f1 * v;
        }
    }
    out
}

/// Time derivative of [`push_forward`] when every displacement moves with
/// velocity `velocity[i]`: the mass flux `values[i] * velocity[i]` leaves the
/// lower bracketing cell and enters the upper one.
pub fn push_forward_rate(grid: &Grid, values: &[f64], displacement: &[DVec], velocity: &[DVec]) -> Vec<f64> {
    let n = grid.points_per_axis() as i64;
    let dx = grid.spacing();
    let mut out = vec![0.0; grid.len()];
    let split = |d: f64| -> (i64, f64) {
        let s = d / dx;
        let m = s.floor();
        (m as i64, s - m)
    };
    let wrap = |i: i64| i.rem_euclid(n) as usize;
    for (k, &v) in values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let [i, j] = grid.unflatten(k);
        let d = displacement[k];
        let r0 = v * velocity[k][0] / dx;
        let (m0, f0) = split(d[0]);
        let i0 = wrap(i as i64 + m0);
        let i1 = wrap(i as i64 + m0 + 1);
        if grid.dim() == 1 {
            out[i0] -= r0;
            out[i1] += r0;
        } else {
            let r1 = v * velocity[k][1] / dx;
            let (m1, f1) = split(d[1]);
            let j0 = wrap(j as i64 + m1);
            let j1 = wrap(j as i64 + m1 + 1);
            out[grid.flatten([i0, j0])] += -r0 * (1.0 - f1) - (1.0 - f0) * r1;
            out[grid.flatten([i1, j0])] += r0 * (1.0 - f1) - f0 * r1;
            out[grid.flatten([i0, j1])] += -r0 * f1 + (1.0 - f0) * r1;
            out[grid.flatten([i1, j1])] += r0 * f1 + f0 * r1;
        }
    }
    out
}

/// Single-step engine reusing FFT plans across steps.
#[derive(Debug, Clone)]
pub struct DensityStepper {
    semigroup: HeatSemigroup,
    drift: DriftSpec,
    h: f64,
    opts: SchemeOptions,
}

impl DensityStepper {
    pub fn new(params: StableParams, grid: &Grid, drift: DriftSpec, h: f64, opts: SchemeOptions) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::InvalidParameter(format!("h must lie in (0, 1), got {h}")));
        }
        if drift.dim() != params.dim() {
            return Err(Error::InvalidParameter(format!(
                "drift dimension {} vs process dimension {}",
                drift.dim(),
                params.dim()
            )));
        }
        Ok(Self {
            semigroup: HeatSemigroup::with_tail_tol(params, grid, opts.tail_tol)?,
            drift,
            h,
            opts,
        })
    }

    pub fn semigroup(&self) -> &HeatSemigroup {
        &self.semigroup
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Per-cell displacement `∫_a^b b(s, x_i, ρ(x_i)) ds`.
    pub fn displacements(&self, rho: &GridDensity, a: f64, b: f64) -> Vec<DVec> {
        let grid = *rho.grid();
        let drift = &self.drift;
        rho.values()
            .par_iter()
            .enumerate()
            .map(|(k, &u)| displacement_over(drift, a, b, &grid.point(k), u))
            .collect()
    }

    /// Advances `ρ_{kh}` to time `t ∈ (kh, (k+1)h]`. Returns the density and
    /// the clamped mass.
    pub fn advance(&self, rho_k: &GridDensity, k: usize, t: f64) -> Result<(GridDensity, f64)> {
        let start = k as f64 * self.h;
        let dt = t - start;
        if !(dt > 0.0) || dt > self.h * (1.0 + 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "target time {t} outside step ({start}, {}]",
                start + self.h
            )));
        }
        let grid = *rho_k.grid();
        let mass = rho_k.mass();
        let moved = if k == 0 || self.drift.is_zero() {
            rho_k.clone()
        } else {
            let disp = self.displacements(rho_k, start, t);
            GridDensity::from_clamped(grid, push_forward(&grid, rho_k.values(), &disp)).0
        };
        let (out, clamped) = self.semigroup.convolve_tracked(dt, &moved)?;
        if clamped > self.opts.mass_tol {
            return Err(Error::MassLeak {
                leaked: clamped,
                tol: self.opts.mass_tol,
            });
        }
        Ok((out.with_mass(mass), clamped))
    }

    /// Direct `O(n^{2d})` quadrature of the one-step integral (full step).
    pub fn step_direct(&self, rho_k: &GridDensity, k: usize) -> Result<GridDensity> {
        let grid = *rho_k.grid();
        let start = k as f64 * self.h;
        let disp = if k == 0 {
            vec![[0.0; 2]; grid.len()]
        } else {
            self.displacements(rho_k, start, start + self.h)
        };
        let kernel = self.semigroup.raw_kernel(self.h)?;
        let vol = grid.cell_volume();
        let sources: Vec<(DVec, f64)> = (0..grid.len())
            .filter(|&i| rho_k.values()[i] != 0.0)
            .map(|i| {
                let x = grid.point(i);
                ([x[0] + disp[i][0], x[1] + disp[i][1]], rho_k.values()[i] * vol)
            })
            .collect();
        let out: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|j| {
                let y = grid.point(j);
                sources
                    .iter()
                    .map(|(p, w)| w * kernel_linear(&grid, &kernel, [y[0] - p[0], y[1] - p[1]]))
                    .sum()
            })
            .collect();
        let (d, _) = GridDensity::from_clamped(grid, out);
        Ok(d.with_mass(rho_k.mass()))
    }
}

/// Piecewise-(bi)linear interpolation of a periodic kernel table, indexed by
/// the offset `z` from the origin.
fn kernel_linear(grid: &Grid, table: &[f64], z: DVec) -> f64 {
    let n = grid.points_per_axis();
    let dx = grid.spacing();
    let locate = |c: f64| -> (usize, usize, f64) {
        let s = c / dx;
        let m = s.floor();
        let f = s - m;
        let base = (m as i64 + (n / 2) as i64).rem_euclid(n as i64) as usize;
        (base, (base + 1) % n, f)
    };
    let (a0, a1, fa) = locate(z[0]);
    if grid.dim() == 1 {
        return (1.0 - fa) * table[a0] + fa * table[a1];
    }
    let (b0, b1, fb) = locate(z[1]);
    (1.0 - fa) * (1.0 - fb) * table[grid.flatten([a0, b0])]
        + fa * (1.0 - fb) * table[grid.flatten([a1, b0])]
        + (1.0 - fa) * fb * table[grid.flatten([a0, b1])]
        + fa * fb * table[grid.flatten([a1, b1])]
}

/// One full scheme step `ρ_{kh} -> ρ_{(k+1)h}` (fast path).
pub fn em_density_step(
    rho_k: &GridDensity,
    drift: &DriftSpec,
    k: usize,
    h: f64,
    params: &StableParams,
) -> Result<GridDensity> {
    let stepper = DensityStepper::new(*params, rho_k.grid(), drift.clone(), h, SchemeOptions::default())?;
    Ok(stepper.advance(rho_k, k, (k + 1) as f64 * h)?.0)
}

/// One full scheme step by direct quadrature.
pub fn em_density_step_direct(
    rho_k: &GridDensity,
    drift: &DriftSpec,
    k: usize,
    h: f64,
    params: &StableParams,
) -> Result<GridDensity> {
    let stepper = DensityStepper::new(*params, rho_k.grid(), drift.clone(), h, SchemeOptions::default())?;
    stepper.step_direct(rho_k, k)
}

/// Evolves `ρ_0` to `T`; stores every grid time `jh <= T`, `T` itself and
/// any extra `output_times` in `(0, T]`.
pub fn em_density_evolve(
    rho_0: &GridDensity,
    drift: &DriftSpec,
    h: f64,
    horizon: f64,
    params: &StableParams,
    output_times: &[f64],
) -> Result<SchemeTrajectory> {
    em_density_evolve_with(rho_0, drift, h, horizon, params, output_times, SchemeOptions::default())
}

pub fn em_density_evolve_with(
    rho_0: &GridDensity,
    drift: &DriftSpec,
    h: f64,
    horizon: f64,
    params: &StableParams,
    output_times: &[f64],
    opts: SchemeOptions,
) -> Result<SchemeTrajectory> {
    if !(horizon > h) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must exceed the step {h}"
        )));
    }
    let stepper = DensityStepper::new(*params, rho_0.grid(), drift.clone(), h, opts)?;
    let steps = step_index(horizon, h);
    let tol = 1e-9 * h;

    let mut extra: Vec<f64> = output_times
        .iter()
        .copied()
        .chain(std::iter::once(horizon))
        .filter(|&t| {
            if !(t > 0.0 && t <= horizon + tol) {
                return false;
            }
            let j = (t / h).round();
            (t - j * h).abs() > tol
        })
        .collect();
    if output_times.iter().any(|&t| !(t >= 0.0) || t > horizon + tol) {
        return Err(Error::InvalidParameter(format!(
            "output times must lie in [0, {horizon}]"
        )));
    }
    extra.sort_by(f64::total_cmp);
    extra.dedup_by(|a, b| (*a - *b).abs() <= tol);

    let mut times = vec![0.0];
    let mut densities = vec![rho_0.clone()];
    let mut clamped_total = 0.0;
    let mut max_tail = rho_0.tail_mass();
    let mut current = rho_0.clone();
    let mut extra_iter = extra.into_iter().peekable();

    for k in 0..=steps {
        let start = k as f64 * h;
        let end = start + h;
        while let Some(&t) = extra_iter.peek() {
            if t < end - tol {
                let (d, c) = stepper.advance(&current, k, t)?;
                clamped_total += c;
                max_tail = max_tail.max(d.tail_mass());
                times.push(t);
                densities.push(d);
                extra_iter.next();
            } else {
                break;
            }
        }
        if k == steps {
            break;
        }
        let (next, c) = stepper.advance(&current, k, end)?;
        clamped_total += c;
        max_tail = max_tail.max(next.tail_mass());
        times.push((k + 1) as f64 * h);
        densities.push(next.clone());
        current = next;
    }

    Ok(SchemeTrajectory {
        params: *params,
        drift: drift.clone(),
        h,
        times,
        densities,
        clamped_mass: clamped_total,
        max_tail_mass: max_tail,
    })
}

/// `L^1` distance between the stored `ρ^h_t` and its Duhamel reconstruction
/// `q(t) * ρ_0 - ∫_0^t q(t - π_h(s)) * div[(b^h ρ^h_{π_h(s)}) pushed by the partial displacement] ds`.
///
/// The noise increment on `[π_h(s), s]` is folded into the kernel time by
/// Chapman–Kolmogorov. The divergence is the exact `s`-derivative of the
/// discrete push-forward ([`push_forward_rate`]), so the reconstruction
/// differs from the stored density by time-quadrature error only. The time
/// integral uses `quad_substeps` midpoint cells per scheme step.
pub fn duhamel_residual(traj: &SchemeTrajectory, t: f64, quad_substeps: usize) -> Result<f64> {
    if quad_substeps < 4 {
        return Err(Error::InvalidParameter(format!(
            "need at least 4 quadrature substeps per step, got {quad_substeps}"
        )));
    }
    let grid = *traj.grid();
    let stored = traj.require(t)?;
    let h = traj.h;
    let sg = HeatSemigroup::with_tail_tol(traj.params, &grid, f64::INFINITY)?;
    let mut recon = sg.convolve_signed(t, traj.initial().values())?;
    let tol = 1e-9 * h;

    let mut k = 1;
    while (k as f64) * h < t - tol {
        let a = k as f64 * h;
        let b = (a + h).min(t);
        let rho_k = traj.require(a)?;
        let kernel_time = t - a;
        let ds = (b - a) / quad_substeps as f64;
        let mut rate_sum = vec![0.0; grid.len()];
        for m in 0..quad_substeps {
            let s = a + (m as f64 + 0.5) * ds;
            let mut disp = Vec::with_capacity(grid.len());
            let mut vel = Vec::with_capacity(grid.len());
            for (i, &u) in rho_k.values().iter().enumerate() {
                let x = grid.point(i);
                disp.push(displacement_over(&traj.drift, a, s, &x, u));
                vel.push(traj.drift.eval(s, &x, u));
            }
            let rate = push_forward_rate(&grid, rho_k.values(), &disp, &vel);
            rate_sum.iter_mut().zip(rate).for_each(|(acc, v)| *acc += ds * v);
        }
        let term = sg.convolve_signed(kernel_time, &rate_sum)?;
        recon.iter_mut().zip(term).for_each(|(r, v)| *r += v);
        k += 1;
    }
    let recon = GridFunction::new(grid, recon)?;
    lp_distance(stored, &recon, 1.0)
}

/// Summary of the uniform-estimate check.
#[derive(Debug, Clone, Serialize)]
pub struct UniformBound {
    pub max_ratio: f64,
    /// `(t, max_y ρ^h_t(y) / (q(t) * ρ_0)(y))` per stored positive time.
    pub per_time: Vec<(f64, f64)>,
}

/// Largest ratio `ρ^h_t(y) / (q_α(t) * ρ_0)(y)` over stored times and points
/// where the denominator exceeds `1e-12`.
pub fn check_uniform_bound(
    traj: &SchemeTrajectory,
    rho_0: &GridDensity,
    params: &StableParams,
) -> Result<UniformBound> {
    let sg = HeatSemigroup::with_tail_tol(*params, traj.grid(), f64::INFINITY)?;
    let mut per_time = Vec::new();
    let mut max_ratio = 0.0_f64;
    for (t, rho) in traj.times.iter().zip(&traj.densities) {
        if *t <= 0.0 {
            continue;
        }
        let free = sg.convolve_signed(*t, rho_0.values())?;
        let r = rho
            .values()
            .iter()
            .zip(&free)
            .filter(|(_, d)| **d > 1e-12)
            .map(|(v, d)| v / d)
            .fold(0.0, f64::max);
        per_time.push((*t, r));
        max_ratio = max_ratio.max(r);
    }
    Ok(UniformBound { max_ratio, per_time })
}

/// One row of the time-Hölder table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HolderRow {
    pub s: f64,
    pub t: f64,
    pub ratio: f64,
}

/// `‖ρ_s - ρ_t‖_p |t - s|^{-(α-1)/α} s^{(α-1)/α} / ‖ρ_0‖_p`.
pub fn time_holder_ratio(traj: &SchemeTrajectory, s: f64, t: f64, p: f64) -> Result<f64> {
    let a = traj.params.rate_exponent();
    let rs = traj.require(s)?;
    let rt = traj.require(t)?;
    let diff = lp_distance(rs, rt, p)?;
    if diff == 0.0 {
        return Ok(0.0);
    }
    let norm0 = lp_norm(traj.initial(), p)?;
    Ok(diff * (t - s).abs().powf(-a) * s.min(t).powf(a) / norm0)
}

/// Ratios over the dyadic pairs `(s, 2s)` with `s ∈ {T/8, T/4, T/2}`,
/// keeping pairs with `s >= h` and both times stored.
pub fn time_holder_modulus(traj: &SchemeTrajectory, params: &StableParams, p: f64) -> Result<Vec<HolderRow>> {
    if traj.params != *params {
        return Err(Error::InvalidParameter("parameters differ from the trajectory's".into()));
    }
    let (horizon, _) = traj.last();
    let mut rows = Vec::new();
    for m in [3, 2, 1] {
        let s = horizon / f64::from(1u32 << m);
        if s < traj.h * (1.0 - 1e-9) || traj.at(s).is_none() || traj.at(2.0 * s).is_none() {
            continue;
        }
        rows.push(HolderRow {
            s,
            t: 2.0 * s,
            ratio: time_holder_ratio(traj, s, 2.0 * s, p)?,
        });
    }
    Ok(rows)
}

/// Output of [`lemma21_check`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Lemma21 {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// `∫_{|y|>0} [A ∧ (|y|^2 B)] |y|^{-d-α} dy` in closed form, split at
/// `r* = sqrt(A/B)`.
pub fn truncated_levy_integral(sup: f64, hess_sup: f64, alpha: f64, dim: usize) -> f64 {
    if sup <= 0.0 || hess_sup <= 0.0 {
        return 0.0;
    }
    let surface = if dim == 1 { 2.0 } else { 2.0 * std::f64::consts::PI };
    let r = (sup / hess_sup).sqrt();
    surface * (hess_sup * r.powf(2.0 - alpha) / (2.0 - alpha) + sup * r.powf(-alpha) / alpha)
}

/// One-step expectation bound: compares
/// `|E f1(X_π)(f2(X_s) - f2(X_π))|` with
/// `h ‖f1‖_∞ (‖∇f2‖_∞ κ + ∫[‖f2‖_∞ ∧ |y|^2 ‖∇²f2‖_∞] |y|^{-d-α} dy)`.
pub fn lemma21_check(
    f1: &GridFunction,
    f2: &GridFunction,
    traj: &SchemeTrajectory,
    s: f64,
    params: &StableParams,
) -> Result<Lemma21> {
    let grid = *traj.grid();
    grid.check_same(f1.grid())?;
    grid.check_same(f2.grid())?;
    let h = traj.h;
    if !(s > h) {
        return Err(Error::InvalidParameter(format!("need s > h, got s = {s}, h = {h}")));
    }
    let sg = HeatSemigroup::with_tail_tol(*params, &grid, f64::INFINITY)?;
    let pi = pi_h(s, h);
    let delta = s - pi;
    let rho = traj.require(pi)?;
    let smoothed = if delta > 0.0 {
        sg.convolve_signed(delta, f2.values())?
    } else {
        f2.values().to_vec()
    };
    let vol = grid.cell_volume();
    let mut acc = 0.0;
    for (i, &u) in rho.values().iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        let x = grid.point(i);
        let d = displacement_over(&traj.drift, pi, s, &x, u);
        let moved = if d == [0.0, 0.0] {
            smoothed[i]
        } else {
            interpolate(&grid, &smoothed, [x[0] + d[0], x[1] + d[1]], 6)
        };
        acc += vol * u * f1.values()[i] * (moved - f2.values()[i]);
    }
    let lhs = acc.abs();

    let spectral = sg.spectral();
    let grads: Vec<Vec<f64>> = (0..grid.dim())
        .map(|a| spectral.apply_derivative(f2.values(), a, |_| 1.0))
        .collect();
    let grad_sup = (0..grid.len())
        .map(|i| grads.iter().map(|g| g[i] * g[i]).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut hess = vec![0.0; grid.len()];
    for a in 0..grid.dim() {
        for b in 0..grid.dim() {
            let d2 = spectral.apply_second_derivative(f2.values(), a, b);
            hess.iter_mut().zip(d2).for_each(|(hs, v)| *hs += v * v);
        }
    }
    let hess_sup = hess.iter().fold(0.0_f64, |m, v| m.max(v.sqrt()));
    let levy = truncated_levy_integral(f2.sup_norm(), hess_sup, params.alpha(), grid.dim());
    let rhs = h * f1.sup_norm() * (grad_sup * traj.drift.kappa() + levy);
    let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(Lemma21 { lhs, rhs, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{BuiltinDrift, Direction};
    use crate::grid::make_grid;
    use crate::heat_kernel::semigroup_convolve;

    fn params() -> StableParams {
        StableParams::new(1.5, 1).unwrap()
    }

    fn sat() -> DriftSpec {
        BuiltinDrift::NemytskiiSat {
            kappa: 1.0,
            direction: Direction::Sine,
        }
        .into_spec(1)
    }

    #[test]
    fn push_forward_conserves_mass_and_shifts() {
        let g = make_grid(1, 5.0, 64).unwrap();
        let mut v = vec![0.0; 64];
        v[10] = 2.0;
        let disp = vec![[1.25 * g.spacing(), 0.0]; 64];
        let out = push_forward(&g, &v, &disp);
        assert!((out[11] - 1.5).abs() < 1e-14);
        assert!((out[12] - 0.5).abs() < 1e-14);
        // wraps periodically
        let mut w = vec![0.0; 64];
        w[63] = 1.0;
        let out = push_forward(&g, &w, &disp);
        assert!((out[0] - 0.75).abs() < 1e-14 && (out[1] - 0.25).abs() < 1e-14);

        let g2 = make_grid(2, 5.0, 16).unwrap();
        let vals: Vec<f64> = (0..256).map(|k| (k % 7) as f64).collect();
        let disp2: Vec<DVec> = (0..256).map(|k| [0.3 * (k as f64).sin(), -0.7]).collect();
        let out = push_forward(&g2, &vals, &disp2);
        let s0: f64 = vals.iter().sum();
        let s1: f64 = out.iter().sum();
        assert!((s0 - s1).abs() < 1e-12 * s0);
        assert!(out.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn zero_drift_step_is_convolution() {
        let g = make_grid(1, 10.0, 256).unwrap();
        let rho = GridDensity::gaussian(g, 0.5, [0.0, 0.0]).unwrap();
        let h = 1.0 / 16.0;
        let step = em_density_step(&rho, &DriftSpec::zero(1), 3, h, &params()).unwrap();
        let conv = semigroup_convolve(&params(), h, &rho).unwrap();
        assert!(lp_distance(&step, &conv, 1.0).unwrap() < 1e-14);
    }

    #[test]
    fn fast_and_direct_paths_agree() {
        let g = make_grid(1, 10.0, 128).unwrap();
        let rho = GridDensity::gaussian(g, 0.7, [0.2, 0.0]).unwrap();
        let h = 1.0 / 16.0;
        let fast = em_density_step(&rho, &sat(), 2, h, &params()).unwrap();
        let direct = em_density_step_direct(&rho, &sat(), 2, h, &params()).unwrap();
        assert!(lp_distance(&fast, &direct, 1.0).unwrap() < 1e-10);
    }

    #[test]
    fn evolve_layout_and_mass() {
        let g = make_grid(1, 10.0, 256).unwrap();
        let rho = GridDensity::gaussian(g, 0.5, [0.0, 0.0]).unwrap();
        let h = 1.0 / 16.0;
        let traj = em_density_evolve(&rho, &sat(), h, 0.5, &params(), &[0.1, 0.3]).unwrap();
        assert_eq!(traj.times.len(), 9 + 2);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert!(traj.at(0.1).is_some() && traj.at(0.5).is_some());
        for d in &traj.densities {
            assert!((d.mass() - 1.0).abs() < 1e-10);
        }
        assert!(em_density_evolve(&rho, &sat(), 0.5, 0.5, &params(), &[]).is_err());
        assert!(em_density_evolve(&rho, &sat(), 1.5, 3.0, &params(), &[]).is_err());
        assert!(em_density_evolve(&rho, &sat(), h, 0.5, &params(), &[0.7]).is_err());
    }

    #[test]
    fn horizon_equal_one_step_is_pure_convolution() {
        let g = make_grid(1, 10.0, 256).unwrap();
        let rho = GridDensity::gaussian(g, 0.5, [0.0, 0.0]).unwrap();
        // T slightly above h: grid times {0, h} plus T
        let h = 0.125;
        let traj = em_density_evolve(&rho, &sat(), h, h * 1.5, &params(), &[]).unwrap();
        let conv = semigroup_convolve(&params(), h, &rho).unwrap();
        assert!(lp_distance(traj.at(h).unwrap(), &conv, 1.0).unwrap() < 1e-14);
    }

    #[test]
    fn levy_integral_closed_form() {
        // A = 1, B = 1 -> r* = 1, 1-d: 2 (1/(2-α) + 1/α)
        let v = truncated_levy_integral(1.0, 1.0, 1.5, 1);
        assert!((v - 2.0 * (2.0 + 1.0 / 1.5)).abs() < 1e-14);
        assert_eq!(truncated_levy_integral(1.0, 0.0, 1.5, 1), 0.0);
        // midpoint quadrature of the radial integral as an oracle
        let (a, b, alpha): (f64, f64, f64) = (0.7, 2.3, 1.3);
        let mut acc = 0.0;
        let n = 2_000_000;
        let umax: f64 = 60.0;
        let du = umax / n as f64;
        for i in 0..n {
            // y = e^u - 1 maps [0, umax] onto [0, e^60)
            let uu = (i as f64 + 0.5) * du;
            let y = uu.exp_m1();
            let f = (a.min(y * y * b)) * y.powf(-1.0 - alpha);
            acc += 2.0 * f * uu.exp() * du;
        }
        let exact = truncated_levy_integral(a, b, alpha, 1);
        assert!((acc - exact).abs() < 1e-4 * exact, "{acc} vs {exact}");
    }
}
