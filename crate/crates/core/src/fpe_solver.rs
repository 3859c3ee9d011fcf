//! Reference solver for `∂_t ρ = Δ^{α/2} ρ - div(b(t, x, ρ) ρ)` on the
//! periodic grid by operator splitting: the fractional diffusion is applied
//! exactly in Fourier space, transport by a conservative finite-volume sweep
//! (dimension by dimension in 2-d).

use serde::{Deserialize, Serialize};

use crate::density_scheme::SchemeTrajectory;
use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::grid::{lp_distance, Grid, GridDensity, GridFunction, OnGrid};
use crate::heat_kernel::{HeatSemigroup, DEFAULT_TAIL_TOL};
use crate::stable_noise::StableParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    /// Transport then diffusion, first order.
    Lie,
    /// Half diffusion, transport, half diffusion.
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    /// Donor-cell fluxes, forward Euler. Positive for `dt |b| <= Δx`.
    Upwind1,
    /// MUSCL reconstruction with minmod slopes, SSP-RK2.
    CenteredLimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpeConfig {
    pub dt: f64,
    pub splitting: Splitting,
    pub transport: Transport,
}

impl FpeConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            splitting: Splitting::Strang,
            transport: Transport::CenteredLimited,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FpeTrajectory {
    pub params: StableParams,
    pub config: FpeConfig,
    /// `0, dt, 2dt, ...` and a shorter last step when `T / dt` is not an integer.
    pub times: Vec<f64>,
    pub densities: Vec<GridDensity>,
    pub clamped_mass: f64,
}

impl FpeTrajectory {
    pub fn grid(&self) -> &Grid {
        self.densities[0].grid()
    }

    pub fn at(&self, t: f64) -> Option<&GridDensity> {
        let tol = 1e-9 * self.config.dt;
        self.times
            .iter()
            .position(|s| (s - t).abs() <= tol)
            .map(|i| &self.densities[i])
    }

    pub fn last(&self) -> &GridDensity {
        self.densities.last().expect("trajectory holds at least ρ_0")
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Net outflow rate `(F_{i+1/2} - F_{i-1/2}) / Δx` along one periodic line.
fn line_divergence(rho: &[f64], vel: &[f64], dx: f64, scheme: Transport) -> Vec<f64> {
    let n = rho.len();
    let next = |i: usize| (i + 1) % n;
    let prev = |i: usize| (i + n - 1) % n;
    let flux: Vec<f64> = match scheme {
        Transport::Upwind1 => (0..n)
            .map(|i| vel[i].max(0.0) * rho[i] + vel[next(i)].min(0.0) * rho[next(i)])
            .collect(),
        Transport::CenteredLimited => {
            let slope: Vec<f64> = (0..n)
                .map(|i| minmod(rho[i] - rho[prev(i)], rho[next(i)] - rho[i]))
                .collect();
            (0..n)
                .map(|i| {
                    let j = next(i);
                    let left = rho[i] + 0.5 * slope[i];
                    let right = rho[j] - 0.5 * slope[j];
                    vel[i].max(0.0) * left + vel[j].min(0.0) * right
                })
                .collect()
        }
    };
    (0..n).map(|i| (flux[i] - flux[prev(i)]) / dx).collect()
}

fn transport_line(rho: &mut [f64], vel: &[f64], dx: f64, dt: f64, scheme: Transport) {
    match scheme {
        Transport::Upwind1 => {
            let div = line_divergence(rho, vel, dx, scheme);
            rho.iter_mut().zip(div).for_each(|(r, d)| *r -= dt * d);
        }
        Transport::CenteredLimited => {
            let d1 = line_divergence(rho, vel, dx, scheme);
            let stage: Vec<f64> = rho.iter().zip(&d1).map(|(r, d)| r - dt * d).collect();
            let d2 = line_divergence(&stage, vel, dx, scheme);
            for i in 0..rho.len() {
                rho[i] = 0.5 * rho[i] + 0.5 * (stage[i] - dt * d2[i]);
            }
        }
    }
}

/// One transport substep of length `dt` with velocities frozen from the
/// density `u` at time `t`.
fn transport(
    rho: &mut [f64],
    grid: &Grid,
    drift: &DriftSpec,
    t: f64,
    u: &[f64],
    dt: f64,
    scheme: Transport,
) {
    let n = grid.points_per_axis();
    let dx = grid.spacing();
    let vel: Vec<[f64; 2]> = (0..grid.len()).map(|k| drift.eval(t, &grid.point(k), u[k])).collect();
    if grid.dim() == 1 {
        let v: Vec<f64> = vel.iter().map(|v| v[0]).collect();
        transport_line(rho, &v, dx, dt, scheme);
        return;
    }
    let mut line = vec![0.0; n];
    let mut v = vec![0.0; n];
    for axis in 0..2 {
        for fixed in 0..n {
            let idx = |m: usize| if axis == 0 { grid.flatten([m, fixed]) } else { grid.flatten([fixed, m]) };
            for m in 0..n {
                line[m] = rho[idx(m)];
                v[m] = vel[idx(m)][axis];
            }
            transport_line(&mut line, &v, dx, dt, scheme);
            for m in 0..n {
                rho[idx(m)] = line[m];
            }
        }
    }
}

/// Solves up to `horizon`, storing every step.
pub fn fpe_solve(
    rho_0: &GridDensity,
    drift: &DriftSpec,
    params: &StableParams,
    horizon: f64,
    config: &FpeConfig,
) -> Result<FpeTrajectory> {
    fpe_solve_with(rho_0, drift, params, horizon, config, DEFAULT_TAIL_TOL)
}

pub fn fpe_solve_with(
    rho_0: &GridDensity,
    drift: &DriftSpec,
    params: &StableParams,
    horizon: f64,
    config: &FpeConfig,
    tail_tol: f64,
) -> Result<FpeTrajectory> {
    let grid = *rho_0.grid();
    let dt = config.dt;
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need dt > 0 and T > 0, got dt = {dt}, T = {horizon}"
        )));
    }
    let kappa = drift.kappa();
    if kappa > 0.0 && dt > grid.spacing() / kappa {
        return Err(Error::CflViolation {
            dt,
            limit: grid.spacing() / kappa,
        });
    }
    let sg = HeatSemigroup::with_tail_tol(*params, &grid, tail_tol)?;
    sg.check_domain(horizon)?;

    let mass = rho_0.mass();
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut densities = Vec::with_capacity(steps + 1);
    times.push(0.0);
    densities.push(rho_0.clone());
    let mut clamped = 0.0;
    let mut current = rho_0.clone();
    let zero = drift.is_zero();

    for k in 0..steps {
        let t = k as f64 * dt;
        let tau = (horizon - t).min(dt);
        let next = match config.splitting {
            Splitting::Strang => {
                let (half, c1) = sg.convolve_tracked(0.5 * tau, &current)?;
                let mut v = half.values().to_vec();
                if !zero {
                    transport(&mut v, &grid, drift, t + 0.5 * tau, half.values(), tau, config.transport);
                }
                let (moved, c2) = GridDensity::from_clamped(grid, v);
                let (out, c3) = sg.convolve_tracked(0.5 * tau, &moved)?;
                clamped += c1 + c2 + c3;
                out
            }
            Splitting::Lie => {
                let mut v = current.values().to_vec();
                if !zero {
                    transport(&mut v, &grid, drift, t, current.values(), tau, config.transport);
                }
                let (moved, c1) = GridDensity::from_clamped(grid, v);
                let (out, c2) = sg.convolve_tracked(tau, &moved)?;
                clamped += c1 + c2;
                out
            }
        };
        current = next.with_mass(mass);
        times.push(if k + 1 == steps { horizon } else { (k + 1) as f64 * dt });
        densities.push(current.clone());
    }
    Ok(FpeTrajectory {
        params: *params,
        config: *config,
        times,
        densities,
        clamped_mass: clamped,
    })
}

/// `|⟨ρ_t, φ⟩ - ⟨ρ_0, φ⟩ - ∫_0^t ⟨ρ_s, Δ^{α/2} φ⟩ + ⟨ρ_s, b(s, ·, ρ_s)·∇φ⟩ ds|`,
/// time integral by the trapezoid rule over stored steps.
pub fn fpe_weak_residual(
    traj: &FpeTrajectory,
    drift: &DriftSpec,
    params: &StableParams,
    phi: &GridFunction,
    t: f64,
) -> Result<f64> {
    let grid = *traj.grid();
    grid.check_same(phi.grid())?;
    let sg = HeatSemigroup::with_tail_tol(*params, &grid, f64::INFINITY)?;
    let lap = sg.frac_laplacian(phi)?;
    let grads: Vec<Vec<f64>> = (0..grid.dim())
        .map(|a| sg.spectral().apply_derivative(phi.values(), a, |_| 1.0))
        .collect();
    let end = traj
        .times
        .iter()
        .position(|s| (s - t).abs() <= 1e-9 * traj.config.dt)
        .ok_or_else(|| Error::InvalidParameter(format!("time {t} is not stored")))?;
    if end == 0 {
        return Ok(0.0);
    }
    let vol = grid.cell_volume();
    let integrand = |i: usize| -> f64 {
        let s = traj.times[i];
        let rho = traj.densities[i].values();
        let mut acc = 0.0;
        for k in 0..grid.len() {
            let x = grid.point(k);
            let b = drift.eval(s, &x, rho[k]);
            let bgrad: f64 = (0..grid.dim()).map(|a| b[a] * grads[a][k]).sum();
            acc += rho[k] * (lap.values()[k] + bgrad);
        }
        acc * vol
    };
    let mut integral = 0.0;
    let mut prev = integrand(0);
    for i in 1..=end {
        let cur = integrand(i);
        integral += 0.5 * (traj.times[i] - traj.times[i - 1]) * (prev + cur);
        prev = cur;
    }
    let lhs = phi.inner(&traj.densities[end])? - phi.inner(&traj.densities[0])?;
    Ok((lhs - integral).abs())
}

/// `‖ρ^FPE_t - ρ^h_t‖_1`.
pub fn em_vs_fpe_gap(scheme: &SchemeTrajectory, fpe: &FpeTrajectory, t: f64) -> Result<f64> {
    scheme.grid().check_same(fpe.grid())?;
    let a = scheme
        .at(t)
        .ok_or_else(|| Error::InvalidParameter(format!("scheme trajectory lacks t = {t}")))?;
    let b = fpe
        .at(t)
        .ok_or_else(|| Error::InvalidParameter(format!("FPE trajectory lacks t = {t}")))?;
    lp_distance(a, b, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{BuiltinDrift, Direction};
    use crate::grid::make_grid;
    use crate::heat_kernel::semigroup_convolve;

    fn sat() -> DriftSpec {
        BuiltinDrift::NemytskiiSat {
            kappa: 1.0,
            direction: Direction::Sine,
        }
        .into_spec(1)
    }

    #[test]
    fn upwind_line_conserves_and_stays_positive() {
        let rho: Vec<f64> = (0..32).map(|i| if (10..14).contains(&i) { 1.0 } else { 0.0 }).collect();
        let vel: Vec<f64> = (0..32).map(|i| (i as f64 * 0.4).sin()).collect();
        for scheme in [Transport::Upwind1, Transport::CenteredLimited] {
            let mut r = rho.clone();
            for _ in 0..50 {
                transport_line(&mut r, &vel, 1.0, 0.4, scheme);
            }
            let m: f64 = r.iter().sum();
            assert!((m - 4.0).abs() < 1e-12);
            assert!(r.iter().all(|v| *v > -1e-12), "{scheme:?}");
        }
    }

    #[test]
    fn constant_velocity_upwind_at_unit_courant_is_a_shift() {
        let mut r = vec![0.0; 16];
        r[3] = 1.0;
        transport_line(&mut r, &vec![1.0; 16], 0.5, 0.5, Transport::Upwind1);
        assert_eq!(r[4], 1.0);
        assert_eq!(r[3], 0.0);
    }

    #[test]
    fn zero_drift_matches_convolution() {
        let g = make_grid(1, 10.0, 256).unwrap();
        let p = StableParams::new(1.5, 1).unwrap();
        let rho = GridDensity::gaussian(g, 0.5, [0.0, 0.0]).unwrap();
        let traj = fpe_solve(&rho, &DriftSpec::zero(1), &p, 0.5, &FpeConfig::new(1e-2)).unwrap();
        let exact = semigroup_convolve(&p, 0.5, &rho).unwrap();
        assert!(lp_distance(traj.last(), &exact, 1.0).unwrap() < 1e-5);
        assert_eq!(traj.times.len(), 51);
    }

    #[test]
    fn cfl_guard() {
        let g = make_grid(1, 10.0, 256).unwrap();
        let p = StableParams::new(1.5, 1).unwrap();
        let rho = GridDensity::gaussian(g, 0.5, [0.0, 0.0]).unwrap();
        let err = fpe_solve(&rho, &sat(), &p, 0.5, &FpeConfig::new(0.1)).unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }));
    }

    #[test]
    fn lie_and_strang_conserve_mass() {
        let g = make_grid(1, 10.0, 256).unwrap();
        let p = StableParams::new(1.5, 1).unwrap();
        let rho = GridDensity::gaussian(g, 0.5, [0.0, 0.0]).unwrap();
        for splitting in [Splitting::Lie, Splitting::Strang] {
            for transport in [Transport::Upwind1, Transport::CenteredLimited] {
                let cfg = FpeConfig { dt: 5e-3, splitting, transport };
                let traj = fpe_solve(&rho, &sat(), &p, 0.25, &cfg).unwrap();
                for d in &traj.densities {
                    assert!((d.mass() - 1.0).abs() < 1e-8);
                }
                assert!(traj.clamped_mass < 1e-6);
            }
        }
    }

    #[test]
    fn weak_residual_trivial_cases() {
        let g = make_grid(1, 10.0, 256).unwrap();
        let p = StableParams::new(1.5, 1).unwrap();
        let rho = GridDensity::gaussian(g, 0.5, [0.0, 0.0]).unwrap();
        let traj = fpe_solve(&rho, &sat(), &p, 0.2, &FpeConfig::new(1e-2)).unwrap();
        let one = GridFunction::from_fn(g, |_| 1.0);
        assert!(fpe_weak_residual(&traj, &sat(), &p, &one, 0.2).unwrap() < 1e-6);
        let phi = GridFunction::from_fn(g, |x| (std::f64::consts::PI * x[0] / 5.0).cos());
        assert_eq!(fpe_weak_residual(&traj, &sat(), &p, &phi, 0.0).unwrap(), 0.0);
        let rough = GridFunction::from_fn(g, |x| if x[0] > 0.0 { 1.0 } else { 0.0 });
        assert!(matches!(
            fpe_weak_residual(&traj, &sat(), &p, &rough, 0.2),
            Err(Error::SpectralTailTooLarge { .. })
        ));
    }
}
