//! Mean-field particle version of the Euler–Maruyama scheme. The unknown
//! density at each grid time is replaced by a kernel density estimate of the
//! cloud, binned on the periodic grid.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drift::{displacement_over, step_index, DVec, DriftSpec};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridDensity, OnGrid};
use crate::spectral::Spectral;
use crate::stable_noise::{sample_rot_invariant, RngStream, StableParams};

/// Fixed-point resolution of the linear-binning weights.
const WEIGHT_BITS: u32 = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub time: f64,
    pub dim: usize,
    pub positions: Vec<DVec>,
}

impl ParticleCloud {
    pub fn new(time: f64, dim: usize, positions: Vec<DVec>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter("a cloud needs at least one particle".into()));
        }
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidParameter(format!("dim must be 1 or 2, got {dim}")));
        }
        if positions.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidParameter("non-finite particle position".into()));
        }
        Ok(Self { time, dim, positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Fraction of particles outside `[-L, L)^d`.
    pub fn outside_fraction(&self, grid: &Grid) -> f64 {
        let l = grid.half_width();
        let out = self
            .positions
            .iter()
            .filter(|p| (0..self.dim).any(|a| p[a] < -l || p[a] >= l))
            .count();
        out as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdeKernel {
    Gaussian,
    Epanechnikov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Silverman's rule with a robust spread estimate.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    pub kernel: KdeKernel,
    pub bandwidth: Bandwidth,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            kernel: KdeKernel::Gaussian,
            bandwidth: Bandwidth::Auto,
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `min(std, IQR / 1.34)` along one axis.
fn robust_spread(values: &mut [f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    values.sort_by(f64::total_cmp);
    let iqr = quantile(values, 0.75) - quantile(values, 0.25);
    let sd = var.sqrt();
    if iqr > 0.0 {
        sd.min(iqr / 1.34)
    } else {
        sd
    }
}

/// Resolved bandwidth; `Auto` is `0.9 σ N^{-1/5}` in 1-d and
/// `σ N^{-1/6}` in 2-d with `σ` the mean robust spread. Degenerate clouds
/// fall back to one grid spacing.
pub fn resolve_bandwidth(cloud: &ParticleCloud, cfg: &KdeConfig, grid: &Grid) -> Result<f64> {
    let b = match cfg.bandwidth {
        Bandwidth::Fixed(b) => {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {b}")));
            }
            b
        }
        Bandwidth::Auto => {
            let n = cloud.len() as f64;
            let spread = (0..cloud.dim)
                .map(|a| {
                    let mut v: Vec<f64> = cloud.positions.iter().map(|p| p[a]).collect();
                    robust_spread(&mut v)
                })
                .sum::<f64>()
                / cloud.dim as f64;
            let b = if cloud.dim == 1 {
                0.9 * spread * n.powf(-0.2)
            } else {
                spread * n.powf(-1.0 / 6.0)
            };
            if b > 0.0 && b.is_finite() {
                b
            } else {
                grid.spacing()
            }
        }
    };
    Ok(b)
}

/// Periodic wrap into `[-L, L)`.
#[inline]
pub fn wrap_coordinate(x: f64, half_width: f64) -> f64 {
    let period = 2.0 * half_width;
    let w = x - period * ((x + half_width) / period).floor();
    if w >= half_width {
        w - period
    } else {
        w
    }
}

/// Linear-binning stencil of a wrapped coordinate: lower index and weight of
/// the upper neighbour.
#[inline]
fn bin_1d(grid: &Grid, x: f64) -> (usize, usize, f64) {
    let n = grid.points_per_axis();
    let s = (wrap_coordinate(x, grid.half_width()) + grid.half_width()) / grid.spacing();
    let m = s.floor();
    let f = (s - m).clamp(0.0, 1.0);
    let i0 = (m as i64).rem_euclid(n as i64) as usize;
    (i0, (i0 + 1) % n, f)
}

/// Linearly binned histogram, accumulated in fixed point so the result does
/// not depend on particle order. Values are a density (mass 1).
pub fn linear_histogram(cloud: &ParticleCloud, grid: &Grid) -> Vec<f64> {
    let one = 1u64 << WEIGHT_BITS;
    let fixed = |f: f64| ((f * one as f64).round() as u64).min(one);
    let partials: Vec<Vec<u128>> = cloud
        .positions
        .par_chunks(4096)
        .map(|chunk| {
            let mut acc = vec![0u128; grid.len()];
            for p in chunk {
                let (a0, a1, fa) = bin_1d(grid, p[0]);
                let wa1 = fixed(fa);
                let wa0 = one - wa1;
                if grid.dim() == 1 {
                    acc[a0] += wa0 as u128;
                    acc[a1] += wa1 as u128;
                } else {
                    let (b0, b1, fb) = bin_1d(grid, p[1]);
                    let wb1 = fixed(fb) as u128;
                    let wb0 = one as u128 - wb1;
                    acc[grid.flatten([a0, b0])] += wa0 as u128 * wb0;
                    acc[grid.flatten([a1, b0])] += wa1 as u128 * wb0;
                    acc[grid.flatten([a0, b1])] += wa0 as u128 * wb1;
                    acc[grid.flatten([a1, b1])] += wa1 as u128 * wb1;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0u128; grid.len()];
    for part in partials {
        total.iter_mut().zip(part).for_each(|(t, v)| *t += v);
    }
    let unit = if grid.dim() == 1 {
        one as f64
    } else {
        (one as f64) * (one as f64)
    };
    let scale = 1.0 / (unit * cloud.len() as f64 * grid.cell_volume());
    total.into_iter().map(|v| v as f64 * scale).collect()
}

/// Kernel values on periodic offsets (index `i` is offset `i` or `i - n`),
/// folded over neighbouring periods and normalized to unit discrete mass.
fn kernel_table(grid: &Grid, kernel: KdeKernel, bandwidth: f64) -> Vec<f64> {
    let n = grid.points_per_axis();
    let dx = grid.spacing();
    let period = 2.0 * grid.half_width();
    let profile = |r2: f64| -> f64 {
        let z = r2 / (bandwidth * bandwidth);
        match kernel {
            KdeKernel::Gaussian => (-0.5 * z).exp(),
            KdeKernel::Epanechnikov => (1.0 - z).max(0.0),
        }
    };
    let images = (bandwidth * 8.0 / period).ceil() as i64 + 1;
    let offset = |i: usize| -> f64 {
        let s = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
        s * dx
    };
    let mut table = vec![0.0; grid.len()];
    for (k, t) in table.iter_mut().enumerate() {
        let [i, j] = grid.unflatten(k);
        let (x0, x1) = (offset(i), if grid.dim() == 2 { offset(j) } else { 0.0 });
        let mut acc = 0.0;
        for a in -images..=images {
            let y0 = x0 + a as f64 * period;
            if grid.dim() == 1 {
                acc += profile(y0 * y0);
            } else {
                for b in -images..=images {
                    let y1 = x1 + b as f64 * period;
                    acc += profile(y0 * y0 + y1 * y1);
                }
            }
        }
        *t = acc;
    }
    let sum: f64 = table.iter().sum();
    if sum > 0.0 {
        let s = 1.0 / sum;
        table.iter_mut().for_each(|v| *v *= s);
    } else {
        table[0] = 1.0;
    }
    table
}

/// Periodic KDE on the grid: linear binning followed by circular
/// convolution with the folded kernel.
pub fn kde_density(cloud: &ParticleCloud, cfg: &KdeConfig, grid: &Grid) -> Result<GridDensity> {
    if cloud.dim != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "cloud dimension {} vs grid dimension {}",
            cloud.dim,
            grid.dim()
        )));
    }
    let bandwidth = resolve_bandwidth(cloud, cfg, grid)?;
    kde_with_bandwidth(cloud, cfg.kernel, bandwidth, grid)
}

fn kde_with_bandwidth(cloud: &ParticleCloud, kernel: KdeKernel, bandwidth: f64, grid: &Grid) -> Result<GridDensity> {
    let hist = linear_histogram(cloud, grid);
    let table = kernel_table(grid, kernel, bandwidth);
    let spectral = Spectral::new(grid);
    let kh = spectral.forward(&table);
    let mut hh = spectral.forward(&hist);
    hh.iter_mut().zip(&kh).for_each(|(a, b): (&mut Complex64, _)| *a *= b);
    let (d, _) = GridDensity::from_clamped(*grid, spectral.inverse_real(hh));
    Ok(d.normalized())
}

/// Linear interpolation of a grid density at a (wrapped) point, the adjoint
/// of the binning used by [`linear_histogram`].
pub fn interpolate_linear(density: &GridDensity, point: &DVec) -> f64 {
    let grid = density.grid();
    let v = density.values();
    let (a0, a1, fa) = bin_1d(grid, point[0]);
    if grid.dim() == 1 {
        return (1.0 - fa) * v[a0] + fa * v[a1];
    }
    let (b0, b1, fb) = bin_1d(grid, point[1]);
    (1.0 - fa) * (1.0 - fb) * v[grid.flatten([a0, b0])]
        + fa * (1.0 - fb) * v[grid.flatten([a1, b0])]
        + (1.0 - fa) * fb * v[grid.flatten([a0, b1])]
        + fa * fb * v[grid.flatten([a1, b1])]
}

/// Source of initial positions.
pub trait InitialSampler: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut ChaCha8Rng) -> DVec;
}

/// Centered isotropic Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct GaussianInit {
    pub sigma: f64,
    pub dim: usize,
}

impl InitialSampler for GaussianInit {
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> DVec {
        let mut p = [0.0; 2];
        for c in p.iter_mut().take(self.dim) {
            let z: f64 = StandardNormal.sample(rng);
            *c = self.sigma * z;
        }
        p
    }
}

/// Samples a grid density: a cell by inverse CDF, then uniform within it.
#[derive(Debug, Clone)]
pub struct GridSampler {
    grid: Grid,
    cumulative: Vec<f64>,
}

impl GridSampler {
    pub fn new(density: &GridDensity) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = density
            .values()
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::InvalidParameter("cannot sample a zero density".into()));
        }
        Ok(Self {
            grid: *density.grid(),
            cumulative: cumulative.into_iter().map(|c| c / acc).collect(),
        })
    }
}

impl InitialSampler for GridSampler {
    fn dim(&self) -> usize {
        self.grid.dim()
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> DVec {
        let u: f64 = rng.random();
        let k = self.cumulative.partition_point(|c| *c <= u).min(self.grid.len() - 1);
        let centre = self.grid.point(k);
        let dx = self.grid.spacing();
        let mut p = [0.0; 2];
        for (a, c) in p.iter_mut().enumerate().take(self.grid.dim()) {
            let jitter: f64 = rng.random::<f64>() - 0.5;
            *c = centre[a] + dx * jitter;
        }
        p
    }
}

/// Output of [`em_particle_simulate`].
#[derive(Debug, Clone)]
pub struct ParticleRun {
    /// Clouds at `0, h, 2h, ...` and at `T`.
    pub clouds: Vec<ParticleCloud>,
    /// Resolved KDE bandwidth per drift-carrying step.
    pub bandwidths: Vec<f64>,
    /// Largest fraction of particles outside the grid domain at any KDE step.
    pub max_wrap_fraction: f64,
}

impl ParticleRun {
    pub fn last(&self) -> &ParticleCloud {
        self.clouds.last().expect("run holds the initial cloud")
    }
}

/// Stream id reserved for the initial draw of each particle.
const INITIAL_STEP: u64 = u64::MAX;

/// Particle system: `x_i <- x_i + D_k(x_i, û(x_i)) + ΔL_i` with `û` the KDE
/// of the cloud at `kh` (no drift on the first step). Each (particle, step)
/// pair owns an RNG stream, so results do not depend on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn em_particle_simulate(
    count: usize,
    initial: &dyn InitialSampler,
    drift: &DriftSpec,
    h: f64,
    horizon: f64,
    params: &StableParams,
    kde: &KdeConfig,
    grid: &Grid,
    seed: u64,
) -> Result<ParticleRun> {
    if count == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    if !(h > 0.0 && h < 1.0) || !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need h in (0, 1) and T > 0, got h = {h}, T = {horizon}"
        )));
    }
    if initial.dim() != params.dim() || grid.dim() != params.dim() || drift.dim() != params.dim() {
        return Err(Error::InvalidParameter("dimension mismatch between inputs".into()));
    }
    let dim = params.dim();
    let positions: Vec<DVec> = (0..count as u64)
        .into_par_iter()
        .map(|i| initial.sample(&mut RngStream::for_particle(seed, i, INITIAL_STEP).rng()))
        .collect();
    let mut cloud = ParticleCloud::new(0.0, dim, positions)?;
    let mut clouds = vec![cloud.clone()];
    let mut bandwidths = Vec::new();
    let mut max_wrap: f64 = 0.0;

    let full = step_index(horizon, h);
    let tol = 1e-9 * h;
    let steps = if horizon - full as f64 * h > tol { full + 1 } else { full };
    for k in 0..steps {
        let start = k as f64 * h;
        let end = (start + h).min(horizon);
        let dt = end - start;
        let density = if k >= 1 && !drift.is_zero() {
            let b = resolve_bandwidth(&cloud, kde, grid)?;
            bandwidths.push(b);
            max_wrap = max_wrap.max(cloud.outside_fraction(grid));
            Some(kde_with_bandwidth(&cloud, kde.kernel, b, grid)?)
        } else {
            None
        };
        let next: Result<Vec<DVec>> = cloud
            .positions
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let mut y = *x;
                if let Some(d) = &density {
                    let u = interpolate_linear(d, x);
                    let disp = displacement_over(drift, start, end, x, u);
                    y[0] += disp[0];
                    y[1] += disp[1];
                }
                let mut rng = RngStream::for_particle(seed, i as u64, k as u64).rng();
                let inc = sample_rot_invariant(params, dt, &mut rng)?;
                y[0] += inc[0];
                y[1] += inc[1];
                Ok(y)
            })
            .collect();
        cloud = ParticleCloud::new(end, dim, next?)?;
        clouds.push(cloud.clone());
    }
    Ok(ParticleRun {
        clouds,
        bandwidths,
        max_wrap_fraction: max_wrap,
    })
}

/// Nearest-cell histogram counts of wrapped positions.
fn nearest_counts(cloud: &ParticleCloud, grid: &Grid) -> Vec<u64> {
    let n = grid.points_per_axis() as i64;
    let index = |x: f64| -> usize {
        let s = (wrap_coordinate(x, grid.half_width()) + grid.half_width()) / grid.spacing();
        (s.round() as i64).rem_euclid(n) as usize
    };
    let mut counts = vec![0u64; grid.len()];
    for p in &cloud.positions {
        let k = if grid.dim() == 1 {
            index(p[0])
        } else {
            grid.flatten([index(p[0]), index(p[1])])
        };
        counts[k] += 1;
    }
    counts
}

/// `Δx^d Σ |hist_A - hist_B|` of nearest-cell histograms (each of mass 1).
pub fn empirical_tv(a: &ParticleCloud, b: &ParticleCloud, grid: &Grid) -> Result<f64> {
    if a.dim != grid.dim() || b.dim != grid.dim() {
        return Err(Error::GridMismatch("cloud and grid dimensions differ".into()));
    }
    let ca = nearest_counts(a, grid);
    let cb = nearest_counts(b, grid);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(ca
        .iter()
        .zip(&cb)
        .map(|(x, y)| (*x as f64 / na - *y as f64 / nb).abs())
        .sum())
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level 1%.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.628 * ((n + m) / (n * m)).sqrt()
}
