//! FFT plumbing for Fourier multipliers on the periodic grid.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

/// Forward/inverse plans for one grid. Cheap to clone; plans are shared.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Angular wavenumbers along one axis, in FFT order.
    wavenumbers: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.points_per_axis();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let base = std::f64::consts::PI / grid.half_width();
        let wavenumbers = (0..n)
            .map(|k| {
                let signed = if k < n / 2 { k as i64 } else { k as i64 - n as i64 };
                signed as f64 * base
            })
            .collect();
        Self {
            grid: *grid,
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Wave vector at a flat spectral index; unused components are zero.
    #[inline]
    pub fn wavevector(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.grid.unflatten(flat);
        if self.grid.dim() == 1 {
            [self.wavenumbers[i], 0.0]
        } else {
            [self.wavenumbers[i], self.wavenumbers[j]]
        }
    }

    #[inline]
    pub fn wavevector_norm(&self, flat: usize) -> f64 {
        let k = self.wavevector(flat);
        (k[0] * k[0] + k[1] * k[1]).sqrt()
    }

    /// True when the per-axis index along `axis` is the Nyquist mode.
    #[inline]
    fn is_nyquist(&self, flat: usize, axis: usize) -> bool {
        self.grid.unflatten(flat)[axis] == self.grid.points_per_axis() / 2
    }

    /// Largest representable |ξ| along an axis.
    pub fn max_wavenumber(&self) -> f64 {
        std::f64::consts::PI / self.grid.spacing()
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        buf
    }

    /// Inverse transform, normalized, real part.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spec, &self.inverse);
        let scale = 1.0 / spec.len() as f64;
        spec.into_iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points_per_axis();
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        if self.grid.dim() == 1 {
            plan.process_with_scratch(buf, &mut scratch);
            return;
        }
        // rows
        for row in buf.chunks_mut(n) {
            plan.process_with_scratch(row, &mut scratch);
        }
        // columns
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = buf[i * n + j];
            }
            plan.process_with_scratch(&mut col, &mut scratch);
            for i in 0..n {
                buf[i * n + j] = col[i];
            }
        }
    }

    /// Applies a radial real multiplier `m(|ξ|)`.
    pub fn apply_radial<M: Fn(f64) -> f64>(&self, values: &[f64], m: M) -> Vec<f64> {
        let mut spec = self.forward(values);
        for (k, c) in spec.iter_mut().enumerate() {
            *c *= m(self.wavevector_norm(k));
        }
        self.inverse_real(spec)
    }

    /// Applies `i ξ_axis · m(|ξ|)`; the Nyquist mode along `axis` is dropped
    /// so the output of a real input stays real.
    pub fn apply_derivative<M: Fn(f64) -> f64>(&self, values: &[f64], axis: usize, m: M) -> Vec<f64> {
        let mut spec = self.forward(values);
        for (k, c) in spec.iter_mut().enumerate() {
            if self.is_nyquist(k, axis) {
                *c = Complex64::new(0.0, 0.0);
                continue;
            }
            let xi = self.wavevector(k)[axis];
            *c *= Complex64::new(0.0, xi) * m(self.wavevector_norm(k));
        }
        self.inverse_real(spec)
    }

    /// Applies `-(ξ_axis)^2`-type second derivatives: `∂_a ∂_b`.
    pub fn apply_second_derivative(&self, values: &[f64], a: usize, b: usize) -> Vec<f64> {
        let mut spec = self.forward(values);
        for (k, c) in spec.iter_mut().enumerate() {
            if (a != b && (self.is_nyquist(k, a) || self.is_nyquist(k, b)))
                || (a == b && self.is_nyquist(k, a))
            {
                *c = Complex64::new(0.0, 0.0);
                continue;
            }
            let w = self.wavevector(k);
            *c *= -w[a] * w[b];
        }
        self.inverse_real(spec)
    }

    /// Fraction of spectral energy in the top quartile of the frequency range
    /// (any axis index with `|k| >= 3n/8`).
    pub fn top_quartile_energy_fraction(&self, values: &[f64]) -> f64 {
        let spec = self.forward(values);
        let n = self.grid.points_per_axis();
        let cut = 3 * n / 8;
        let is_high = |i: usize| {
            let signed = if i < n / 2 { i } else { n - i };
            signed >= cut
        };
        let mut total = 0.0;
        let mut high = 0.0;
        for (k, c) in spec.iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            let [i, j] = self.grid.unflatten(k);
            if is_high(i) || (self.grid.dim() == 2 && is_high(j)) {
                high += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            high / total
        }
    }
}

/// Periodic Lagrange interpolation of grid values at an arbitrary point,
/// using `order` points per axis (even, e.g. 4 or 6).
pub fn interpolate(grid: &Grid, values: &[f64], point: [f64; 2], order: usize) -> f64 {
    let n = grid.points_per_axis() as i64;
    let dx = grid.spacing();
    let half = order as i64 / 2;
    let stencil = |x: f64| -> (i64, Vec<f64>) {
        let s = (x + grid.half_width()) / dx;
        let base = s.floor() as i64 - half + 1;
        let weights = (0..order as i64)
            .map(|a| {
                let xa = (base + a) as f64;
                (0..order as i64)
                    .filter(|&b| b != a)
                    .map(|b| {
                        let xb = (base + b) as f64;
                        (s - xb) / (xa - xb)
                    })
                    .product()
            })
            .collect();
        (base, weights)
    };
    let wrap = |i: i64| i.rem_euclid(n) as usize;
    let (b0, w0) = stencil(point[0]);
    if grid.dim() == 1 {
        return w0
            .iter()
            .enumerate()
            .map(|(a, w)| w * values[wrap(b0 + a as i64)])
            .sum();
    }
    let (b1, w1) = stencil(point[1]);
    let mut acc = 0.0;
    for (a, wa) in w0.iter().enumerate() {
        let i = wrap(b0 + a as i64);
        for (b, wb) in w1.iter().enumerate() {
            let j = wrap(b1 + b as i64);
            acc += wa * wb * values[grid.flatten([i, j])];
        }
    }
    acc
}
