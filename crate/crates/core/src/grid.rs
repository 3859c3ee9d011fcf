//! Truncated uniform grids on `[-L, L]^d` (periodic), grid functions and
//! densities, midpoint quadrature and `L^p` distances.
//!
//! Grid points are `x_i = -L + i * dx`, `i = 0..n`, so `x = 0` sits at index
//! `n / 2` and the mirror image of index `i` is `(n - i) mod n`. Two
//! dimensional values are stored row-major with the first coordinate as the
//! slow index.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default mass tolerance for densities representing probability laws.
pub const DEFAULT_MASS_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points_per_axis: usize,
    spacing: f64,
}

impl Grid {
    /// Builds a grid on `[-half_width, half_width]^dim` with `points_per_axis`
    /// points along each axis.
    pub fn new(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "half_width must be positive, got {half_width}"
            )));
        }
        if points_per_axis % 2 != 0 || points_per_axis < 16 {
            return Err(Error::OddGridSize(points_per_axis));
        }
        Ok(Self {
            dim,
            half_width,
            points_per_axis,
            spacing: 2.0 * half_width / points_per_axis as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of grid cells, `n^dim`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one cell, `dx^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Coordinate of index `i` along one axis.
    #[inline]
    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    /// Per-axis coordinates.
    pub fn axis(&self) -> Vec<f64> {
        (0..self.points_per_axis).map(|i| self.coordinate(i)).collect()
    }

    /// Splits a flat index into per-axis indices.
    #[inline]
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        let n = self.points_per_axis;
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / n, flat % n]
        }
    }

    #[inline]
    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.points_per_axis + idx[1]
        }
    }

    /// Point at a flat index; unused components are zero.
    #[inline]
    pub fn point(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.unflatten(flat);
        if self.dim == 1 {
            [self.coordinate(i), 0.0]
        } else {
            [self.coordinate(i), self.coordinate(j)]
        }
    }

    /// Flat index of the mirror image `x -> -x`.
    #[inline]
    pub fn mirror(&self, flat: usize) -> usize {
        let n = self.points_per_axis;
        let [i, j] = self.unflatten(flat);
        let m = |k: usize| (n - k) % n;
        if self.dim == 1 {
            m(i)
        } else {
            m(i) * n + m(j)
        }
    }

    /// Euclidean norm of the grid point at `flat`.
    #[inline]
    pub fn radius(&self, flat: usize) -> f64 {
        let p = self.point(flat);
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    pub fn evaluate<F: Fn([f64; 2]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|k| f(self.point(k))).collect()
    }
}

/// Convenience wrapper matching the spec-level constructor name.
pub fn make_grid(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Grid> {
    Grid::new(dim, half_width, points_per_axis)
}

/// Anything that lives on a grid as a flat array of values.
pub trait OnGrid {
    fn grid(&self) -> &Grid;
    fn values(&self) -> &[f64];
}

/// A signed function sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn([f64; 2]) -> f64>(grid: Grid, f: F) -> Self {
        let values = grid.evaluate(f);
        Self { grid, values }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Midpoint-rule integral of the function.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// `<self, other>` by midpoint quadrature.
    pub fn inner<G: OnGrid>(&self, other: &G) -> Result<f64> {
        self.grid.check_same(other.grid())?;
        Ok(self.grid.cell_volume()
            * self
                .values
                .iter()
                .zip(other.values())
                .map(|(a, b)| a * b)
                .sum::<f64>())
    }
}

impl OnGrid for GridFunction {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A nonnegative density on a grid (units `1 / length^dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
}

impl OnGrid for GridDensity {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

impl GridDensity {
    /// Wraps values that must already be finite and nonnegative.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "density values must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Clamps negative values to zero. Returns the density and the clamped
    /// (negative) mass that was removed, as a positive number.
    pub fn from_clamped(grid: Grid, mut values: Vec<f64>) -> (Self, f64) {
        let mut clamped = 0.0;
        for v in values.iter_mut() {
            if !v.is_finite() || *v < 0.0 {
                if v.is_finite() {
                    clamped -= *v;
                }
                *v = 0.0;
            }
        }
        (Self { grid, values }, clamped * grid.cell_volume())
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    /// The constant density `1 / (2L)^d`.
    pub fn uniform(grid: Grid) -> Self {
        let v = 1.0 / (2.0 * grid.half_width()).powi(grid.dim() as i32);
        Self {
            values: vec![v; grid.len()],
            grid,
        }
    }

    /// Isotropic Gaussian with standard deviation `sigma`, sampled at grid
    /// points and normalized to unit discrete mass.
    pub fn gaussian(grid: Grid, sigma: f64, center: [f64; 2]) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        let d = grid.dim() as i32;
        let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.5 * d as f64);
        let values = grid.evaluate(|p| {
            let mut r2 = (p[0] - center[0]).powi(2);
            if d == 2 {
                r2 += (p[1] - center[1]).powi(2);
            }
            norm * (-r2 / (2.0 * sigma * sigma)).exp()
        });
        Ok(Self { grid, values }.normalized())
    }

    /// Smooth compactly supported bump `(1 - r^2/w^2)^4` on `r < w`, unit mass.
    pub fn bump(grid: Grid, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidParameter(format!("width must be positive, got {width}")));
        }
        let values = grid.evaluate(|p| {
            let r2 = (p[0] * p[0] + p[1] * p[1]) / (width * width);
            if r2 < 1.0 {
                (1.0 - r2).powi(4)
            } else {
                0.0
            }
        });
        let f = Self { grid, values };
        if f.mass() == 0.0 {
            return Err(Error::InvalidParameter(
                "bump narrower than the grid spacing".into(),
            ));
        }
        Ok(f.normalized())
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn as_function(&self) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.clone(),
        }
    }

    /// `dx^d * sum(values)`.
    pub fn mass(&self) -> f64 {
        mass(self)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(*v))
    }

    /// Rescales to unit mass (no-op for the zero density).
    pub fn normalized(mut self) -> Self {
        let m = self.mass();
        if m > 0.0 {
            let s = 1.0 / m;
            self.values.iter_mut().for_each(|v| *v *= s);
        }
        self
    }

    /// Rescales to the given mass.
    pub fn with_mass(mut self, target: f64) -> Self {
        let m = self.mass();
        if m > 0.0 {
            let s = target / m;
            self.values.iter_mut().for_each(|v| *v *= s);
        }
        self
    }

    /// Mass outside the central box `[-L/2, L/2]^d`.
    pub fn tail_mass(&self) -> f64 {
        let half = 0.5 * self.grid.half_width();
        let vol = self.grid.cell_volume();
        (0..self.grid.len())
            .filter(|&k| {
                let p = self.grid.point(k);
                p[0].abs() > half || (self.grid.dim() == 2 && p[1].abs() > half)
            })
            .map(|k| self.values[k])
            .sum::<f64>()
            * vol
    }

    /// Largest mirror asymmetry `|f(x) - f(-x)|`.
    pub fn mirror_asymmetry(&self) -> f64 {
        (0..self.grid.len())
            .map(|k| (self.values[k] - self.values[self.grid.mirror(k)]).abs())
            .fold(0.0, f64::max)
    }

    /// Checks the mass invariant for probability densities.
    pub fn check_probability(&self, tol: f64) -> Result<()> {
        let m = self.mass();
        if (m - 1.0).abs() > tol {
            return Err(Error::MassLeak {
                leaked: (m - 1.0).abs(),
                tol,
            });
        }
        Ok(())
    }

    /// Writes `coordinate(s),value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(self, w)
    }

    /// Binary dump: `dim` (u64), `L` (f64), `n` (u64), then values as f64,
    /// all little-endian, row-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.dim() as u64).to_le_bytes())?;
        w.write_all(&self.grid.half_width().to_le_bytes())?;
        w.write_all(&(self.grid.points_per_axis() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let dim = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let half_width = f64::from_le_bytes(word);
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        let grid = Grid::new(dim, half_width, n)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut word)?;
            values.push(f64::from_le_bytes(word));
        }
        GridDensity::new(grid, values)
    }
}

/// Midpoint quadrature of a grid density, `dx^d * sum(values)`.
pub fn mass<G: OnGrid>(f: &G) -> f64 {
    f.grid().cell_volume() * f.values().iter().sum::<f64>()
}

/// `(dx^d sum |f - g|^p)^(1/p)`, or `max |f - g|` when `p` is infinite.
///
/// With `p = 1` this is the total variation distance without the factor 1/2.
pub fn lp_distance<F: OnGrid, G: OnGrid>(f: &F, g: &G, p: f64) -> Result<f64> {
    f.grid().check_same(g.grid())?;
    lp_distance_slices(f.values(), g.values(), f.grid().cell_volume(), p)
}

/// `L^p` norm of a grid function.
pub fn lp_norm<F: OnGrid>(f: &F, p: f64) -> Result<f64> {
    let zeros = vec![0.0; f.values().len()];
    lp_distance_slices(f.values(), &zeros, f.grid().cell_volume(), p)
}

pub(crate) fn lp_distance_slices(a: &[f64], b: &[f64], vol: f64, p: f64) -> Result<f64> {
    if p.is_infinite() && p > 0.0 {
        return Ok(a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    if p == 1.0 {
        return Ok(vol * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>());
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum();
    Ok((vol * s).powf(1.0 / p))
}

fn write_csv<G: OnGrid, W: Write>(f: &G, mut w: W) -> Result<()> {
    let grid = f.grid();
    if grid.dim() == 1 {
        writeln!(w, "x,value")?;
    } else {
        writeln!(w, "x1,x2,value")?;
    }
    for (k, v) in f.values().iter().enumerate() {
        let p = grid.point(k);
        if grid.dim() == 1 {
            writeln!(w, "{},{}", p[0], v)?;
        } else {
            writeln!(w, "{},{},{}", p[0], p[1], v)?;
        }
    }
    Ok(())
}

impl GridFunction {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(self, w)
    }
}
