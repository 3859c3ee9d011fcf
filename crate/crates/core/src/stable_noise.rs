//! Samplers for the symmetric, rotationally invariant α-stable process.
//!
//! Normalization shared by every module: `E exp(i ξ·L_t) = exp(-t |ξ|^α)`,
//! so the generator is the Fourier multiplier `-|ξ|^α`.
//!
//! * `d = 1`: Chambers–Mallows–Stuck transform of a uniform angle and a unit
//!   exponential, scaled by `t^(1/α)`.
//! * any `d`: subordination `L_t = W_{S_t}`, where `W` has generator `Δ`
//!   (per-coordinate variance `2s`) and `S_t` is a one-sided `α/2`-stable
//!   subordinator with `E exp(-λ S_t) = exp(-t λ^(α/2))`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    alpha: f64,
    dim: usize,
}

impl StableParams {
    /// `alpha` must lie in the open interval `(1, 2)`.
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (1, 2), got {alpha}"
            )));
        }
        Self::check_dim(dim)?;
        Ok(Self { alpha, dim })
    }

    /// Accepts any `alpha` in `(0, 2]`. Only meant for code-path checks
    /// against closed forms (Cauchy at 1, Gaussian at 2).
    pub fn oracle(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 2], got {alpha}"
            )));
        }
        Self::check_dim(dim)?;
        Ok(Self { alpha, dim })
    }

    fn check_dim(dim: usize) -> Result<()> {
        if dim == 1 || dim == 2 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("dim must be 1 or 2, got {dim}")))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The convergence exponent `(α - 1) / α`.
    pub fn rate_exponent(&self) -> f64 {
        (self.alpha - 1.0) / self.alpha
    }
}

/// A reproducible random stream: identical `(seed, stream_id)` pairs give
/// identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream for a (particle, step) pair, independent of scheduling.
    pub fn for_particle(seed: u64, particle: u64, step: u64) -> Self {
        Self::new(seed, mix64(particle.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ mix64(step)))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("time must be positive, got {t}")))
    }
}

/// Standard symmetric stable draw (`t = 1`) by Chambers–Mallows–Stuck.
fn cms_unit<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (open_unit(rng) - 0.5);
    let w: f64 = Exp1.sample(rng);
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let b = ((v - alpha * v).cos() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// One draw of `L_t` in one dimension, `E exp(iξL_t) = exp(-t|ξ|^α)`.
pub fn sample_sym_stable_1d<R: Rng + ?Sized>(params: &StableParams, t: f64, rng: &mut R) -> Result<f64> {
    if params.dim() != 1 {
        return Err(Error::InvalidParameter("CMS sampler is one-dimensional".into()));
    }
    check_time(t)?;
    Ok(t.powf(1.0 / params.alpha()) * cms_unit(params.alpha(), rng))
}

/// One draw of a one-sided stable subordinator with
/// `E exp(-λ S_t) = exp(-t λ^a)`, `a = alpha_half`.
pub fn sample_subordinator<R: Rng + ?Sized>(alpha_half: f64, t: f64, rng: &mut R) -> Result<f64> {
    if !(alpha_half > 0.5 && alpha_half < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "subordinator index must lie in (1/2, 1), got {alpha_half}"
        )));
    }
    check_time(t)?;
    Ok(t.powf(1.0 / alpha_half) * kanter_unit(alpha_half, rng))
}

/// Kanter's representation of the positive `a`-stable law.
fn kanter_unit<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u = PI * open_unit(rng);
    let w: f64 = Exp1.sample(rng);
    let s1 = (a * u).sin() / u.sin().powf(1.0 / a);
    let s2 = (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a);
    s1 * s2
}

/// One draw of the rotationally invariant `L_t` as `W_{S_t}`. Unused
/// components are zero.
pub fn sample_rot_invariant<R: Rng + ?Sized>(params: &StableParams, t: f64, rng: &mut R) -> Result<[f64; 2]> {
    check_time(t)?;
    let s = t.powf(2.0 / params.alpha()) * kanter_unit(0.5 * params.alpha(), rng);
    let scale = (2.0 * s).sqrt();
    let mut out = [0.0; 2];
    for c in out.iter_mut().take(params.dim()) {
        let z: f64 = StandardNormal.sample(rng);
        *c = scale * z;
    }
    Ok(out)
}

/// Increments `L_{t_k} - L_{t_{k-1}}` (with `t_{-1} = 0`) for strictly
/// increasing positive `times`.
pub fn increment_path<R: Rng + ?Sized>(
    params: &StableParams,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<[f64; 2]>> {
    let mut prev = 0.0;
    for &t in times {
        if !(t > prev) || !t.is_finite() {
            return Err(Error::NonMonotoneTimes);
        }
        prev = t;
    }
    let mut prev = 0.0;
    times
        .iter()
        .map(|&t| {
            let dt = t - prev;
            prev = t;
            sample_rot_invariant(params, dt, rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(StableParams::new(1.0, 1).is_err());
        assert!(StableParams::new(2.0, 1).is_err());
        assert!(StableParams::new(1.5, 3).is_err());
        assert!(StableParams::new(1.5, 2).is_ok());
        assert!(StableParams::oracle(2.0, 1).is_ok());
        assert!((StableParams::new(1.5, 1).unwrap().rate_exponent() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let p = StableParams::new(1.5, 2).unwrap();
        let draw = |s: RngStream| {
            let mut rng = s.rng();
            (0..50)
                .map(|_| sample_rot_invariant(&p, 0.3, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        let a = RngStream::new(7, 11);
        assert_eq!(draw(a), draw(a));
        assert_ne!(draw(a), draw(RngStream::new(7, 12)));
        assert_ne!(
            RngStream::for_particle(1, 2, 3),
            RngStream::for_particle(1, 3, 2)
        );
    }

    #[test]
    fn increment_path_edge_cases() {
        let p = StableParams::new(1.5, 1).unwrap();
        let mut rng = RngStream::new(1, 1).rng();
        assert!(increment_path(&p, &[], &mut rng).unwrap().is_empty());
        assert_eq!(
            increment_path(&p, &[0.5, 0.5], &mut rng),
            Err(Error::NonMonotoneTimes)
        );
        assert_eq!(increment_path(&p, &[0.0], &mut rng), Err(Error::NonMonotoneTimes));

        let single = increment_path(&p, &[0.7], &mut RngStream::new(3, 4).rng()).unwrap();
        let direct = sample_rot_invariant(&p, 0.7, &mut RngStream::new(3, 4).rng()).unwrap();
        assert_eq!(single, vec![direct]);
    }

    #[test]
    fn subordinator_rejects_bad_index() {
        let mut rng = RngStream::new(0, 0).rng();
        assert!(sample_subordinator(0.4, 1.0, &mut rng).is_err());
        assert!(sample_subordinator(1.0, 1.0, &mut rng).is_err());
        assert!(sample_subordinator(0.75, 0.0, &mut rng).is_err());
    }
}
