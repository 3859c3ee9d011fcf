//! Drift coefficients `b(t, x, u)`, the grid-time projection `π_h`, the
//! frozen scheme drift `b^h` and per-step displacement integrals.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `d`-vector with `d <= 2`; components beyond the dimension are zero.
pub type DVec = [f64; 2];

type Evaluator = dyn Fn(f64, &DVec, f64) -> DVec + Send + Sync;

/// Unit-bounded direction fields `v(x)` used by the Nemytskii builtins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `sin(x_i)` per component, scaled by `1/sqrt(d)` in two dimensions.
    Sine,
    /// `tanh(x_i)` per component, scaled by `1/sqrt(d)`.
    Tanh,
    /// `sign(x_i)` per component, scaled by `1/sqrt(d)`.
    Sign,
    /// The first unit vector.
    Unit,
}

impl Direction {
    #[inline]
    pub fn eval(&self, x: &DVec, dim: usize) -> DVec {
        let scale = if dim == 2 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
        let f = |v: f64| -> f64 {
            match self {
                Direction::Sine => v.sin(),
                Direction::Tanh => v.tanh(),
                Direction::Sign => {
                    if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                Direction::Unit => unreachable!(),
            }
        };
        match self {
            Direction::Unit => [1.0, 0.0],
            _ => {
                let mut out = [scale * f(x[0]), 0.0];
                if dim == 2 {
                    out[1] = scale * f(x[1]);
                }
                out
            }
        }
    }
}

/// Serializable drift kinds; the config grammar is
/// `drift = { kind = "nemytskii_sat", kappa = 1.0, direction = "sine" }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinDrift {
    /// `b ≡ 0`.
    Zero {},
    /// `b(t, x, u) = value` (density independent).
    Constant { value: [f64; 2] },
    /// `b(t, x, u) = amplitude * v(x)` (density independent).
    Autonomous { amplitude: f64, direction: Direction },
    /// `b(t, x, u) = kappa * v(x) * u / (1 + u)`.
    NemytskiiSat { kappa: f64, direction: Direction },
    /// `b(t, x, u) = v(x) * min(u, kappa)`.
    NemytskiiTrunc { kappa: f64, direction: Direction },
    /// `b(t, x, u) = u e_1`: unbounded, rejected by [`validate_drift`]. Kept
    /// so guard failures can be provoked from a config file.
    LinearU { kappa: f64 },
}

impl BuiltinDrift {
    /// The declared κ: a simultaneous sup bound and Lipschitz-in-`u`
    /// constant.
    pub fn kappa(&self) -> f64 {
        match *self {
            BuiltinDrift::Zero {} => 0.0,
            BuiltinDrift::Constant { value } => (value[0] * value[0] + value[1] * value[1]).sqrt(),
            BuiltinDrift::Autonomous { amplitude, .. } => amplitude.abs(),
            BuiltinDrift::NemytskiiSat { kappa, .. } => kappa,
            // min(u, κ) is 1-Lipschitz, so the shared constant is max(κ, 1)
            BuiltinDrift::NemytskiiTrunc { kappa, .. } => kappa.max(1.0),
            BuiltinDrift::LinearU { kappa } => kappa,
        }
    }

    pub fn label(&self) -> String {
        match self {
            BuiltinDrift::Zero {} => "zero".into(),
            BuiltinDrift::Constant { .. } => "constant".into(),
            BuiltinDrift::Autonomous { .. } => "autonomous".into(),
            BuiltinDrift::NemytskiiSat { .. } => "nemytskii_sat".into(),
            BuiltinDrift::NemytskiiTrunc { .. } => "nemytskii_trunc".into(),
            BuiltinDrift::LinearU { .. } => "linear_u".into(),
        }
    }

    #[inline]
    fn eval(&self, x: &DVec, u: f64, dim: usize) -> DVec {
        let scaled = |d: DVec, s: f64| [d[0] * s, d[1] * s];
        match *self {
            BuiltinDrift::Zero {} => [0.0, 0.0],
            BuiltinDrift::Constant { value } => {
                if dim == 1 {
                    [value[0], 0.0]
                } else {
                    value
                }
            }
            BuiltinDrift::Autonomous { amplitude, direction } => {
                scaled(direction.eval(x, dim), amplitude)
            }
            BuiltinDrift::NemytskiiSat { kappa, direction } => {
                scaled(direction.eval(x, dim), kappa * u / (1.0 + u))
            }
            BuiltinDrift::NemytskiiTrunc { kappa, direction } => {
                scaled(direction.eval(x, dim), u.min(kappa))
            }
            BuiltinDrift::LinearU { .. } => [u, 0.0],
        }
    }

    pub fn into_spec(self, dim: usize) -> DriftSpec {
        DriftSpec {
            kappa: self.kappa(),
            label: self.label(),
            dim,
            kind: DriftKind::Builtin(self),
        }
    }
}

#[derive(Clone)]
enum DriftKind {
    Builtin(BuiltinDrift),
    Custom(Arc<Evaluator>),
}

/// A drift coefficient together with its declared κ.
#[derive(Clone)]
pub struct DriftSpec {
    kind: DriftKind,
    kappa: f64,
    label: String,
    dim: usize,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("label", &self.label)
            .field("kappa", &self.kappa)
            .field("dim", &self.dim)
            .finish()
    }
}

impl DriftSpec {
    /// Wraps an arbitrary evaluator. Custom drifts cannot be serialized.
    pub fn custom<F>(label: &str, kappa: f64, dim: usize, f: F) -> Self
    where
        F: Fn(f64, &DVec, f64) -> DVec + Send + Sync + 'static,
    {
        Self {
            kind: DriftKind::Custom(Arc::new(f)),
            kappa,
            label: label.to_string(),
            dim,
        }
    }

    pub fn zero(dim: usize) -> Self {
        BuiltinDrift::Zero {}.into_spec(dim)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn builtin(&self) -> Option<&BuiltinDrift> {
        match &self.kind {
            DriftKind::Builtin(b) => Some(b),
            DriftKind::Custom(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, DriftKind::Builtin(BuiltinDrift::Zero {}))
    }

    /// True when `b` does not depend on `t`; the displacement over an
    /// interval is then exactly `length * b`.
    pub fn is_time_independent(&self) -> bool {
        matches!(self.kind, DriftKind::Builtin(_))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &DVec, u: f64) -> DVec {
        match &self.kind {
            DriftKind::Builtin(b) => b.eval(x, u, self.dim),
            DriftKind::Custom(f) => f(t, x, u),
        }
    }
}

/// `π_h(s)`: the largest multiple `jh <= s`. A `1e-12` guard keeps exact
/// multiples from falling into the previous bin.
pub fn pi_h(s: f64, h: f64) -> f64 {
    (s / h + 1e-12).floor() * h
}

/// Index `j` with `π_h(s) = jh`.
pub fn step_index(s: f64, h: f64) -> usize {
    (s / h + 1e-12).floor().max(0.0) as usize
}

/// `b^h(s, x) = 1{s >= h} b(s, x, u)` with `u = ρ^h_{π_h(s)}(x)` supplied by
/// the caller.
pub fn eval_bh(drift: &DriftSpec, s: f64, x: &DVec, u_at_pi: f64, h: f64) -> Result<DVec> {
    if !(u_at_pi >= 0.0) {
        return Err(Error::NegativeDensityInput(u_at_pi));
    }
    if step_index(s, h) == 0 {
        return Ok([0.0, 0.0]);
    }
    Ok(drift.eval(s, x, u_at_pi))
}

const GAUSS3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// `∫_a^b b(s, x, u) ds` with frozen `(x, u)`, 3-point Gauss–Legendre.
#[inline]
pub fn displacement_over(drift: &DriftSpec, a: f64, b: f64, x: &DVec, u: f64) -> DVec {
    let len = b - a;
    if drift.is_time_independent() {
        let v = drift.eval(a, x, u);
        return [len * v[0], len * v[1]];
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * len;
    let mut out = [0.0; 2];
    for (node, w) in GAUSS3_NODES.iter().zip(GAUSS3_WEIGHTS) {
        let v = drift.eval(mid + half * node, x, u);
        out[0] += half * w * v[0];
        out[1] += half * w * v[1];
    }
    out
}

/// `D_k(x) = ∫_{kh}^{(k+1)h} b(s, x, u) ds` for `k >= 1`.
pub fn step_displacement(drift: &DriftSpec, k: usize, h: f64, x: &DVec, u: f64) -> Result<DVec> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "the first step carries no drift; k must be >= 1".into(),
        ));
    }
    if !(u >= 0.0) {
        return Err(Error::NegativeDensityInput(u));
    }
    let a = k as f64 * h;
    Ok(displacement_over(drift, a, a + h, x, u))
}

/// Observed statistics from [`validate_drift`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DriftReport {
    pub max_abs: f64,
    pub max_lipschitz: f64,
    pub kappa: f64,
    pub samples: usize,
}

/// Sampling box for [`validate_drift`].
const VALIDATE_T_MAX: f64 = 4.0;
const VALIDATE_X_MAX: f64 = 20.0;
const VALIDATE_U_MAX: f64 = 25.0;

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Checks `|b| <= κ` and `|b(u1) - b(u2)| <= κ |u1 - u2|` on a Halton
/// sample of `(t, x, u1, u2)`; fails with `DriftViolatesH` beyond
/// `κ (1 + 1e-9)`.
pub fn validate_drift(drift: &DriftSpec, sample_count: usize) -> Result<DriftReport> {
    let mut max_abs = 0.0_f64;
    let mut max_lip = 0.0_f64;
    let norm = |v: DVec| (v[0] * v[0] + v[1] * v[1]).sqrt();
    for i in 1..=sample_count as u64 {
        let t = VALIDATE_T_MAX * halton(i, 2);
        let x = [
            VALIDATE_X_MAX * (2.0 * halton(i, 3) - 1.0),
            if drift.dim() == 2 {
                VALIDATE_X_MAX * (2.0 * halton(i, 5) - 1.0)
            } else {
                0.0
            },
        ];
        // cluster half the u samples near zero where the slopes are largest
        let u1 = VALIDATE_U_MAX * halton(i, 7).powi(if i % 2 == 0 { 1 } else { 3 });
        let u2 = VALIDATE_U_MAX * halton(i, 11).powi(if i % 2 == 0 { 1 } else { 3 });
        let b1 = drift.eval(t, &x, u1);
        let b2 = drift.eval(t, &x, u2);
        max_abs = max_abs.max(norm(b1)).max(norm(b2));
        let du = (u1 - u2).abs();
        if du > 0.0 {
            max_lip = max_lip.max(norm([b1[0] - b2[0], b1[1] - b2[1]]) / du);
        }
    }
    let limit = drift.kappa() * (1.0 + 1e-9);
    if max_abs > limit || max_lip > limit {
        return Err(Error::DriftViolatesH {
            label: drift.label().to_string(),
            max_abs,
            max_lip,
            kappa: drift.kappa(),
        });
    }
    Ok(DriftReport {
        max_abs,
        max_lipschitz: max_lip,
        kappa: drift.kappa(),
        samples: sample_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sat(kappa: f64) -> DriftSpec {
        BuiltinDrift::NemytskiiSat {
            kappa,
            direction: Direction::Sine,
        }
        .into_spec(1)
    }

    #[test]
    fn pi_h_examples() {
        assert!((pi_h(0.37, 0.1) - 0.3).abs() < 1e-15);
        assert_eq!(pi_h(0.3, 0.1), 3.0 * 0.1);
        assert_eq!(pi_h(0.0499, 0.05), 0.0);
        assert_eq!(pi_h(0.0, 0.25), 0.0);
        for j in 0..200 {
            let h = 1.0 / 64.0;
            assert_eq!(pi_h(j as f64 * h, h), j as f64 * h);
        }
    }

    #[test]
    fn eval_bh_examples() {
        let h = 0.1;
        let d = sat(1.0);
        assert_eq!(eval_bh(&d, h / 2.0, &[1.0, 0.0], 3.0, h).unwrap(), [0.0, 0.0]);
        assert_eq!(eval_bh(&DriftSpec::zero(1), 0.7, &[1.0, 0.0], 3.0, h).unwrap(), [0.0, 0.0]);
        assert_eq!(eval_bh(&d, 0.7, &[1.0, 0.0], 0.0, h).unwrap(), [0.0, 0.0]);
        let v = eval_bh(&d, 0.7, &[1.0, 0.0], 1.0, h).unwrap();
        assert!((v[0] - 0.5 * 1f64.sin()).abs() < 1e-15);
        assert_eq!(
            eval_bh(&d, 0.7, &[1.0, 0.0], -1e-3, h),
            Err(Error::NegativeDensityInput(-1e-3))
        );
    }

    #[test]
    fn step_displacement_examples() {
        let h = 0.5;
        let d = sat(1.0);
        let x = [0.8, 0.0];
        let v = d.eval(0.0, &x, 0.4);
        let disp = step_displacement(&d, 1, h, &x, 0.4).unwrap();
        assert_eq!(disp, [h * v[0], h * v[1]]);
        assert_eq!(
            step_displacement(&DriftSpec::zero(1), 3, h, &x, 1.0).unwrap(),
            [0.0, 0.0]
        );
        assert!(step_displacement(&d, 0, h, &x, 0.4).is_err());

        let tau = 2.0 * std::f64::consts::PI;
        let periodic = DriftSpec::custom("sin_t", 1.0, 1, move |s, _, _| [(tau * s).sin(), 0.0]);
        let exact = |a: f64, b: f64| ((tau * a).cos() - (tau * b).cos()) / tau;
        for (a, b) in [(0.25, 0.75), (0.25, 0.5), (0.1, 0.35)] {
            let got = displacement_over(&periodic, a, b, &x, 0.0)[0];
            assert!((got - exact(a, b)).abs() < 1e-4, "{got} vs {}", exact(a, b));
        }
        let got = step_displacement(&periodic, 1, 0.25, &x, 0.0).unwrap()[0];
        assert!((got - 1.0 / tau).abs() < 1e-4);
    }

    #[test]
    fn gauss_rule_is_exact_for_quintics() {
        let quintic = DriftSpec::custom("quintic", 1.0, 1, |s, _, _| {
            [s.powi(5) - 2.0 * s.powi(3) + s, 0.0]
        });
        let got = displacement_over(&quintic, 0.2, 0.9, &[0.0, 0.0], 0.0)[0];
        let anti = |s: f64| s.powi(6) / 6.0 - s.powi(4) / 2.0 + s * s / 2.0;
        assert!((got - (anti(0.9) - anti(0.2))).abs() < 1e-14);
    }

    #[test]
    fn validate_examples() {
        let r = validate_drift(&DriftSpec::zero(1), 1000).unwrap();
        assert_eq!((r.max_abs, r.max_lipschitz), (0.0, 0.0));
        let r = validate_drift(&sat(1.0), 4000).unwrap();
        assert!(r.max_abs <= 1.0 && r.max_lipschitz <= 1.0);
        assert!(r.max_lipschitz > 0.5);
        let unbounded = BuiltinDrift::LinearU { kappa: 1.0 }.into_spec(1);
        assert!(matches!(
            validate_drift(&unbounded, 1000),
            Err(Error::DriftViolatesH { .. })
        ));
        let trunc = BuiltinDrift::NemytskiiTrunc {
            kappa: 0.5,
            direction: Direction::Tanh,
        }
        .into_spec(2);
        assert_eq!(trunc.kappa(), 1.0);
        validate_drift(&trunc, 4000).unwrap();
    }

    #[test]
    fn builtin_serialization() {
        let b: BuiltinDrift =
            toml::from_str("kind = \"nemytskii_sat\"\nkappa = 1.0\ndirection = \"sine\"").unwrap();
        assert_eq!(
            b,
            BuiltinDrift::NemytskiiSat {
                kappa: 1.0,
                direction: Direction::Sine
            }
        );
        assert!(toml::from_str::<BuiltinDrift>("kind = \"zero\"\nkappa = 1.0").is_err());
        assert!(toml::from_str::<BuiltinDrift>("kind = \"wobbly\"").is_err());
    }

    proptest! {
        #[test]
        fn pi_h_projection_properties(s in 0.0f64..50.0, h in 1e-3f64..0.99) {
            let p = pi_h(s, h);
            prop_assert_eq!(pi_h(p, h), p);
            prop_assert!(p <= s + 1e-11 * h);
            prop_assert!(s < p + h);
        }

        #[test]
        fn displacement_is_lipschitz_in_u(x in -10.0f64..10.0, u1 in 0.0f64..5.0, u2 in 0.0f64..5.0, k in 1usize..20, kappa in 0.1f64..2.0) {
            let h = 1.0 / 32.0;
            let d = sat(kappa);
            let a = step_displacement(&d, k, h, &[x, 0.0], u1).unwrap()[0];
            let b = step_displacement(&d, k, h, &[x, 0.0], u2).unwrap()[0];
            prop_assert!((a - b).abs() <= kappa * h * (u1 - u2).abs() * (1.0 + 1e-12) + 1e-300);
            prop_assert!(a.abs() <= kappa * h * (1.0 + 1e-12));
        }

        #[test]
        fn bh_vanishes_on_first_step(s in 0.0f64..0.0999, x in -5.0f64..5.0, u in 0.0f64..10.0) {
            let v = eval_bh(&sat(1.0), s, &[x, 0.0], u, 0.1).unwrap();
            prop_assert_eq!(v, [0.0, 0.0]);
        }
    }
}
