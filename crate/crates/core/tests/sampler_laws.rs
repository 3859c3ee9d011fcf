use std::f64::consts::PI;

use ddsde::grid::{lp_distance, make_grid, GridDensity, OnGrid};
use ddsde::heat_kernel::HeatSemigroup;
use ddsde::particles::{ks_critical_1pct, ks_two_sample, wrap_coordinate};
use ddsde::stable_noise::{
    increment_path, sample_rot_invariant, sample_subordinator, sample_sym_stable_1d, RngStream, StableParams,
};
use statrs::distribution::{Cauchy, ContinuousCDF, Normal};
use statrs::function::gamma::gamma;

fn cms(alpha: f64, t: f64, n: usize, seed: u64) -> Vec<f64> {
    let p = StableParams::new(alpha, 1).unwrap();
    let mut rng = RngStream::new(seed, 0).rng();
    (0..n).map(|_| sample_sym_stable_1d(&p, t, &mut rng).unwrap()).collect()
}

fn subordinated(alpha: f64, dim: usize, t: f64, n: usize, seed: u64) -> Vec<[f64; 2]> {
    let p = StableParams::new(alpha, dim).unwrap();
    let mut rng = RngStream::new(seed, 1).rng();
    (0..n).map(|_| sample_rot_invariant(&p, t, &mut rng).unwrap()).collect()
}

fn empirical_cf(xs: &[f64], xi: f64) -> f64 {
    xs.iter().map(|x| (xi * x).cos()).sum::<f64>() / xs.len() as f64
}

fn one_sample_ks(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn unit_time_characteristic_function() {
    for (k, alpha) in [1.2, 1.5, 1.8].into_iter().enumerate() {
        let xs = cms(alpha, 1.0, 1_000_000, 10 + k as u64);
        for xi in [0.5_f64, 1.0, 2.0] {
            let exact = (-xi.powf(alpha)).exp();
            let got = empirical_cf(&xs, xi);
            assert!((got - exact).abs() <= 0.002, "α={alpha} ξ={xi}: {got} vs {exact}");
        }
    }
}

#[test]
fn median_is_zero() {
    let mut xs = cms(1.5, 1.0, 100_000, 3);
    xs.sort_by(f64::total_cmp);
    let med = 0.5 * (xs[49_999] + xs[50_000]);
    // sd of the sample median is 1 / (2 q(0) sqrt(n))
    let q0 = gamma(1.0 + 1.0 / 1.5) / PI;
    let sd = 1.0 / (2.0 * q0 * (1e5_f64).sqrt());
    assert!(med.abs() < 3.0 * sd, "median {med}, band {}", 3.0 * sd);
}

#[test]
fn self_similarity_in_law() {
    for alpha in [1.2, 1.5, 1.8] {
        let a = cms(alpha, 2.0, 100_000, 21);
        let b: Vec<f64> = cms(alpha, 1.0, 100_000, 22)
            .into_iter()
            .map(|x| 2f64.powf(1.0 / alpha) * x)
            .collect();
        let d = ks_two_sample(&a, &b);
        assert!(d < ks_critical_1pct(a.len(), b.len()), "α={alpha}: D={d}");
    }
}

#[test]
fn degenerate_indices_match_closed_forms() {
    let n = 100_000;
    let crit = 1.628 / (n as f64).sqrt();
    let mut rng = RngStream::new(5, 0).rng();
    let cauchy = StableParams::oracle(1.0, 1).unwrap();
    let mut xs: Vec<f64> = (0..n).map(|_| sample_sym_stable_1d(&cauchy, 1.0, &mut rng).unwrap()).collect();
    let law = Cauchy::new(0.0, 1.0).unwrap();
    assert!(one_sample_ks(&mut xs, |x| law.cdf(x)) < crit);

    let gauss = StableParams::oracle(2.0, 1).unwrap();
    let mut xs: Vec<f64> = (0..n).map(|_| sample_sym_stable_1d(&gauss, 1.0, &mut rng).unwrap()).collect();
    let law = Normal::new(0.0, 2f64.sqrt()).unwrap();
    assert!(one_sample_ks(&mut xs, |x| law.cdf(x)) < crit);
}

#[test]
fn subordinator_laplace_transform_and_support() {
    for alpha in [1.2, 1.5, 1.8] {
        let a = 0.5 * alpha;
        let mut rng = RngStream::new(7, 0).rng();
        let s: Vec<f64> = (0..1_000_000).map(|_| sample_subordinator(a, 1.0, &mut rng).unwrap()).collect();
        assert!(s.iter().all(|&v| v > 0.0));
        let lt = s.iter().map(|v| (-v).exp()).sum::<f64>() / s.len() as f64;
        assert!((lt - (-1f64).exp()).abs() <= 0.002, "α={alpha}: {lt}");

        let t = 3.0;
        let st: Vec<f64> = (0..100_000).map(|_| sample_subordinator(a, t, &mut rng).unwrap()).collect();
        let scaled: Vec<f64> = s[..100_000].iter().map(|v| t.powf(2.0 / alpha) * v).collect();
        assert!(ks_two_sample(&st, &scaled) < ks_critical_1pct(100_000, 100_000));
    }
}

#[test]
fn cms_and_subordination_agree_in_one_dimension() {
    for alpha in [1.2, 1.5, 1.8] {
        let a = cms(alpha, 1.0, 100_000, 31);
        let b: Vec<f64> = subordinated(alpha, 1, 1.0, 100_000, 32).iter().map(|p| p[0]).collect();
        let d = ks_two_sample(&a, &b);
        assert!(d < ks_critical_1pct(a.len(), b.len()), "α={alpha}: D={d}");
    }
}

#[test]
fn planar_draws_are_isotropic() {
    let n = 200_000;
    let draws = subordinated(1.5, 2, 1.0, n, 41);
    let bins = 16;
    let mut counts = vec![0usize; bins];
    for p in &draws {
        let theta = p[1].atan2(p[0]);
        let k = (((theta + PI) / (2.0 * PI)) * bins as f64) as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let expected = n as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // χ²_{15} upper 1% point
    assert!(chi2 < 30.58, "χ² = {chi2}");

    let draws = subordinated(1.5, 2, 1.0, 1_000_000, 42);
    for k in 0..6 {
        let phi = k as f64 * PI / 6.0;
        let (c, s) = (phi.cos(), phi.sin());
        let re = draws.iter().map(|p| (c * p[0] + s * p[1]).cos()).sum::<f64>() / draws.len() as f64;
        let im = draws.iter().map(|p| (c * p[0] + s * p[1]).sin()).sum::<f64>() / draws.len() as f64;
        assert!((re.hypot(im) - (-1f64).exp()).abs() <= 0.003, "direction {phi}: {re}");
    }
}

#[test]
fn increments_compose_to_the_unit_law() {
    let p = StableParams::new(1.5, 1).unwrap();
    let times: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let mut rng = RngStream::new(51, 0).rng();
    let sums: Vec<f64> = (0..50_000)
        .map(|_| increment_path(&p, &times, &mut rng).unwrap().iter().map(|d| d[0]).sum())
        .collect();
    let direct = cms(1.5, 1.0, 50_000, 52);
    assert!(ks_two_sample(&sums, &direct) < ks_critical_1pct(50_000, 50_000));

    let mut a = RngStream::new(53, 0).rng();
    let mut b = RngStream::new(53, 0).rng();
    let single = increment_path(&p, &[0.7], &mut a).unwrap();
    assert_eq!(single, vec![sample_rot_invariant(&p, 0.7, &mut b).unwrap()]);
    assert!(increment_path(&p, &[], &mut a).unwrap().is_empty());
}

#[test]
fn histogram_matches_kernel() {
    let half_width = 20.0;
    let n = 160;
    let grid = make_grid(1, half_width, n).unwrap();
    let params = StableParams::new(1.5, 1).unwrap();
    let table = HeatSemigroup::with_tail_tol(params, &grid, f64::INFINITY)
        .unwrap()
        .kernel(1.0)
        .unwrap();
    let draws = cms(1.5, 1.0, 1_000_000, 61);
    let dx = grid.spacing();
    let mut counts = vec![0.0; n];
    for x in draws {
        let w = wrap_coordinate(x, half_width);
        let k = ((w + half_width) / dx).round() as usize % n;
        counts[k] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    let hist = GridDensity::new(grid, counts.iter().map(|c| c / (total * dx)).collect()).unwrap();
    let d = lp_distance(&hist, &table.density, 1.0).unwrap();
    assert!(d < 0.01, "L1 = {d}");
    assert_eq!(hist.values().len(), n);
}
