use std::f64::consts::PI;

use ddsde::drift::{BuiltinDrift, DriftSpec};
use ddsde::grid::{lp_distance, make_grid, GridDensity, GridFunction};
use ddsde::harness::{cross_validate_mc, SchemeConfig};
use ddsde::heat_kernel::HeatSemigroup;
use ddsde::particles::{
    em_particle_simulate, empirical_tv, kde_density, ks_critical_1pct, ks_two_sample, wrap_coordinate,
    GaussianInit, GridSampler, InitialSampler, KdeConfig, ParticleCloud,
};
use ddsde::stable_noise::{RngStream, StableParams};

fn gaussian_cloud(n: usize, seed: u64) -> ParticleCloud {
    let init = GaussianInit { sigma: 1.0, dim: 1 };
    let mut rng = RngStream::new(seed, 0).rng();
    ParticleCloud::new(0.0, 1, (0..n).map(|_| init.sample(&mut rng)).collect()).unwrap()
}

fn standard_normal(n: usize) -> GridFunction {
    GridFunction::from_fn(make_grid(1, 10.0, n).unwrap(), |x| (-0.5 * x[0] * x[0]).exp() / (2.0 * PI).sqrt())
}

#[test]
fn kde_calibration_on_a_known_law() {
    let grid = make_grid(1, 10.0, 512).unwrap();
    let truth = standard_normal(512);
    let err = |n: usize| {
        let est = kde_density(&gaussian_cloud(n, 1), &KdeConfig::default(), &grid).unwrap();
        lp_distance(&est, &truth, 1.0).unwrap()
    };
    assert!(err(1_000_000) < 0.01);
    let (a, b) = (err(250_000), err(500_000));
    assert!(b < a, "{a} -> {b}");
}

#[test]
fn same_law_histogram_distance_floor() {
    let grid = make_grid(1, 10.0, 128).unwrap();
    let d = empirical_tv(&gaussian_cloud(100_000, 2), &gaussian_cloud(100_000, 3), &grid).unwrap();
    assert!(d < 0.1, "{d}");
}

#[test]
fn zero_drift_cloud_has_the_convolved_law() {
    let p = StableParams::new(1.5, 1).unwrap();
    let grid = make_grid(1, 10.0, 512).unwrap();
    let rho0 = GridDensity::gaussian(grid, 0.5, [0.0, 0.0]).unwrap();
    let n = 20_000;
    let run = em_particle_simulate(
        n,
        &GridSampler::new(&rho0).unwrap(),
        &DriftSpec::zero(1),
        1.0 / 16.0,
        0.5,
        &p,
        &KdeConfig::default(),
        &grid,
        4,
    )
    .unwrap();
    let particles: Vec<f64> = run.last().positions.iter().map(|x| wrap_coordinate(x[0], 10.0)).collect();

    let law = HeatSemigroup::new(p, &grid).unwrap().convolve(0.5, &rho0).unwrap();
    let sampler = GridSampler::new(&law).unwrap();
    let mut rng = RngStream::new(5, 0).rng();
    let direct: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)[0]).collect();
    let d = ks_two_sample(&particles, &direct);
    assert!(d < ks_critical_1pct(n, n), "{d}");
}

#[test]
fn runs_are_reproducible() {
    let p = StableParams::new(1.5, 1).unwrap();
    let grid = make_grid(1, 10.0, 256).unwrap();
    let drift = BuiltinDrift::NemytskiiSat {
        kappa: 1.0,
        direction: ddsde::drift::Direction::Sine,
    }
    .into_spec(1);
    let init = GaussianInit { sigma: 0.5, dim: 1 };
    let run = |seed| {
        em_particle_simulate(5_000, &init, &drift, 0.125, 0.5, &p, &KdeConfig::default(), &grid, seed).unwrap()
    };
    let (a, b, c) = (run(9), run(9), run(10));
    assert_eq!(a.last().positions, b.last().positions);
    assert_eq!(a.bandwidths, b.bandwidths);
    assert_ne!(a.last().positions, c.last().positions);
    assert_eq!(a.clouds.len(), 5);
}

#[test]
fn particle_cross_validation_budgets() {
    let mut zero = SchemeConfig::reference();
    zero.drift = BuiltinDrift::Zero {};
    let r = cross_validate_mc(&zero, 100_000).unwrap();
    assert!(r.gap < 0.03 && r.decreased, "{r:?}");

    let r = cross_validate_mc(&SchemeConfig::reference(), 100_000).unwrap();
    assert!(r.gap < 0.05 && r.decreased, "{r:?}");
    // the α = 1.5 tail alone leaves about 0.6% of particles beyond L = 10
    assert!(r.max_wrap_fraction > 0.0 && r.max_wrap_fraction < 0.01);
    assert!(r.passed);
    assert_eq!(r.h, 1.0 / 32.0);
}
