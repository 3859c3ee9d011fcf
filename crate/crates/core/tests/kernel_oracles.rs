use std::f64::consts::PI;

use ddsde::grid::{make_grid, Grid, OnGrid};
use ddsde::heat_kernel::{kernel_time_holder_check, rho_alpha, suite_grid, HeatSemigroup};
use ddsde::stable_noise::StableParams;

fn semigroup(alpha: f64, dim: usize, grid: &Grid) -> HeatSemigroup {
    let p = StableParams::oracle(alpha, dim).unwrap();
    HeatSemigroup::with_tail_tol(p, grid, f64::INFINITY).unwrap()
}

fn index_of(grid: &Grid, x: f64) -> usize {
    let i = ((x + grid.half_width()) / grid.spacing()).round() as usize;
    assert!((grid.coordinate(i) - x).abs() < 1e-12);
    i
}

#[test]
fn cauchy_pipeline() {
    let grid = make_grid(1, 512.0, 1 << 16).unwrap();
    let q = semigroup(1.0, 1, &grid).raw_kernel(1.0).unwrap();
    for x in [0.0, 1.0, 3.0] {
        let exact = 1.0 / (PI * (1.0 + x * x));
        assert!((q[index_of(&grid, x)] - exact).abs() < 1e-5, "x={x}");
    }

    // periodized Cauchy kernel in closed form
    let grid = make_grid(1, 10.0, 512).unwrap();
    let l = grid.half_width();
    for t in [0.3, 1.0] {
        let q = semigroup(1.0, 1, &grid).raw_kernel(t).unwrap();
        let a = PI * t / l;
        for (i, v) in q.iter().enumerate() {
            let x = grid.coordinate(i);
            let exact = a.sinh() / (2.0 * l * (a.cosh() - (PI * x / l).cos()));
            assert!((v - exact).abs() < 1e-10, "t={t} x={x}");
        }
    }
}

#[test]
fn gaussian_pipeline() {
    let grid = make_grid(1, 10.0, 512).unwrap();
    for t in [0.25, 1.0] {
        let q = semigroup(2.0, 1, &grid).raw_kernel(t).unwrap();
        for (i, v) in q.iter().enumerate() {
            let x = grid.coordinate(i);
            let exact = (-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt();
            assert!((v - exact).abs() < 1e-5, "t={t} x={x}");
        }
    }

    let grid = make_grid(2, 8.0, 128).unwrap();
    let q = semigroup(2.0, 2, &grid).raw_kernel(0.5).unwrap();
    for (k, v) in q.iter().enumerate() {
        let r2 = grid.radius(k).powi(2);
        let exact = (-r2 / 2.0).exp() / (2.0 * PI);
        assert!((v - exact).abs() < 1e-5);
    }
}

#[test]
fn sup_norm_decays_like_the_scaling_exponent() {
    let grid = make_grid(1, 200.0, 1 << 15).unwrap();
    for alpha in [1.2, 1.5, 1.8] {
        let sg = semigroup(alpha, 1, &grid);
        let peak = |t: f64| sg.raw_kernel(t).unwrap().into_iter().fold(0.0, f64::max);
        let slope = (peak(0.1) / peak(0.4)).ln() / (0.1f64 / 0.4).ln();
        assert!((slope + 1.0 / alpha).abs() < 1e-3, "α={alpha}: {slope}");
    }
}

#[test]
fn spectral_gradient_matches_finite_differences() {
    let grid = make_grid(1, 10.0, 2048).unwrap();
    let dx = grid.spacing();
    let n = grid.len();
    for alpha in [1.2, 1.5, 1.8] {
        let sg = semigroup(alpha, 1, &grid);
        let q = sg.raw_kernel(1.0).unwrap();
        let g = &sg.kernel_gradient(1.0).unwrap()[0];
        let scale = g.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0_f64;
        for i in 0..n {
            if grid.coordinate(i).abs() >= grid.half_width() / 4.0 {
                continue;
            }
            let at = |o: isize| q[(i as isize + o).rem_euclid(n as isize) as usize];
            let fd = (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * dx);
            worst = worst.max((g.values()[i] - fd).abs() / scale);
        }
        assert!(worst < 1e-6, "α={alpha}: {worst}");
        assert!(g.values()[grid.len() / 2].abs() < 1e-14);
    }
}

#[test]
fn gradient_bound_constant_is_stable_in_t() {
    let grid = make_grid(1, 256.0, 1 << 15).unwrap();
    let params = StableParams::new(1.5, 1).unwrap();
    let sg = HeatSemigroup::with_tail_tol(params, &grid, f64::INFINITY).unwrap();
    let constant = |t: f64| {
        let g = &sg.kernel_gradient(t).unwrap()[0];
        (0..grid.len())
            .filter(|&i| grid.coordinate(i).abs() <= grid.half_width() / 2.0)
            .map(|i| g.values()[i].abs() / (t.powf(-1.0 / 1.5) * rho_alpha(&params, t, grid.coordinate(i).abs())))
            .fold(0.0, f64::max)
    };
    let cs: Vec<f64> = [1.0, 0.5, 0.25, 0.125].iter().map(|&t| constant(t)).collect();
    for w in cs.windows(2) {
        let r = w[1] / w[0];
        assert!(r.is_finite() && (1.0 / 1.5..=1.5).contains(&r), "{cs:?}");
    }
}

#[test]
fn time_holder_constants_are_stable() {
    let grid = make_grid(1, 64.0, 1 << 13).unwrap();
    for alpha in [1.2, 1.5, 1.8] {
        let params = StableParams::new(alpha, 1).unwrap();
        let mut j0 = Vec::new();
        for (t1, t2) in [(1.0, 1.1), (0.5, 0.6), (0.25, 0.3)] {
            let rows = kernel_time_holder_check(&params, t1, t2, &grid).unwrap();
            let row = rows
                .iter()
                .find(|r| r.order == 0 && (r.beta - (alpha - 1.0)).abs() < 1e-12)
                .unwrap();
            j0.push(row.ratio);
            assert!(rows.iter().filter(|r| r.order == 1).all(|r| r.ratio.is_finite() && r.ratio > 0.0));
        }
        let hi = j0.iter().copied().fold(0.0, f64::max);
        let lo = j0.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(hi / lo < 3.0, "α={alpha}: {j0:?}");
    }
}

#[test]
fn comparison_profile_tail() {
    let params = StableParams::new(1.5, 1).unwrap();
    let x = suite_grid(1).unwrap().half_width() / 2.0;
    let r = rho_alpha(&params, 1.0, x) / x.powf(-2.5);
    assert!((r - 1.0).abs() < 0.05, "{r}");
}
