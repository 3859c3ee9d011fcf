use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ddsde::density_scheme::{check_uniform_bound, em_density_evolve_with, SchemeOptions};
use ddsde::drift::{BuiltinDrift, Direction};
use ddsde::fpe_solver::{fpe_solve_with, FpeConfig, Splitting, Transport};
use ddsde::grid::{lp_distance, GridDensity};
use ddsde::harness::diagnostics::kernel_checks;
use ddsde::harness::{
    cross_validate_mc, run_alpha_sweep, run_diagnostics, slopes_increasing, write_rate_csv, Check,
    DiagnosticsReport, Manifest, McReport, ParticleSpec, RateStudyResult, Rho0Spec, SchemeConfig,
};
use ddsde::heat_kernel::HeatSemigroup;
use ddsde::particles::{em_particle_simulate, kde_density, GridSampler, KdeKernel};
use ddsde::stable_noise::{sample_rot_invariant, RngStream, StableParams};
use ddsde::Error;

#[derive(Parser)]
#[command(name = "ddsde", version, about = "Euler-Maruyama density schemes for density-dependent stable SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Heat-kernel table and kernel identity checks.
    Kernel(KernelArgs),
    /// Draws of L_t.
    Sample(SampleArgs),
    /// Deterministic scheme density.
    EmDensity(DensityArgs),
    /// Particle version of the scheme with KDE closure.
    EmParticles(ParticleArgs),
    /// Fokker-Planck reference solution.
    Fpe(FpeArgs),
    /// Convergence-rate study.
    RateStudy(StudyArgs),
    /// Lemma diagnostics and optional particle cross-check.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DriftName {
    Zero,
    NemytskiiSat,
    NemytskiiTrunc,
    Autonomous,
    LinearU,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rho0Name {
    Gaussian,
    Stable,
    UniformBump,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplittingArg {
    Lie,
    Strang,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Upwind1,
    CenteredLimited,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Gaussian,
    Epanechnikov,
}

/// Config file plus per-run overrides; without `--config` the reference
/// problem is the base.
#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long = "L")]
    half_width: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum)]
    drift: Option<DriftName>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_enum)]
    rho0: Option<Rho0Name>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<SchemeConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => SchemeConfig::load(path)?,
            None => SchemeConfig::reference(),
        };
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.dim {
            cfg.dim = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.half_width {
            cfg.half_width = v;
        }
        if let Some(v) = self.n {
            cfg.points = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        let kappa = self.kappa.unwrap_or_else(|| cfg.drift.kappa().max(1.0));
        if let Some(name) = self.drift {
            let direction = Direction::Sine;
            cfg.drift = match name {
                DriftName::Zero => BuiltinDrift::Zero {},
                DriftName::NemytskiiSat => BuiltinDrift::NemytskiiSat { kappa, direction },
                DriftName::NemytskiiTrunc => BuiltinDrift::NemytskiiTrunc { kappa, direction },
                DriftName::Autonomous => BuiltinDrift::Autonomous {
                    amplitude: kappa,
                    direction,
                },
                DriftName::LinearU => BuiltinDrift::LinearU { kappa },
            };
        } else if self.kappa.is_some() {
            cfg.drift = match cfg.drift {
                BuiltinDrift::NemytskiiSat { direction, .. } => BuiltinDrift::NemytskiiSat { kappa, direction },
                BuiltinDrift::NemytskiiTrunc { direction, .. } => BuiltinDrift::NemytskiiTrunc { kappa, direction },
                BuiltinDrift::Autonomous { direction, .. } => BuiltinDrift::Autonomous {
                    amplitude: kappa,
                    direction,
                },
                BuiltinDrift::LinearU { .. } => BuiltinDrift::LinearU { kappa },
                other => other,
            };
        }
        if let Some(name) = self.rho0 {
            cfg.rho0 = match name {
                Rho0Name::Gaussian => Rho0Spec::Gaussian { sigma: 0.5 },
                Rho0Name::Stable => Rho0Spec::Stable { t: 0.1 },
                Rho0Name::UniformBump => Rho0Spec::UniformBump { width: 2.0 },
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path, Error> {
        fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

#[derive(Args)]
struct KernelArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 100_000)]
    count: usize,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    common: Common,
    /// Step; the first ladder entry when absent.
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args)]
struct ParticleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long = "N")]
    count: Option<usize>,
    /// Fixed KDE bandwidth; Silverman's rule when absent.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
}

#[derive(Args)]
struct FpeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, value_enum, default_value = "strang")]
    splitting: SplittingArg,
    #[arg(long, value_enum, default_value = "centered-limited")]
    transport: TransportArg,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated α values; the config's α when absent.
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: Common,
    /// Also cross-validate against this many particles.
    #[arg(long)]
    mc: Option<usize>,
}

fn write_density(dir: &Path, stem: &str, d: &GridDensity) -> Result<(), Error> {
    d.write_csv(BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?))?;
    d.write_binary(BufWriter::new(File::create(dir.join(format!("{stem}.bin")))?))?;
    Ok(())
}

fn emit<T: Serialize>(dir: &Path, command: &str, cfg: SchemeConfig, passed: bool, result: T) -> Result<bool, Error> {
    let m = Manifest::new(command, cfg, passed, result);
    m.write(&dir.join("manifest.json"))?;
    Ok(passed)
}

#[derive(Serialize)]
struct KernelResult {
    t: f64,
    clamped_mass: f64,
    wrapped_tail: f64,
    checks: Vec<Check>,
}

fn cmd_kernel(args: &KernelArgs) -> Result<bool, Error> {
    let cfg = args.common.load()?;
    let dir = args.common.out_dir()?;
    let sg = HeatSemigroup::with_tail_tol(cfg.params()?, &cfg.grid()?, cfg.tail_tol)?;
    let table = sg.kernel(args.t)?;
    write_density(dir, "kernel", &table.density)?;
    let checks = kernel_checks(&cfg)?;
    let passed = checks.iter().all(|c| c.passed);
    let result = KernelResult {
        t: args.t,
        clamped_mass: table.clamped_mass,
        wrapped_tail: sg.wrapped_tail(args.t),
        checks,
    };
    emit(dir, "kernel", cfg, passed, result)
}

#[derive(Serialize)]
struct SampleResult {
    t: f64,
    count: usize,
    /// `(ξ, Re E e^{iξ L_t e_1}, e^{-t|ξ|^α})`.
    characteristic_function: Vec<(f64, f64, f64)>,
    max_deviation: f64,
    threshold: f64,
}

fn cmd_sample(args: &SampleArgs) -> Result<bool, Error> {
    let cfg = args.common.load()?;
    let dir = args.common.out_dir()?;
    let params = cfg.params()?;
    let mut rng = RngStream::new(cfg.seed, 0).rng();
    let draws: Vec<[f64; 2]> = (0..args.count)
        .map(|_| sample_rot_invariant(&params, args.t, &mut rng))
        .collect::<Result<_, _>>()?;
    let mut w = BufWriter::new(File::create(dir.join("samples.csv"))?);
    use std::io::Write;
    if cfg.dim == 1 {
        writeln!(w, "x")?;
        for d in &draws {
            writeln!(w, "{}", d[0])?;
        }
    } else {
        writeln!(w, "x1,x2")?;
        for d in &draws {
            writeln!(w, "{},{}", d[0], d[1])?;
        }
    }
    let cf: Vec<(f64, f64, f64)> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&xi| {
            let emp = draws.iter().map(|d| (xi * d[0]).cos()).sum::<f64>() / draws.len() as f64;
            (xi, emp, (-args.t * f64::powf(xi, cfg.alpha)).exp())
        })
        .collect();
    let max_deviation = cf.iter().map(|(_, e, x)| (e - x).abs()).fold(0.0, f64::max);
    let threshold = 2.0 / (args.count as f64).sqrt();
    let result = SampleResult {
        t: args.t,
        count: args.count,
        characteristic_function: cf,
        max_deviation,
        threshold,
    };
    emit(dir, "sample", cfg, max_deviation < threshold, result)
}

#[derive(Serialize)]
struct DensityResult {
    h: f64,
    times: Vec<f64>,
    masses: Vec<f64>,
    clamped_mass: f64,
    max_tail_mass: f64,
    uniform_bound_ratio: f64,
}

fn cmd_em_density(args: &DensityArgs) -> Result<bool, Error> {
    let cfg = args.common.load()?;
    let dir = args.common.out_dir()?;
    let h = args.h.unwrap_or(cfg.h_ladder[0]);
    let rho_0 = cfg.initial_density()?;
    let params = cfg.params()?;
    let traj = em_density_evolve_with(
        &rho_0,
        &cfg.drift_spec(),
        h,
        cfg.horizon,
        &params,
        &[],
        SchemeOptions {
            tail_tol: cfg.tail_tol,
            mass_tol: cfg.mass_tol,
        },
    )?;
    for (j, d) in traj.densities.iter().enumerate() {
        d.write_csv(BufWriter::new(File::create(dir.join(format!("density_{j:05}.csv")))?))?;
    }
    write_density(dir, "density_final", traj.last().1)?;
    let masses: Vec<f64> = traj.densities.iter().map(|d| d.mass()).collect();
    let mass_ok = masses.iter().all(|m| (1.0 - m).abs() <= cfg.mass_tol);
    let result = DensityResult {
        h,
        times: traj.times.clone(),
        masses,
        clamped_mass: traj.clamped_mass,
        max_tail_mass: traj.max_tail_mass,
        uniform_bound_ratio: check_uniform_bound(&traj, &rho_0, &params)?.max_ratio,
    };
    let passed = mass_ok && traj.clamped_mass < 1e-5;
    emit(dir, "em-density", cfg, passed, result)
}

#[derive(Serialize)]
struct ParticleResult {
    count: usize,
    h: f64,
    bandwidths: Vec<f64>,
    max_wrap_fraction: f64,
    gap_to_scheme: f64,
    budget: f64,
}

fn cmd_em_particles(args: &ParticleArgs) -> Result<bool, Error> {
    let mut cfg = args.common.load()?;
    let dir = args.common.out_dir()?;
    let mut spec = cfg.particle_spec();
    if let Some(h) = args.h {
        spec.h = h;
    }
    if let Some(n) = args.count {
        spec.count = n;
    }
    if let Some(b) = args.bandwidth {
        spec.bandwidth = Some(b);
    }
    if let Some(k) = args.kernel {
        spec.kernel = match k {
            KernelArg::Gaussian => KdeKernel::Gaussian,
            KernelArg::Epanechnikov => KdeKernel::Epanechnikov,
        };
    }
    cfg.particles = Some(spec);
    cfg.validate()?;
    let ParticleSpec { count, h, .. } = spec;
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let rho_0 = cfg.initial_density()?;
    let drift = cfg.drift_spec();
    let run = em_particle_simulate(
        count,
        &GridSampler::new(&rho_0)?,
        &drift,
        h,
        cfg.horizon,
        &params,
        &spec.kde(),
        &grid,
        cfg.seed,
    )?;
    let kde = kde_density(run.last(), &spec.kde(), &grid)?;
    write_density(dir, "kde_final", &kde)?;
    let traj = em_density_evolve_with(
        &rho_0,
        &drift,
        h,
        cfg.horizon,
        &params,
        &[],
        SchemeOptions {
            tail_tol: cfg.tail_tol,
            mass_tol: cfg.mass_tol,
        },
    )?;
    let gap = lp_distance(&kde, traj.last().1, 1.0)?;
    let budget = if drift.is_zero() { 0.03 } else { 0.05 };
    let result = ParticleResult {
        count,
        h,
        bandwidths: run.bandwidths.clone(),
        max_wrap_fraction: run.max_wrap_fraction,
        gap_to_scheme: gap,
        budget,
    };
    emit(dir, "em-particles", cfg, gap < budget, result)
}

#[derive(Serialize)]
struct FpeResult {
    config: FpeConfig,
    steps: usize,
    final_mass: f64,
    clamped_mass: f64,
}

fn cmd_fpe(args: &FpeArgs) -> Result<bool, Error> {
    let cfg = args.common.load()?;
    let dir = args.common.out_dir()?;
    let fpe = FpeConfig {
        dt: args.dt,
        splitting: match args.splitting {
            SplittingArg::Lie => Splitting::Lie,
            SplittingArg::Strang => Splitting::Strang,
        },
        transport: match args.transport {
            TransportArg::Upwind1 => Transport::Upwind1,
            TransportArg::CenteredLimited => Transport::CenteredLimited,
        },
    };
    let traj = fpe_solve_with(
        &cfg.initial_density()?,
        &cfg.drift_spec(),
        &cfg.params()?,
        cfg.horizon,
        &fpe,
        cfg.tail_tol,
    )?;
    write_density(dir, "fpe_final", traj.last())?;
    let final_mass = traj.last().mass();
    let passed = (final_mass - 1.0).abs() < 1e-8 && traj.clamped_mass < 1e-6;
    let result = FpeResult {
        config: fpe,
        steps: traj.times.len() - 1,
        final_mass,
        clamped_mass: traj.clamped_mass,
    };
    emit(dir, "fpe", cfg, passed, result)
}

#[derive(Serialize)]
struct StudyResult {
    studies: Vec<RateStudyResult>,
    slopes_increasing: Option<bool>,
}

fn cmd_rate_study(args: &StudyArgs) -> Result<bool, Error> {
    let cfg = args.common.load()?;
    let dir = args.common.out_dir()?;
    let alphas = if args.alphas.is_empty() {
        vec![cfg.alpha]
    } else {
        args.alphas.clone()
    };
    for &a in &alphas {
        StableParams::new(a, cfg.dim).map_err(|e| Error::Config(e.to_string()))?;
    }
    let studies = run_alpha_sweep(&cfg, &alphas)?;
    write_rate_csv(BufWriter::new(File::create(dir.join("errors.csv"))?), &cfg, &studies)?;
    let ordering = (studies.len() > 1).then(|| slopes_increasing(&studies));
    let passed = studies.iter().all(|s| s.passed) && ordering.unwrap_or(true);
    emit(
        dir,
        "rate-study",
        cfg,
        passed,
        StudyResult {
            studies,
            slopes_increasing: ordering,
        },
    )
}

#[derive(Serialize)]
struct DiagnoseResult {
    diagnostics: DiagnosticsReport,
    cross_validation: Option<McReport>,
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<bool, Error> {
    let cfg = args.common.load()?;
    let dir = args.common.out_dir()?;
    let diagnostics = run_diagnostics(&cfg);
    let cross_validation = match args.mc {
        Some(n) => Some(cross_validate_mc(&cfg, n)?),
        None => None,
    };
    let passed = diagnostics.passed && cross_validation.as_ref().is_none_or(|m| m.passed);
    for c in &diagnostics.checks {
        println!("{:<28} {} {:e} ({})", c.name, if c.passed { "PASS" } else { "FAIL" }, c.statistic, c.threshold);
    }
    if let Some(m) = &cross_validation {
        println!("{:<28} {} {:e} (< {})", "particle_cross_check", if m.passed { "PASS" } else { "FAIL" }, m.gap, m.budget);
    }
    emit(
        dir,
        "diagnose",
        cfg,
        passed,
        DiagnoseResult {
            diagnostics,
            cross_validation,
        },
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Kernel(a) => cmd_kernel(a),
        Command::Sample(a) => cmd_sample(a),
        Command::EmDensity(a) => cmd_em_density(a),
        Command::EmParticles(a) => cmd_em_particles(a),
        Command::Fpe(a) => cmd_fpe(a),
        Command::RateStudy(a) => cmd_rate_study(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed; see manifest.json");
            ExitCode::from(1)
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
