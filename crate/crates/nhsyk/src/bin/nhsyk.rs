use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use nhsyk::action::{baseline, fcs_point_with, fcs_sweep_with, reported, Baseline, Branch};
use nhsyk::analysis::{
    chord_length, classify_from_data, csv_rows, fit_scaling, load_cache, read_csv, results_from_rows, store_cache, write_csv, FitModel, RunConfig,
};
use nhsyk::checks::{self, CheckSettings, Runs};
use nhsyk::contour::{ContourGrid, TwistSpec};
use nhsyk::eft::{
    kernel_m1_volume, m1_volume_eigenvalues, predict_area_f, predict_log_f, reduce_gapless, gapless_closed_form, xy_coefficients, zero_mode_constraints,
};
use nhsyk::saddle::{classify_phase, solve_saddle, ModelParams, Parity};
use nhsyk::solver::Init;
use nhsyk::{Error, Result};

#[derive(Parser)]
#[command(name = "nhsyk", version, about = "Charge statistics of a monitored SYK chain at large N")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for the randomized checks. The solver itself is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Neither read nor write the baseline cache.
    #[arg(long, global = true)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form saddle and phase over a grid of zeta (and V) values.
    Saddle {
        /// Comma-separated zeta values; default is the configured one.
        #[arg(long, value_delimiter = ',')]
        zeta: Vec<f64>,
        /// Comma-separated V values; default is the configured one.
        #[arg(long = "v", value_delimiter = ',')]
        v: Vec<f64>,
    },
    /// One `(phi, |A|)` point.
    Solve {
        #[arg(long, allow_negative_numbers = true)]
        phi: f64,
        #[arg(long)]
        a_size: usize,
    },
    /// The configured `phi x |A|` sweep, written as CSV.
    Sweep,
    /// Fluctuation-kernel report for the configured model.
    Eft,
    /// Fits and phase classification from a sweep CSV.
    Fit {
        csv: PathBuf,
    },
    /// The acceptance suite.
    Check {
        /// Comma-separated criterion ids (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Bracket { .. } => 2,
        Error::NoConvergence { .. } | Error::Continuation { .. } | Error::Singular { .. } => 3,
        Error::Cache(_) | Error::Io(_) | Error::Csv(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let path = common.config.as_deref().ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    if common.no_cache {
        cfg.output.cache = false;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.cmd {
        Cmd::Saddle { zeta, v } => saddle_table(&cli.common, zeta, v),
        Cmd::Solve { phi, a_size } => solve(&load(&cli.common)?, *phi, *a_size),
        Cmd::Sweep => sweep(&load(&cli.common)?),
        Cmd::Eft => eft_report(&load(&cli.common)?.model),
        Cmd::Fit { csv } => fit(csv),
        Cmd::Check { only } => check(&cli.common, only),
    }
}

fn saddle_table(common: &Common, zetas: &[f64], vs: &[f64]) -> Result<u8> {
    let base = match &common.config {
        Some(_) => load(common)?.model,
        None => ModelParams::new(1.0, 0.0, 0.5, 0.5, 20, 1.0),
    };
    let zetas = if zetas.is_empty() { vec![base.zeta] } else { zetas.to_vec() };
    let vs = if vs.is_empty() { vec![base.v] } else { vs.to_vec() };
    println!("{:>8} {:>8} {:>12} {:>12} {:>10} {:>14}", "zeta", "V", "P", "S", "phase", "transition");
    for &v in &vs {
        for &zeta in &zetas {
            let params = ModelParams { zeta, v, ..base };
            let sp = solve_saddle(&params)?;
            let label = classify_phase(&params)?;
            println!("{zeta:>8.4} {v:>8.4} {:>12.8} {:>12.8} {:>10?} {:>14?}", sp.p, sp.s, label.kind, label.transition_order);
        }
    }
    Ok(0)
}

/// The untwisted saddle, read from or written to the cache when enabled.
fn cached_baseline(cfg: &RunConfig, grid: &ContourGrid) -> Result<Baseline> {
    let cache_dir = cfg.output.dir.join("cache");
    if cfg.output.cache {
        if let Some(sol) = load_cache(&cache_dir, &cfg.model, grid, &TwistSpec::none(), &cfg.solver)? {
            eprintln!("baseline: cache hit");
            // Resolving from the cached self-energy is a single cheap check.
            let opts = nhsyk::solver::SolveOptions { init: Init::Continuation(sol.sigma.clone()), ..cfg.solver.clone() };
            return baseline(&cfg.model, grid, &opts);
        }
    }
    let t0 = Instant::now();
    let b = baseline(&cfg.model, grid, &cfg.solver)?;
    eprintln!("baseline: {} iterations, {:.1}s", b.solution.meta.iters, t0.elapsed().as_secs_f64());
    if cfg.output.cache {
        store_cache(&cache_dir, &b.solution, &cfg.solver)?;
    }
    Ok(b)
}

fn solve(cfg: &RunConfig, phi: f64, a_size: usize) -> Result<u8> {
    let grid = cfg.grid()?;
    let twist = TwistSpec { phi, a_size };
    twist.validate(cfg.model.l)?;
    let base = cached_baseline(cfg, &grid)?;
    let r = fcs_point_with(&base, &twist, Branch::FromBelow, &cfg.solver);
    if let Some(e) = r.error {
        return Err(Error::Continuation { phi, message: e });
    }
    let (p, s) = base.solution.bulk_saddle();
    println!("phi = {phi}, |A| = {a_size}, chord = {:.6}", chord_length(a_size, cfg.model.l)?);
    println!("F/N = {:.10} {:+.10}i", r.f_per_n.re, r.f_per_n.im);
    let n = cfg.model.n;
    println!("F at N = {n}: {:.10} {:+.10}i", n * r.f_per_n.re, n * r.f_per_n.im);
    println!("bulk (P, S) at phi = 0: ({p:.6}, {s:.6})");
    if let Some(m) = r.meta {
        println!("iterations {}, final delta {:.2e}, {:.2}s", m.iters, m.final_delta, m.wall_seconds);
    }
    Ok(0)
}

fn sweep(cfg: &RunConfig) -> Result<u8> {
    let grid = cfg.grid()?;
    let base = cached_baseline(cfg, &grid)?;
    let t0 = Instant::now();
    let results = fcs_sweep_with(&base, &cfg.sweep.phis, &cfg.sweep.a_sizes, &cfg.solver);
    let failed = results.iter().filter(|r| !r.converged).count();
    fs::create_dir_all(&cfg.output.dir)?;
    let csv_path = cfg.output.dir.join("sweep.csv");
    write_csv(fs::File::create(&csv_path)?, &csv_rows(&cfg.model, &grid, &results))?;
    fs::write(cfg.output.dir.join("sweep.config.toml"), cfg.to_toml())?;
    eprintln!("{} points ({failed} failed) in {:.1}s -> {}", results.len(), t0.elapsed().as_secs_f64(), csv_path.display());
    Ok(if failed > 0 { 3 } else { 0 })
}

fn eft_report(params: &ModelParams) -> Result<u8> {
    let label = classify_phase(params)?;
    let sp = solve_saddle(params)?;
    println!("phase {:?}, P = {:.8}, S = {:.8}, z = {:.6}", label.kind, sp.p, sp.s, sp.z);
    if sp.s == 0.0 {
        for phi in [PI / 4.0, PI / 2.0, PI] {
            println!("area prediction per site at phi = {phi:.4}: {:.6}", predict_area_f(phi, params)?);
        }
        println!("decay rate 2 sqrt(zeta (zeta - J)) = {:.6}", nhsyk::eft::decay_rate(params)?);
        return Ok(0);
    }
    for omega in [0.0, 0.5, 1.0] {
        for parity in [Parity::Odd, Parity::Even] {
            let k = kernel_m1_volume(omega, parity, &sp, params)?;
            let z = zero_mode_constraints(&k, parity, &sp, params)?;
            let (l3, l4) = m1_volume_eigenvalues(omega, &sp, params);
            println!(
                "Omega = {omega}, {parity:?}: singular values {}, span residual {:.1e}, lambda3 {l3:.6}, lambda4 {l4:.6}",
                z.singular_values.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" "),
                z.span_residual
            );
        }
    }
    let xy = xy_coefficients(&sp, params);
    println!("kappa_t = {:.6}, kappa_x = {:.6}", xy.kappa_t, xy.kappa_x);
    for (k, om) in [(0.05, 0.0), (0.0, 0.05), (0.05, 0.05)] {
        let closed = gapless_closed_form(k, om, &sp, params);
        match reduce_gapless(k, om, &sp, params) {
            Ok(r) => println!("gapless coefficient at (k, Omega) = ({k}, {om}): Schur {r:.6e}, closed form {closed:.6e}"),
            Err(e) => println!("gapless coefficient at (k, Omega) = ({k}, {om}): {e}"),
        }
    }
    for a in [params.l / 4, params.l / 2] {
        println!("log-law prediction at phi = pi/2, |A| = {a}: {:.6}", predict_log_f(PI / 2.0, a, params.l, &sp, params)?);
    }
    Ok(0)
}

fn fit(csv: &Path) -> Result<u8> {
    let rows = read_csv(fs::File::open(csv)?)?;
    let l = rows.first().map(|r| r.l).ok_or_else(|| Error::Config("empty CSV".into()))?;
    let results = reported(&results_from_rows(&rows)?);
    let c = classify_from_data(&results, l, None)?;
    println!("law {:?}{}", c.law, if c.degenerate { " (degenerate)" } else { "" });
    println!("size slice at phi = {:.4}, phi slice at |A| = {}", c.phi, c.a_size);
    for f in [&c.log_fit, &c.cos_fit, &c.phi2_fit] {
        println!("{:?}: slope {:.6}, intercept {:.6}, r2 {:.6}, max residual {:.2e}", f.model, f.slope, f.intercept, f.r_squared, f.residual_max);
    }
    let pts: Vec<(f64, f64)> = results.iter().filter(|r| r.phi == c.phi).map(|r| (chord_length(r.a_size, l).unwrap_or(f64::NAN), r.f_per_n.re)).collect();
    if pts.len() >= 3 {
        let sat = fit_scaling(&pts, FitModel::AreaSaturation)?;
        println!("saturation diagnostic: slope {:.6}", sat.slope);
    }
    Ok(0)
}

fn check(common: &Common, only: &[u32]) -> Result<u8> {
    let mut settings = CheckSettings::default();
    if let Some(seed) = common.seed {
        settings.seed = seed;
    }
    let ids: Vec<u32> = if only.is_empty() { checks::ALL.to_vec() } else { only.to_vec() };
    if let Some(bad) = ids.iter().find(|i| !checks::ALL.contains(i)) {
        return Err(Error::Config(format!("no criterion {bad}")));
    }
    let mut runs = Runs::new(settings);
    let t0 = Instant::now();
    let outcomes = checks::run(&mut runs, &ids, &mut |o| println!("{}", o.line()));
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} passed, {failed} failed in {:.0}s", outcomes.len() - failed, t0.elapsed().as_secs_f64());
    Ok(if failed > 0 { 4 } else { 0 })
}
