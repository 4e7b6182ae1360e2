//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a structural check failed, 2 configuration
//! error, 3 solver or estimator failure.

use clap::{Parser, Subcommand};
use fraclab::config::{FieldKind, RunConfig, StartDist as CfgStart};
use fraclab::drift::{assemble_drift, divergence_certificate, stream_table_from_csv, VectorField};
use fraclab::error::FracError;
use fraclab::first_integrals::{first_integral_space, min_rayleigh};
use fraclab::fractional::{assemble_fraclap, StableParams};
use fraclab::geometry::build_grid;
use fraclab::kernel::{kernel_sum, series_mass, KernelTable, QuadSpec};
use fraclab::mc::{estimate_lambda, PathConfig, StartDist};
use fraclab::output::{
    fmt_float, grid_function_csv, json_bool, json_num, json_object, series_probe_csv,
    singular_values_csv, survival_csv, sweep_csv, OutputWriter,
};
use fraclab::spectral::{
    boundary_decay_check, duality_check, eigen_sweep, h_operator_norm_estimate,
    recursion_identity_residual,
};
use nalgebra::DVector;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "fraclab", version, about = "Spectral laboratory for the fractional Laplacian with large incompressible drift")]
struct Cli {
    /// Flat key=value configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides out.dir from the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed (overrides seed from the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Principal eigenpairs across the configured amplitude list.
    Sweep,
    /// Structural identity checks; exits 1 when any check fails.
    Checks,
    /// Monte Carlo survival-curve estimate of the decay rate.
    Mc,
    /// Perturbation-series terms of the drifted heat kernel.
    KernelSeries,
    /// First-integral space and the variational minimum over it.
    FirstIntegrals,
}

fn load_config(cli: &Cli) -> Result<RunConfig, FracError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn build_field(cfg: &RunConfig) -> Result<VectorField, FracError> {
    Ok(match cfg.field_kind {
        FieldKind::None => VectorField::Zero,
        FieldKind::Rotational => {
            VectorField::Rotational { center: cfg.domain.center(), profile: cfg.profile.clone() }
        }
        FieldKind::Stream => {
            VectorField::Stream { center: cfg.domain.center(), profile: cfg.profile.clone() }
        }
        FieldKind::Constant => VectorField::Constant { dir: cfg.constant_dir },
        FieldKind::CustomStreamTable => {
            let path = cfg.stream_csv.as_ref().ok_or_else(|| {
                FracError::Config("field.csv is required for custom-stream-table".into())
            })?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| FracError::Config(format!("cannot read {path}: {e}")))?;
            stream_table_from_csv(&text, cfg.h)?
        }
        FieldKind::CompressibleControl => VectorField::CompressibleControl,
    })
}

fn peclet_warning(cfg: &RunConfig, field: &VectorField) {
    let (lo, hi) = cfg.domain.bounding_box();
    let bmax = field.sup_norm(lo, hi);
    let a_max = cfg.amplitudes.iter().cloned().fold(0.0_f64, f64::max);
    let peclet = a_max * bmax * cfg.h.powf(cfg.alpha - 1.0);
    if peclet > 10.0 {
        eprintln!(
            "warning: cell Peclet number {peclet:.2} is large; eigenvalues at the top amplitudes may be under-resolved (decrease grid.h)"
        );
    }
}

fn cmd_sweep(cfg: &RunConfig) -> Result<(), FracError> {
    let t0 = Instant::now();
    let grid = build_grid(&cfg.domain, cfg.h, cfg.margin)?;
    let params = StableParams::new(cfg.alpha)?;
    let l0 = assemble_fraclap(&grid, &params)?;
    let field = build_field(cfg)?;
    peclet_warning(cfg, &field);
    let b_unit = match field {
        VectorField::Zero => None,
        ref f => Some(assemble_drift(&grid, f, 1.0)),
    };
    let sweep = eigen_sweep(&l0, b_unit.as_ref(), &cfg.amplitudes, cfg.tol_eigen, 2000)?;
    let writer = OutputWriter::new(cfg.out_dir.as_ref(), &cfg.digest())?;
    writer.write("sweep.csv", &sweep_csv(&sweep), t0.elapsed().as_secs_f64())?;
    let first = &sweep.pairs[0];
    let last = sweep.pairs.last().unwrap();
    writer.write(
        "phi_first.csv",
        &grid_function_csv(&grid, &first.phi, "phi"),
        t0.elapsed().as_secs_f64(),
    )?;
    writer.write(
        "phi_last.csv",
        &grid_function_csv(&grid, &last.phi, "phi"),
        t0.elapsed().as_secs_f64(),
    )?;
    let decay = boundary_decay_check(first, &grid)?;
    let lambdas: Vec<f64> = sweep.rows.iter().map(|r| r.lambda).collect();
    let spread = (lambdas.iter().cloned().fold(f64::MIN, f64::max)
        - lambdas.iter().cloned().fold(f64::MAX, f64::min))
        / lambdas[0].abs();
    let summary = json_object(&[
        ("nodes", grid.len().to_string()),
        ("alpha", json_num(cfg.alpha)),
        ("h", json_num(cfg.h)),
        ("lambda_first", json_num(lambdas[0])),
        ("lambda_last", json_num(*lambdas.last().unwrap())),
        ("relative_spread", json_num(spread)),
        ("boundary_decay_slope", json_num(decay)),
        ("seconds", json_num(t0.elapsed().as_secs_f64())),
    ]);
    writer.write("sweep_summary.json", &summary, t0.elapsed().as_secs_f64())?;
    println!("sweep: {} amplitudes, lambda range [{}, {}], written to {}",
        lambdas.len(), fmt_float(lambdas[0]), fmt_float(*lambdas.last().unwrap()), cfg.out_dir);
    Ok(())
}

struct Check {
    name: &'static str,
    value: f64,
    threshold: f64,
    pass: bool,
}

fn cmd_checks(cfg: &RunConfig) -> Result<bool, FracError> {
    let t0 = Instant::now();
    let grid = build_grid(&cfg.domain, cfg.h, cfg.margin)?;
    let params = StableParams::new(cfg.alpha)?;
    let l0 = assemble_fraclap(&grid, &params)?;
    let field = build_field(cfg)?;
    let n = grid.len();
    let mut checks = Vec::new();
    let mut push = |name, value: f64, threshold: f64| {
        checks.push(Check { name, value, threshold, pass: value <= threshold });
    };

    // Diffusion part: rows must close against the killing column.
    let ones = DVector::from_element(n, 1.0);
    let row_closure = (&l0.matrix * &ones + &l0.killing).amax();
    push("diffusion_row_closure", row_closure, 1e-10 * l0.killing.amax());
    let sym = (&l0.matrix - l0.matrix.transpose()).amax();
    push("diffusion_symmetry", sym, 0.0);

    if !matches!(field, VectorField::Zero) {
        let b = assemble_drift(&grid, &field, 1.0);
        push("divergence_certificate", divergence_certificate(&grid, &field), 1e-10);
        push("drift_skew_symmetry", (&b.matrix + b.matrix.transpose()).amax(), cfg.tol_identity);
        // (Bf, f) = 0 for a skew drift, h²-weighted, on a random probe.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        let f = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let q = (&b.matrix * &f).dot(&f) * grid.h * grid.h;
        push("drift_quadratic_form", q.abs(), 1e-12 * (f.norm_squared() * grid.h * grid.h));
        // Transpose duality (L + B)^T = L - B, exact in exact arithmetic.
        push("transpose_duality", duality_check(&l0, &b), cfg.tol_identity);
        push("resolvent_recursion", recursion_identity_residual(&l0, &b)?, cfg.tol_identity);
        let hnorm = h_operator_norm_estimate(&l0, &b)?;
        println!("checks: |H| estimate at unit amplitude = {}", fmt_float(hnorm));
    }

    let all_pass = checks.iter().all(|c| c.pass);
    let writer = OutputWriter::new(cfg.out_dir.as_ref(), &cfg.digest())?;
    let mut pairs: Vec<(&str, String)> = Vec::new();
    for c in &checks {
        pairs.push((
            c.name,
            json_object(&[
                ("value", json_num(c.value)),
                ("threshold", json_num(c.threshold)),
                ("pass", json_bool(c.pass)),
            ])
            .trim_end()
            .to_string(),
        ));
    }
    pairs.push(("all_pass", json_bool(all_pass)));
    writer.write("checks.json", &json_object(&pairs), t0.elapsed().as_secs_f64())?;
    for c in &checks {
        println!(
            "{} {}: value {} threshold {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            fmt_float(c.value),
            fmt_float(c.threshold)
        );
    }
    Ok(all_pass)
}

fn cmd_mc(cfg: &RunConfig) -> Result<(), FracError> {
    let t0 = Instant::now();
    let field = build_field(cfg)?;
    let amplitude = *cfg.amplitudes.last().unwrap();
    let (lo, hi) = cfg.domain.bounding_box();
    let step = cfg.mc_dt * amplitude * field.sup_norm(lo, hi);
    if step > 0.05 {
        eprintln!(
            "warning: drift displacement per step {step:.3e} is coarse relative to the domain; decrease mc.dt"
        );
    }
    let pc = PathConfig {
        dt: cfg.mc_dt,
        t_max: cfg.mc_t_max,
        n_paths: cfg.mc_n_paths as usize,
        seed: cfg.seed,
        start: match cfg.mc_start {
            CfgStart::Center => StartDist::Fixed(cfg.domain.center()),
            CfgStart::UniformInDomain => StartDist::Uniform,
            CfgStart::Fixed(p) => StartDist::Fixed(p),
        },
    };
    let curve = estimate_lambda(&cfg.domain, &field, amplitude, cfg.alpha, &pc)?;
    let writer = OutputWriter::new(cfg.out_dir.as_ref(), &cfg.digest())?;
    writer.write(
        "survival.csv",
        &survival_csv(&curve.times, &curve.alive_fraction),
        t0.elapsed().as_secs_f64(),
    )?;
    let summary = json_object(&[
        ("amplitude", json_num(amplitude)),
        ("lambda_hat", json_num(curve.lambda_hat)),
        ("stderr", json_num(curve.stderr)),
        ("fit_lo", json_num(curve.fit_window.0)),
        ("fit_hi", json_num(curve.fit_window.1)),
        ("n_paths", curve.n_paths.to_string()),
        ("dt", json_num(curve.dt)),
        ("seed", curve.seed.to_string()),
        ("seconds", json_num(t0.elapsed().as_secs_f64())),
    ]);
    writer.write("mc_summary.json", &summary, t0.elapsed().as_secs_f64())?;
    println!(
        "mc: lambda_hat = {} +- {} at amplitude {}",
        fmt_float(curve.lambda_hat),
        fmt_float(curve.stderr),
        fmt_float(amplitude)
    );
    Ok(())
}

fn cmd_kernel_series(cfg: &RunConfig) -> Result<(), FracError> {
    let t0 = Instant::now();
    let field = build_field(cfg)?;
    let table = KernelTable::build(cfg.alpha);
    let quad = QuadSpec { hq: cfg.kernel_hq, m: cfg.kernel_time_nodes, ..QuadSpec::default() };
    let probes: [([f64; 2], [f64; 2]); 3] =
        [([0.3, 0.1], [-0.2, 0.2]), ([0.35, 0.0], [0.1, 0.45]), ([-0.1, 0.3], [0.5, 0.2])];
    let mut rows = Vec::new();
    let mut ratio_last = 0.0;
    for &(x, y) in &probes {
        let eval = kernel_sum(cfg.kernel_t, x, y, &field, cfg.kernel_n_max, &quad, &table)?;
        for (n, &v) in eval.terms.iter().enumerate() {
            rows.push((n, cfg.kernel_t, x, y, v));
        }
        ratio_last = eval.ratio;
    }
    let mass = series_mass(cfg.kernel_t, probes[0].0, &field, cfg.kernel_n_max, &quad, &table)?;
    let writer = OutputWriter::new(cfg.out_dir.as_ref(), &cfg.digest())?;
    writer.write("series_terms.csv", &series_probe_csv(&rows), t0.elapsed().as_secs_f64())?;
    let summary = json_object(&[
        ("t", json_num(cfg.kernel_t)),
        ("n_max", cfg.kernel_n_max.to_string()),
        ("hq", json_num(quad.hq)),
        ("time_nodes", quad.m.to_string()),
        ("partial_sum_mass", json_num(mass)),
        ("last_probe_ratio", json_num(ratio_last)),
        ("seconds", json_num(t0.elapsed().as_secs_f64())),
    ]);
    writer.write("kernel_summary.json", &summary, t0.elapsed().as_secs_f64())?;
    println!(
        "kernel-series: {} probe evaluations, partial-sum mass {}",
        rows.len(),
        fmt_float(mass)
    );
    Ok(())
}

fn cmd_first_integrals(cfg: &RunConfig) -> Result<(), FracError> {
    let t0 = Instant::now();
    let grid = build_grid(&cfg.domain, cfg.h, cfg.margin)?;
    let params = StableParams::new(cfg.alpha)?;
    let l0 = assemble_fraclap(&grid, &params)?;
    let field = build_field(cfg)?;
    let b = assemble_drift(&grid, &field, 1.0);
    let space = first_integral_space(&b, &l0, cfg.svd_threshold, cfg.energy_cutoff)?;
    let minimum = min_rayleigh(&l0, &space);
    let writer = OutputWriter::new(cfg.out_dir.as_ref(), &cfg.digest())?;
    writer.write(
        "singular_values.csv",
        &singular_values_csv(&space.singular_values, &space.energies),
        t0.elapsed().as_secs_f64(),
    )?;
    if let Some(w) = &minimum.w_star {
        writer.write(
            "w_star.csv",
            &grid_function_csv(&grid, w, "w"),
            t0.elapsed().as_secs_f64(),
        )?;
    }
    let summary = json_object(&[
        ("k", space.k.to_string()),
        ("k_raw", space.k_raw.to_string()),
        ("svd_threshold", json_num(space.threshold)),
        ("energy_cutoff", json_num(cfg.energy_cutoff)),
        ("e_star", json_num(minimum.e_star)),
        ("seconds", json_num(t0.elapsed().as_secs_f64())),
    ]);
    writer.write("first_integrals_summary.json", &summary, t0.elapsed().as_secs_f64())?;
    println!(
        "first-integrals: kept k = {} of {} kernel directions, e_star = {}",
        space.k,
        space.k_raw,
        fmt_float(minimum.e_star)
    );
    Ok(())
}

fn run() -> Result<bool, FracError> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Sweep => cmd_sweep(&cfg).map(|_| true),
        Command::Checks => cmd_checks(&cfg),
        Command::Mc => cmd_mc(&cfg).map(|_| true),
        Command::KernelSeries => cmd_kernel_series(&cfg).map(|_| true),
        Command::FirstIntegrals => cmd_first_integrals(&cfg).map(|_| true),
    }
}

fn main() {
    match run() {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("fraclab: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
