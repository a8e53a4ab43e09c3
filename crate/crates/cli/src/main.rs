use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use qhpm::config::RunConfig;
use qhpm::hpm::solve_cascade_with;
use qhpm::instance::generate_instance;
use qhpm::ode::default_dt;
use qhpm::pipeline::{prepare, run_with_artifacts, sweep, RunReport, SweepParam};
use qhpm::report::{bounds_json, write_order_norms_csv, write_run_outputs, write_sweep_csv, write_vector, EmbedSidecar};
use qhpm::taylor::SolverKind;
use qhpm::{assemble_a, HpmError};

#[derive(Parser)]
#[command(name = "qhpm", version, about = "Homotopy-perturbation embedding and Taylor-marching verifier")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (defaults to the config's output_dir, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Record unmet preconditions as warnings instead of failing.
    #[arg(long, global = true)]
    force: bool,
    /// Seed for generated instances.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline; writes report.json, checks.csv and trajectory.csv.
    Run,
    /// Full pipeline with solver controls.
    Solve {
        #[arg(long, value_parser = parse_solver)]
        solver: Option<SolverKind>,
        #[arg(long)]
        tol: Option<f64>,
        /// Write every step start x_{i,0} as a text vector into this directory.
        #[arg(long)]
        emit_blocks: Option<PathBuf>,
    },
    /// One run per value of a parameter; writes sweep.csv.
    Sweep {
        /// c, k, T or epsilon.
        #[arg(long)]
        param: String,
        /// Comma-separated values, or an integer range `lo..hi` (inclusive).
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Writes the embedded matrix A, y_in and a JSON sidecar.
    Embed {
        #[arg(long)]
        c: Option<usize>,
    },
    /// Perturbation-order norms against their bounds; writes hpm.csv.
    Hpm {
        #[arg(long)]
        c: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Full pipeline; writes and prints the bound checks as JSON.
    Bounds,
    /// Seeded random instance; writes F1.txt, F2.txt and config.json.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s: usize,
        #[arg(long = "k")]
        k_target: f64,
        #[arg(long = "t", default_value_t = 1.0)]
        t_final: f64,
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
    },
}

fn parse_solver(s: &str) -> std::result::Result<SolverKind, String> {
    s.parse().map_err(|e: HpmError| e.to_string())
}

fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: i64 = lo.trim().parse().context("range start")?;
        let hi: i64 = hi.trim().trim_start_matches('=').parse().context("range end")?;
        return Ok((lo..=hi).map(|v| v as f64).collect());
    }
    spec.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad value {v:?}")))
        .collect()
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = match &cli.config {
        Some(p) => p,
        None => bail!(HpmError::InvalidParameter("--config <path> is required".into())),
    };
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    cfg.force |= cli.force;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    if let Some(o) = &cli.out {
        return o.clone();
    }
    if let Some(dir) = cfg.and_then(|c| c.output_dir.as_ref()) {
        return match &cfg.and_then(|c| c.base_dir.clone()) {
            Some(base) if dir.is_relative() => base.join(dir),
            _ => dir.clone(),
        };
    }
    PathBuf::from("out")
}

fn summarize(report: &RunReport) {
    let p = &report.params;
    println!(
        "K = {:.6}  c = {}  N = {}  h = {:.4e}  m = {}  k = {}  p = {}  g = {:.4}  eta = {:.4}",
        report.nonlinearity.k,
        p.c,
        report.structure.n_embedded,
        p.shape.h,
        p.shape.m,
        p.shape.k,
        p.shape.p,
        report.g,
        report.eta
    );
    println!(
        "final_error = {:.6e} (epsilon = {:.1e}) {}",
        report.budget.final_error,
        report.budget.epsilon,
        if report.final_pass { "pass" } else { "FAIL" }
    );
    for (name, c) in &report.checks {
        let status = match (c.precondition_ok, c.pass) {
            (_, true) => "pass",
            (true, false) => "FAIL",
            (false, false) => "fail (precondition unmet)",
        };
        println!("  {name:<20} {status:<26} measured {:.6e}  bound {:.6e}", c.measured, c.bound);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

fn verdict(report: &RunReport) -> ExitCode {
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run => {
            let cfg = load_config(cli)?;
            let art = run_with_artifacts(&cfg)?;
            let dir = out_dir(cli, Some(&cfg));
            write_run_outputs(&art.report, &dir).with_context(|| format!("writing to {}", dir.display()))?;
            summarize(&art.report);
            Ok(verdict(&art.report))
        }
        Command::Solve {
            solver,
            tol,
            emit_blocks,
        } => {
            let mut cfg = load_config(cli)?;
            if solver.is_some() {
                cfg.overrides.solver = *solver;
            }
            if tol.is_some() {
                cfg.overrides.tol = *tol;
            }
            cfg.validate()?;
            let art = run_with_artifacts(&cfg)?;
            let dir = out_dir(cli, Some(&cfg));
            write_run_outputs(&art.report, &dir)?;
            if let Some(bdir) = emit_blocks {
                std::fs::create_dir_all(bdir)?;
                for (i, x) in art.solution.step_starts().iter().enumerate() {
                    write_vector(&bdir.join(format!("x_{i}_0.txt")), x)?;
                }
            }
            println!(
                "solver = {:?}  dim = {}  relative residual = {:.3e}  iterations = {}",
                art.report.solve.solver,
                art.report.solve.dim,
                art.report.solve.relative_residual,
                art.report.solve.iterations
            );
            summarize(&art.report);
            Ok(verdict(&art.report))
        }
        Command::Sweep { param, values } => {
            let cfg = load_config(cli)?;
            let param: SweepParam = param.parse()?;
            let values = parse_values(values)?;
            let rows = sweep(&cfg, param, &values);
            let dir = out_dir(cli, Some(&cfg));
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("sweep.csv");
            write_sweep_csv(&rows, std::fs::File::create(&path)?)?;
            write_sweep_csv(&rows, std::io::stdout())?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} of {} rows failed; see the error column", rows.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Embed { c } => {
            let mut cfg = load_config(cli)?;
            if c.is_some() {
                cfg.overrides.c = *c;
            }
            let prep = prepare(&cfg)?;
            let sys = assemble_a(
                &prep.working,
                prep.order.c,
                &qhpm::embedding::EmbedOptions {
                    n_cap: cfg.overrides.n_cap(),
                    ..Default::default()
                },
            )?;
            let dir = out_dir(cli, Some(&cfg));
            std::fs::create_dir_all(&dir)?;
            sys.a.write_triplets(&dir.join("A.txt"))?;
            write_vector(&dir.join("y_in.txt"), &sys.y_in)?;
            let sidecar = EmbedSidecar::new(&sys.index);
            std::fs::write(dir.join("embed.json"), serde_json::to_string_pretty(&sidecar)?)?;
            println!(
                "c = {}  n = {}  N = {}  nnz(A) = {}  ||A|| = {:.6}  zeta = {:.6}",
                sidecar.c,
                sidecar.n,
                sidecar.n_embedded,
                sys.a.nnz(),
                sys.norm_a,
                prep.zeta
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Hpm { c, dt } => {
            let mut cfg = load_config(cli)?;
            if c.is_some() {
                cfg.overrides.c = *c;
            }
            let prep = prepare(&cfg)?;
            let dt = dt.unwrap_or_else(|| default_dt(prep.working_k.norm_f1, cfg.t_final));
            let cascade = solve_cascade_with(&prep.working, &prep.working_k, prep.order.c, cfg.t_final, dt)?;
            let dir = out_dir(cli, Some(&cfg));
            std::fs::create_dir_all(&dir)?;
            write_order_norms_csv(&cascade.norm_table(), std::fs::File::create(dir.join("hpm.csv"))?)?;
            for i in 0..=cascade.order() {
                println!(
                    "order {i:>2}: max ||nu_i|| = {:.6e}  bound = {:.6e}",
                    cascade.max_order_norm(i),
                    cascade.order_bound(i)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bounds => {
            let cfg = load_config(cli)?;
            let art = run_with_artifacts(&cfg)?;
            let dir = out_dir(cli, Some(&cfg));
            std::fs::create_dir_all(&dir)?;
            let json = bounds_json(&art.report.checks)?;
            std::fs::write(dir.join("bounds.json"), &json)?;
            println!("{json}");
            Ok(verdict(&art.report))
        }
        Command::Gen {
            n,
            s,
            k_target,
            t_final,
            epsilon,
        } => {
            let seed = cli.seed.unwrap_or(0);
            let ode = generate_instance(*n, *s, *k_target, seed)?;
            let dir = out_dir(cli, None);
            std::fs::create_dir_all(&dir)?;
            ode.f1().write_triplets(&dir.join("F1.txt"))?;
            ode.f2().write_triplets(&dir.join("F2.txt"))?;
            let mut cfg = RunConfig::inline(&ode, *t_final, *epsilon);
            cfg.f1_triplets = None;
            cfg.f2_triplets = None;
            cfg.f1_path = Some(PathBuf::from("F1.txt"));
            cfg.f2_path = Some(PathBuf::from("F2.txt"));
            cfg.seed = Some(seed);
            cfg.force = cli.force;
            cfg.validate()?;
            let path = dir.join("config.json");
            std::fs::write(&path, cfg.to_json()?)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// 1 bound violation, 2 validation, precondition or I/O, 3 numerical.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<HpmError>() {
        Some(e) if e.is_bound_violation() => 1,
        Some(e) if e.is_validation() => 2,
        Some(_) => 3,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
