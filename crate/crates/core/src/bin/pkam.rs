use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pkam::config::RunConfig;
use pkam::diagnostics::{self, SuiteOptions, Thresholds};
use pkam::diophantine::{scan_divisors, Frequency};
use pkam::error::{Error, Result};
use pkam::io;
use pkam::newton::{self, StepReport};
use pkam::reducibility::TangentFrame;
use pkam::uniqueness::{self, AlignOptions};

/// Invariant tori of presymplectic map families by a spectral quasi-Newton
/// method. Set PKAM_THREADS to cap parallelism and RUST_LOG for progress.
#[derive(Parser)]
#[command(name = "pkam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for one invariant torus.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Torus file to write (the best iterate on failure).
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV run log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Follow a torus along the `[continuation]` schedule of the config.
    Continue {
        #[arg(long)]
        config: PathBuf,
        /// Directory for one torus file per converged stage.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// JSON report on a torus, or on the frequency alone with `--frequency`.
    Diagnose(DiagnoseArgs),
    /// Phase between two tori of the same map.
    Align {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1e-11)]
        tolerance: f64,
        #[arg(long, default_value_t = 30)]
        max_rounds: usize,
        #[arg(long, default_value_t = 0.5)]
        closeness: f64,
    },
    /// Full a-posteriori check of a torus file; exit code 2 if it fails.
    Verify {
        #[arg(long)]
        torus: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    torus: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Only scan the small divisors of the frequency.
    #[arg(long)]
    frequency: bool,
    /// Frequency to scan instead of the config's.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    omega: Option<Vec<f64>>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    radius: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { config, out, log } => cmd_solve(&config, out.as_deref(), log.as_deref()),
        Command::Continue { config, out_dir } => cmd_continue(&config, out_dir.as_deref()),
        Command::Diagnose(args) => cmd_diagnose(&args),
        Command::Align {
            a,
            b,
            tolerance,
            max_rounds,
            closeness,
        } => cmd_align(
            &a,
            &b,
            &AlignOptions {
                tolerance,
                max_rounds,
                closeness,
            },
        ),
        Command::Verify { torus, config } => cmd_verify(&torus, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("PKAM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config(format!("PKAM_THREADS must be a positive integer, got \"{value}\"")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    // a reader that closed the pipe early is not an error
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn log_header(cfg: &RunConfig, freq: &Frequency) -> Result<Vec<String>> {
    Ok(vec![
        format!("pkam {}", env!("CARGO_PKG_VERSION")),
        format!(
            "frequency scan: gamma = {:e}, sigma = {}, radius = {}, worst l = {:?}",
            freq.gamma_estimate, freq.sigma, freq.scan_radius, freq.worst_l
        ),
        cfg.to_toml()?,
    ])
}

fn write_log_file(path: &Path, header: &[String], reports: &[StepReport]) -> Result<()> {
    io::write_log(BufWriter::new(File::create(path)?), header, reports)
}

fn cmd_solve(config: &Path, out: Option<&Path>, log: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let freq = cfg.frequency()?;
    let family = cfg.family.build();
    let s = cfg.structure()?;
    let (k0, lambda0) = cfg.initial()?;
    let mut reports = Vec::new();
    let result = newton::solve_with_observer(&k0, &lambda0, family.as_ref(), &s, &freq, &cfg.solver, |r| {
        reports.push(r.clone())
    });
    if let Some(path) = log {
        write_log_file(path, &log_header(&cfg, &freq)?, &reports)?;
    }
    match result {
        Ok(sol) => {
            if let Some(path) = out {
                io::save_torus(path, &sol.torus, Some(&sol.lambda), Some(&freq.omega))?;
            }
            let check = diagnostics::verify_torus(
                &sol.torus,
                family.as_ref(),
                &sol.lambda,
                &freq.omega,
                cfg.verify.samples,
                cfg.verify.orbit_length,
                cfg.seed,
            );
            print_json(&json!({
                "converged": true,
                "iterations": sol.log.reports.len(),
                "final_error": sol.log.final_error,
                "lambda": sol.lambda,
                "smallness_indicator": sol.log.smallness_indicator,
                "verification": check,
            }))
        }
        Err(Error::NoConvergence { iterations, best }) => {
            if let Some(path) = out {
                io::save_torus(path, &best.torus, Some(&best.lambda), Some(&freq.omega))?;
            }
            Err(Error::NoConvergence { iterations, best })
        }
        Err(e) => Err(e),
    }
}

fn cmd_continue(config: &Path, out_dir: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let sweep = cfg
        .continuation
        .clone()
        .ok_or_else(|| Error::Config("the config has no [continuation] table".into()))?;
    let freq = cfg.frequency()?;
    let s = cfg.structure()?;
    let (k0, lambda0) = cfg.initial()?;
    let result = newton::continue_in_parameter(
        &k0,
        &lambda0,
        &sweep.schedule,
        |value| Ok(cfg.family.with_knob(&sweep.knob, value)?.build()),
        &s,
        &freq,
        &cfg.solver,
    );
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for (i, stage) in result.stages.iter().enumerate() {
            let path = dir.join(format!("stage_{i:03}.json"));
            io::save_torus(&path, &stage.solution.torus, Some(&stage.solution.lambda), Some(&freq.omega))?;
        }
    }
    let stages: Vec<_> = result
        .stages
        .iter()
        .map(|st| {
            json!({
                "knob": st.knob,
                "iterations": st.solution.log.reports.len(),
                "final_error": st.solution.log.final_error,
                "lambda": st.solution.lambda,
                "dk_norm": st.solution.log.reports.last().map(|r| r.dk_norm),
            })
        })
        .collect();
    print_json(&json!({
        "knob": sweep.knob,
        "stages": stages,
        "failure": result.failure.as_ref().map(|(v, e)| json!({"knob": v, "error": e.to_string()})),
    }))?;
    match result.failure {
        Some((_, e)) => Err(e),
        None => Ok(()),
    }
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<()> {
    let cfg = args.config.as_deref().map(RunConfig::load).transpose()?;
    if args.frequency {
        let omega = args
            .omega
            .clone()
            .or_else(|| cfg.as_ref().map(|c| c.frequency.omega.clone()))
            .ok_or_else(|| Error::Config("--frequency needs --omega or --config".into()))?;
        let sigma = args
            .sigma
            .or_else(|| cfg.as_ref().and_then(|c| c.frequency.sigma))
            .unwrap_or(omega.len() as f64);
        let radius = args
            .radius
            .or_else(|| cfg.as_ref().map(|c| c.frequency.scan_radius))
            .unwrap_or(50);
        let freq = Frequency::new(omega, Some(sigma), radius)?;
        let scan = scan_divisors(&freq.omega, sigma, radius)?;
        return print_json(&json!({
            "gamma_estimate": freq.gamma_estimate,
            "sigma": freq.sigma,
            "radius": freq.scan_radius,
            "worst_l": freq.worst_l,
            "smallest_divisors": scan.smallest,
        }));
    }
    let cfg = cfg.ok_or_else(|| Error::Config("diagnose needs --config".into()))?;
    let torus = args
        .torus
        .as_deref()
        .ok_or_else(|| Error::Config("diagnose needs --torus (or --frequency)".into()))?;
    let report = suite(&cfg, torus)?;
    print_json(&serde_json::to_value(&report)?)
}

fn suite(cfg: &RunConfig, torus: &Path) -> Result<diagnostics::DiagnosticReport> {
    let stored = io::load_torus(torus)?;
    let freq = cfg.frequency()?;
    let family = cfg.family.build();
    let s = cfg.structure()?;
    let lambda = stored
        .lambda
        .clone()
        .unwrap_or_else(|| vec![0.0; family.param_dim()]);
    diagnostics::run_suite(
        &stored.torus,
        family.as_ref(),
        &lambda,
        &s,
        &freq.omega,
        &cfg.solver.active(family.param_dim()),
        &SuiteOptions {
            samples: cfg.verify.samples,
            orbit_length: cfg.verify.orbit_length,
            flux_points: cfg.verify.flux_points,
            presymplectic_samples: cfg.verify.presymplectic_samples,
            seed: cfg.seed,
        },
    )
}

fn cmd_align(a: &Path, b: &Path, options: &AlignOptions) -> Result<()> {
    let k1 = io::load_torus(a)?.torus;
    let k2 = io::load_torus(b)?.torus;
    let s = pkam::geometry::PresymplecticStructure::standard(k1.d(), k1.n());
    let frame = TangentFrame::build(&k1, &s, &k1.truncation().padded_grid())?;
    let al = uniqueness::align_phase(&k1, &k2, &frame, options)?;
    print_json(&json!({
        "tau": al.tau,
        "residual": al.residual(),
        "history": al.history,
        "action_offset": al.action_offset,
    }))
}

fn cmd_verify(torus: &Path, config: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let report = suite(&cfg, torus)?;
    let exact = cfg.family.build().exact_at_zero();
    let failures = report.failures(&Thresholds::default(), exact);
    print_json(&json!({
        "certified": failures.is_empty(),
        "failures": failures,
        "report": report,
    }))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::VerificationFailed {
            checks: failures.iter().map(|c| c.to_string()).collect(),
        })
    }
}
