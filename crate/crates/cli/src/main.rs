use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use num_complex::Complex64;
use scprop::config::{parse_complex_list, ExperimentConfig, Scenario, TGrid, ENV_PREFIX, KEYS};
use scprop::experiments::{configure_threads, run_bvp_solve, run_ho_check, run_kerr_purity, run_propagator};
use scprop::suite::run_property_suite;

/// Semiclassical coherent-state propagation and entanglement purity.
///
/// Settings are layered: built-in defaults, then the `--config` file, then
/// `SCPROP_<KEY>` environment variables, then command-line flags. CSV goes
/// to `--out` (or the `output` key, or stdout); summaries go to stderr.
/// Exit status: 0 when every check passes, 1 when a check fails, 2 on errors.
#[derive(Parser, Debug)]
#[command(name = "scprop", version)]
struct Cli {
    /// Config file of `key = value` lines
    #[arg(long, global = true, env = "SCPROP_CONFIG")]
    config: Option<PathBuf>,

    /// CSV output path
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed of every random draw
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Semiclassical against exact harmonic propagators on the fixed grid
    HoCheck,
    /// Kerr purity curves: pipeline, printed closed form, determinant form, exact
    KerrPurity,
    /// Solve the complexified boundary-value problem and list every solution
    BvpSolve(BvpArgs),
    /// Propagator along the T grid, with the exact value where available
    Propagator(PropagatorArgs),
    /// Every module invariant with fixed seeds
    PropertySuite(SuiteArgs),
}

#[derive(Args, Debug)]
struct Boundary {
    /// Ket amplitudes, comma separated `re+imi`
    #[arg(long, allow_hyphen_values = true)]
    z1: Option<String>,
    /// Bra amplitudes, comma separated `re+imi`
    #[arg(long, allow_hyphen_values = true)]
    z2: Option<String>,
    /// +1 for the propagator, -1 for its conjugate
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<i32>,
    /// Free-end guess (repeatable)
    #[arg(long, allow_hyphen_values = true)]
    guess: Vec<String>,
    /// Boundary residual tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Newton steps per guess
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args, Debug)]
struct BvpArgs {
    #[command(flatten)]
    boundary: Boundary,
    /// Duration
    #[arg(long = "T")]
    duration: Option<f64>,
}

#[derive(Args, Debug)]
struct PropagatorArgs {
    #[command(flatten)]
    boundary: Boundary,
}

#[derive(Args, Debug)]
struct SuiteArgs {
    /// Corrupt one measurement: tangent_det | energy_drift
    #[arg(long)]
    inject_fault: Option<String>,
}

fn key_help() -> String {
    let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (also settable as ");
    s.push_str(ENV_PREFIX);
    s.push_str("<KEY> in upper case):\n");
    for (key, doc) in KEYS {
        s.push_str(&format!("  {key:<width$}  {doc}\n"));
    }
    s.push_str("\nComplex values are written re+imi, e.g. 1, 0.5i, -0.5+2i.");
    s
}

fn apply_boundary(cfg: &mut ExperimentConfig, b: &Boundary) -> Result<()> {
    if let Some(z) = &b.z1 {
        cfg.z1 = Some(parse_complex_list(z)?);
    }
    if let Some(z) = &b.z2 {
        cfg.z2 = Some(parse_complex_list(z)?);
    }
    if let Some(xi) = b.xi {
        cfg.set("xi", &xi.to_string())?;
    }
    if !b.guess.is_empty() {
        cfg.guesses = b
            .guess
            .iter()
            .map(|g| parse_complex_list(g))
            .collect::<scprop::Result<Vec<Vec<Complex64>>>>()?;
    }
    if let Some(tol) = b.tol {
        cfg.bvp_tol = tol;
    }
    if let Some(m) = b.max_iter {
        cfg.bvp_max_iter = m;
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    cfg.apply_env(std::env::vars())?;
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::BvpSolve(args) => {
            apply_boundary(&mut cfg, &args.boundary)?;
            if let Some(t) = args.duration {
                cfg.set_t_grid(TGrid::new(t, t, 1)?);
            }
        }
        Command::Propagator(args) => apply_boundary(&mut cfg, &args.boundary)?,
        Command::PropertySuite(args) => {
            if let Some(f) = &args.inject_fault {
                cfg.set("inject_fault", f)?;
            }
        }
        Command::HoCheck | Command::KerrPurity => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sink(cfg: &ExperimentConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.output {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Runs the subcommand; `Ok(false)` means a check failed.
fn run(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    if let Some(n) = cfg.threads {
        configure_threads(n)?;
    }
    match &cli.command {
        Command::HoCheck => {
            let report = run_ho_check(&cfg)?;
            report.write_csv(sink(&cfg)?)?;
            eprintln!("{} in {:.2} s", report.summary(), report.elapsed.as_secs_f64());
            Ok(report.passed())
        }
        Command::KerrPurity => {
            let report = run_kerr_purity(&cfg)?;
            report.write_csv(sink(&cfg)?)?;
            eprintln!("{}", report.summary());
            Ok(report.passed())
        }
        Command::BvpSolve(_) => {
            let report = run_bvp_solve(&cfg)?;
            report.write_csv(sink(&cfg)?)?;
            eprintln!(
                "bvp-solve: {} solution(s) at T = {}, xi = {}",
                report.solutions.len(),
                report.duration,
                report.xi.sign()
            );
            Ok(true)
        }
        Command::Propagator(_) => {
            let scenario = cfg.scenario.unwrap_or(Scenario::Harmonic);
            let report = run_propagator(&cfg)?;
            report.write_csv(sink(&cfg)?)?;
            let failed = report.rows.iter().filter(|r| r.status != "ok").count();
            eprintln!("propagator ({scenario:?}): {} rows, {failed} failed", report.rows.len());
            Ok(report.passed())
        }
        Command::PropertySuite(_) => {
            let report = run_property_suite(&cfg)?;
            if cfg.output.is_some() {
                report.write_csv(sink(&cfg)?)?;
            }
            println!("{}", report.summary());
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let command = Cli::command().after_long_help(key_help());
    let cli = match Cli::from_arg_matches(&command.get_matches()) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
