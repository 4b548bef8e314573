use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mprk::conditions::{self, DEFAULT_TOL};
use mprk::harness::{
    self, bundled_experiment, bundled_names, dt_grid, parse_experiment, run_experiment, sweep,
};
use mprk::integrator::{IntegrationConfig, Integrator};
use mprk::precision::PrecisionFlag;
use mprk::problems::ProblemId;
use mprk::tableau::{builtin_names, resolve_method};
use mprk::Result;

/// Mixed-precision Runge-Kutta toolkit.
#[derive(Parser)]
#[command(name = "mprk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the order-condition report for a method.
    Check {
        /// Built-in name, `name+corr<k>`, or a tableau JSON file.
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Run a step-size sweep and write CSV.
    Sweep {
        #[arg(long)]
        method: String,
        /// vdp, diffusion:<N> or dahlquist:<lambda>
        #[arg(long)]
        problem: String,
        /// full, half, single, zero, bits:<t>, tol:<atol> or sibling
        #[arg(long)]
        precision: String,
        /// Smallest step, as a number or `2^-k`. The sweep uses the powers of two in range.
        #[arg(long, value_parser = parse_step)]
        dt_min: f64,
        /// Largest step, as a number or `2^-k`.
        #[arg(long, value_parser = parse_step)]
        dt_max: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment file (or a bundled experiment by name) and check slopes.
    Run {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Take a single step and print stage values.
    Step {
        #[arg(long)]
        method: String,
        #[arg(long)]
        problem: String,
        #[arg(long)]
        precision: String,
        #[arg(long)]
        dt: f64,
    },
    /// List built-in methods, problems and bundled experiments.
    List,
}

fn parse_step(s: &str) -> std::result::Result<f64, String> {
    let v = match s.strip_prefix("2^") {
        Some(k) => k
            .parse::<i32>()
            .map(|k| 2f64.powi(k))
            .map_err(|e| e.to_string())?,
        None => s.parse::<f64>().map_err(|e| e.to_string())?,
    };
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("step must be positive, got {s}"))
    }
}

fn writer(out: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Check { method, tol } => {
            let t = resolve_method(&method)?;
            println!("{}", t.name());
            println!("{}", conditions::report(&t, tol));
        }
        Command::Sweep {
            method,
            problem,
            precision,
            dt_min,
            dt_max,
            out,
        } => {
            // powers of two inside [dt_min, dt_max]
            let k_min = (-dt_max.log2() - 1e-9).ceil().max(0.0) as u32;
            let k_max = (-dt_min.log2() + 1e-9).floor().max(0.0) as u32;
            if dt_min > dt_max || k_min > k_max {
                return Err(mprk::Error::InvalidArgument(format!(
                    "no power-of-two step between {dt_min} and {dt_max}"
                )));
            }
            let t = resolve_method(&method)?;
            let sys = problem.parse::<ProblemId>()?.build()?;
            let mode = precision.parse::<PrecisionFlag>()?.resolve(&sys)?;
            let records = sweep(&t, &sys, &mode, &dt_grid(k_min, k_max));
            for r in &records {
                if let Some(f) = &r.failure {
                    eprintln!("dt={:?}: {f}", r.dt);
                }
            }
            let mut w = writer(out.as_ref())?;
            harness::write_csv(&records, &mut w)?;
            w.flush()?;
        }
        Command::Run { spec, out } => {
            let text = match bundled_experiment(&spec) {
                Some(t) => t.to_string(),
                None => std::fs::read_to_string(&spec)?,
            };
            let entries = parse_experiment(&text)?;
            let outcome = run_experiment(&entries)?;
            if let Some(path) = out {
                let mut w = writer(Some(&path))?;
                harness::write_csv(&outcome.records, &mut w)?;
                w.flush()?;
            }
            for c in &outcome.checks {
                println!("{}", c.summary());
            }
            return Ok(outcome.passed());
        }
        Command::Step {
            method,
            problem,
            precision,
            dt,
        } => {
            let t = resolve_method(&method)?;
            let sys = problem.parse::<ProblemId>()?.build()?;
            let mode = precision.parse::<PrecisionFlag>()?.resolve(&sys)?;
            let integ = Integrator::new(&t, &sys, &mode, IntegrationConfig::new(dt, 1))?;
            let res = integ.step(&sys.initial)?;
            for (i, y) in res.stages.iter().enumerate() {
                println!("stage {i}: {y:?}");
            }
            for s in &res.stats.solves {
                println!(
                    "solve stages {}..{}: {} iterations, residual {:e}{}",
                    s.first_stage,
                    s.first_stage + s.stages,
                    s.iterations,
                    s.residual,
                    if s.stalled { " (stalled)" } else { "" }
                );
            }
            println!("u1: {:?}", res.state);
        }
        Command::List => {
            println!("methods:");
            for n in builtin_names() {
                println!("  {n}");
            }
            println!("problems:\n  vdp\n  diffusion:<N>\n  dahlquist:<lambda>");
            println!("experiments:");
            for n in bundled_names() {
                println!("  {n}");
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
