mod commands;
mod scenario;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Failure, Outcome};
use scenario::{Overrides, Scenario, SchemeSpec};

#[derive(Parser)]
#[command(name = "sticky-wage", version = env!("STICKY_WAGE_VERSION"), about = "Sticky-wage life-cycle portfolio: simulation, verification, robust game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML, or JSON when the extension is .json).
    scenario: PathBuf,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<SchemeSpec>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the closed-form constants and check every standing assumption.
    ParamsCheck(Common),
    /// Simulate the optimally controlled system; writes paths.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write fan charts of total wealth and consumption.
        #[arg(long)]
        svg: bool,
    },
    /// Run Monte Carlo and oracle checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated: markov, gamma, value, positivity, monotonicity, picard.
        #[arg(long, value_delimiter = ',', required = true)]
        which: Vec<String>,
    },
    /// Solve the robust game at the order minimum and stress the saddle point.
    Robust(Common),
    /// Sweep one parameter and print a CSV table.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// rho1, gamma or radius.
        #[arg(long)]
        parameter: String,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 21)]
        steps: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_scheme(s: &str) -> Result<SchemeSpec, String> {
    match s {
        "milstein" => Ok(SchemeSpec::Milstein),
        "euler_maruyama" | "euler-maruyama" => Ok(SchemeSpec::EulerMaruyama),
        _ => Err(format!("unknown scheme {s}")),
    }
}

fn load(c: &Common) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(&c.scenario).map_err(|e| Failure::Input(e.to_string()))?;
    s.apply(&Overrides { h: c.h, horizon: c.horizon, n_paths: c.n_paths, seed: c.seed, gamma: c.gamma, scheme: c.scheme });
    Ok(s)
}

fn emit(text: &str, dest: Option<&PathBuf>) -> Result<(), Failure> {
    match dest {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn finish(o: Outcome, c: &Common) -> Result<(), Failure> {
    emit(&o.json, c.report.as_ref())?;
    if o.pass {
        Ok(())
    } else {
        Err(Failure::Verification(o.summary))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::ParamsCheck(c) => {
            let o = commands::params_check(&load(&c)?)?;
            emit(&o.json, c.report.as_ref())?;
            if o.pass {
                Ok(())
            } else {
                Err(Failure::Assumption(o.summary))
            }
        }
        Command::Simulate { common, out, svg } => {
            let o = commands::simulate(&load(&common)?, &out, svg)?;
            finish(o, &common)
        }
        Command::Verify { common, which } => {
            let o = commands::verify(&load(&common)?, &which)?;
            finish(o, &common)
        }
        Command::Robust(c) => {
            let o = commands::robust(&load(&c)?)?;
            finish(o, &c)
        }
        Command::Sweep { common, parameter, from, to, steps, out } => {
            let csv = commands::sweep(&load(&common)?, &parameter, from, to, steps)?;
            emit(&csv, out.as_ref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sticky-wage: {f}");
            ExitCode::from(f.code() as u8)
        }
    }
}
