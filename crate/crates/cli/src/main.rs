mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "maslov-wave", version, about = "Traveling pulses, their Maslov index and stability checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// eps = 0 orbit samples and the singular constants.
    SingularOrbit(Common),
    /// Pulse profiles and speeds over eps_list (or eps).
    SolveWave(Common),
    /// Conjugate-point ledger and the beta(z) trace.
    Maslov(Common),
    /// Corner inequalities over an a-grid and the fixed planes on Lambda(2).
    Corners(Common),
    /// Detection form between E^u and E^s over a lambda grid.
    SpectrumScan(Common),
    /// Perturbed pulse evolved in the co-moving frame.
    PdeSim(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> anyhow::Result<RunConfig> {
        RunConfig::load(&self.config, &Overrides { a: self.a, gamma: self.gamma, eps: self.eps, out: self.out.clone() })
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let (name, common) = match &cli.cmd {
        Cmd::SingularOrbit(c) => ("singular-orbit", c),
        Cmd::SolveWave(c) => ("solve-wave", c),
        Cmd::Maslov(c) => ("maslov", c),
        Cmd::Corners(c) => ("corners", c),
        Cmd::SpectrumScan(c) => ("spectrum-scan", c),
        Cmd::PdeSim(c) => ("pde-sim", c),
    };
    let cfg = common.load()?;
    let code = match name {
        "singular-orbit" => commands::singular_orbit(&cfg).map(|_| ExitCode::SUCCESS)?,
        "solve-wave" => {
            if commands::solve_wave(&cfg)? {
                ExitCode::SUCCESS
            } else {
                eprintln!("some eps values could not be solved; see speeds.json");
                ExitCode::from(2)
            }
        }
        "maslov" => {
            print!("{}", commands::maslov(&cfg)?);
            ExitCode::SUCCESS
        }
        "corners" => commands::corners(&cfg).map(|_| ExitCode::SUCCESS)?,
        "spectrum-scan" => {
            let n = commands::spectrum_scan(&cfg)?;
            println!("sign changes: {n}");
            ExitCode::SUCCESS
        }
        _ => commands::pde_sim(&cfg).map(|_| ExitCode::SUCCESS)?,
    };
    Ok(code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            let body = serde_json::json!({ "schema_version": output::SCHEMA_VERSION, "error": chain[0], "causes": &chain[1..] });
            eprintln!("{}", serde_json::to_string(&body).expect("json"));
            ExitCode::FAILURE
        }
    }
}
