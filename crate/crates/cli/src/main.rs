//! `chainsense` command line: figure data, sweeps, protocol ensembles, validation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Format, GridValue, Section};

#[derive(Debug, Parser)]
#[command(name = "chainsense", version, about = "Thermal spin-chain magnetometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML file; keys under `[<command>]` set that command's parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (a directory for `protocol`). Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `csv` (default) or `json`.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Base seed for the protocol and the validation grid.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Inverse temperatures, as a list `20,100` or a range `start:stop:step`.
    #[arg(long, global = true)]
    beta: Option<String>,
    /// Chain sizes.
    #[arg(long, global = true)]
    n: Option<String>,
    /// Field axis h/J (J/h for `fig3`).
    #[arg(long = "h-over-j", global = true)]
    h_over_j: Option<String>,
    /// XY anisotropies.
    #[arg(long, global = true)]
    gamma: Option<String>,
    /// Shots per protocol iteration.
    #[arg(long, global = true)]
    nu: Option<usize>,
    /// Protocol iterations per run.
    #[arg(long, global = true)]
    kmax: Option<usize>,
    /// Retuning margin m in `J_{k+1} = h_est + m δh_k`.
    #[arg(long, global = true)]
    margin: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// 𝓕(h)/N against h/J for several temperatures.
    Fig1,
    /// Exact and low-temperature 𝓕(h)/N on the ferromagnetic side.
    Fig2,
    /// 𝓕(J)/N and F(J; Jz)/N against J/h.
    Fig3,
    /// log10 𝓕(h)/N of the XY chain over (h/J, γ).
    Fig4a,
    /// 𝓕(h)/N, F(h; Jz)/N and F(h; Jx²)/N of a short Ising chain.
    Fig4b,
    /// Any exact quantity over a product grid.
    Sweep {
        /// xx or xy.
        #[arg(long)]
        model: Option<String>,
        /// Comma-separated: log_z, free_energy, magnetization, susceptibility, qfi_h, qfi_j.
        #[arg(long)]
        quantities: Option<String>,
    },
    /// Seeded protocol ensembles over N; writes traces and a scaling summary.
    Protocol {
        /// Runs per chain size.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Regression grid against the dense oracle plus internal identities.
    Validate {
        /// Multiplies every tolerance; 0 forces failure.
        #[arg(long)]
        tol_scale: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fig1 => "fig1",
            Command::Fig2 => "fig2",
            Command::Fig3 => "fig3",
            Command::Fig4a => "fig4a",
            Command::Fig4b => "fig4b",
            Command::Sweep { .. } => "sweep",
            Command::Protocol { .. } => "protocol",
            Command::Validate { .. } => "validate",
        }
    }
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Validation(String),
    Run(String),
}

impl From<chainsense::Error> for Failure {
    fn from(e: chainsense::Error) -> Self {
        use chainsense::Error::*;
        match e {
            InvalidSpec(_) | Domain(_) | Resource { .. } | Sweep(_) | Protocol(_) | ModelMismatch { .. } => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Run(e.to_string()),
        }
    }
}

pub struct Global {
    pub command: &'static str,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub threads: Option<usize>,
}

fn resolve(cli: Cli) -> Result<(Global, Section, Command), Failure> {
    let file = match &cli.config {
        Some(p) => config::load(p).map_err(Failure::Config)?,
        None => Default::default(),
    };
    let name = cli.command.name();
    for key in file.sections.keys() {
        if !["fig1", "fig2", "fig3", "fig4a", "fig4b", "sweep", "protocol", "validate"].contains(&key.as_str()) {
            return Err(Failure::Config(format!("unknown config section [{key}]")));
        }
    }
    let base = file.sections.get(name).cloned().unwrap_or_default();
    let text = |s: Option<String>| s.map(GridValue::Text);
    let mut flags = Section {
        beta: text(cli.beta),
        n: text(cli.n),
        h_over_j: text(cli.h_over_j),
        gamma: text(cli.gamma),
        nu: cli.nu,
        kmax: cli.kmax,
        margin: cli.margin,
        ..Default::default()
    };
    match &cli.command {
        Command::Sweep { model, quantities } => {
            flags.model = model.clone();
            flags.quantities = quantities
                .as_ref()
                .map(|q| q.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect());
        }
        Command::Protocol { seeds } => flags.seeds = *seeds,
        Command::Validate { tol_scale } => flags.tol_scale = *tol_scale,
        _ => {}
    }
    let format = cli
        .format
        .or(file.format)
        .unwrap_or_else(|| "csv".into())
        .parse()
        .map_err(Failure::Config)?;
    let threads = cli.threads.or(file.threads);
    if threads == Some(0) {
        return Err(Failure::Config("--threads must be at least 1".into()));
    }
    let global = Global {
        command: name,
        out: cli.out.or(file.out.map(PathBuf::from)),
        format,
        seed: cli.seed.or(file.seed).unwrap_or(0),
        threads,
    };
    Ok((global, base.overlay(flags), cli.command))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (global, params, command) = resolve(cli)?;
    if let Some(t) = global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Run(e.to_string()))?;
    }
    match command {
        Command::Fig1 => commands::fig1(&global, &params),
        Command::Fig2 => commands::fig2(&global, &params),
        Command::Fig3 => commands::fig3(&global, &params),
        Command::Fig4a => commands::fig4a(&global, &params),
        Command::Fig4b => commands::fig4b(&global, &params),
        Command::Sweep { .. } => commands::sweep(&global, &params),
        Command::Protocol { .. } => commands::protocol(&global, &params),
        Command::Validate { .. } => commands::validate(&global, &params),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
