//! `orbach`: simulations, sweeps and fits over config files and CSV data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orbach::OrbachError;

use config::{Model, RunConfig, SOURCES};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("fit did not converge: {0}")]
    NonConvergence(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }
}

impl From<OrbachError> for CliError {
    fn from(e: OrbachError) -> Self {
        match e {
            OrbachError::InvalidParameter(_) | OrbachError::Data(_) => CliError::Config(e.to_string()),
            OrbachError::NonConvergence(_) => CliError::NonConvergence(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "orbach", version, about = "Orbach relaxation models, sweeps and fits for S=1 centers")]
struct Cli {
    /// JSON or TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; CSV goes to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    model: Option<Model>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stick spectrum of the four <111> sites: field_mt,intensity,site,transition.
    EsrSpectrum,
    /// T1 modes and T2 against field angle: theta_deg,t1a_s,t1b_s,t2_s.
    OrientationSweep,
    /// Arrhenius lines: temperature_k,t1_on_axis_s,t1_off_axis_s,t2_s.
    TemperatureSweep,
    /// Synthetic recovery curve: time_s,signal,sigma.
    Decay,
    /// Echo T2 from a flipping-partner bath: temperature_k,density_cm3,flip_rate_hz,t2_s,non_monotone.
    BathSweep,
    /// Biexponential fit of a time_s,signal[,sigma] curve.
    FitBiexp {
        #[arg(long)]
        input: PathBuf,
    },
    /// Arrhenius fit of label,observable,temperature_k,time_s[,sigma_s] rows.
    FitArrhenius {
        #[arg(long)]
        input: PathBuf,
    },
    /// Instantaneous-diffusion fit of theta2_deg,t2_s[,sigma_s] rows.
    FitId {
        #[arg(long)]
        input: PathBuf,
    },
    /// Orientation fit of series,theta_deg,time_s[,sigma_s] rows (series: t1a, t1b, t2).
    FitOrientation {
        #[arg(long)]
        input: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::EsrSpectrum => "esr-spectrum",
            Command::OrientationSweep => "orientation-sweep",
            Command::TemperatureSweep => "temperature-sweep",
            Command::Decay => "decay",
            Command::BathSweep => "bath-sweep",
            Command::FitBiexp { .. } => "fit-biexp",
            Command::FitArrhenius { .. } => "fit-arrhenius",
            Command::FitId { .. } => "fit-id",
            Command::FitOrientation { .. } => "fit-orientation",
        }
    }
}

fn provenance(command: &str, cfg: &RunConfig) -> String {
    let defaults = RunConfig::default();
    let used = [
        ("d_ghz", cfg.spin.d_ghz, defaults.spin.d_ghz),
        ("g_parallel", cfg.spin.g_parallel, defaults.spin.g_parallel),
        ("g_perpendicular", cfg.spin.g_perpendicular, defaults.spin.g_perpendicular),
        ("microwave_ghz", cfg.spin.microwave_ghz, defaults.spin.microwave_ghz),
        ("activation_mev", cfg.orbach.activation_mev, defaults.orbach.activation_mev),
        ("ratio", cfg.orbach.ratio, defaults.orbach.ratio),
        ("t2_sd_s", cfg.background.t2_sd_s, defaults.background.t2_sd_s),
        ("t2_id_s", cfg.background.t2_id_s, defaults.background.t2_id_s),
    ];
    let mut parts = vec![format!(
        "orbach-cli {} {command} model={} seed={}",
        env!("CARGO_PKG_VERSION"),
        match cfg.model {
            Model::Singlet => "singlet",
            Model::Triplet => "triplet",
        },
        cfg.seed
    )];
    let source = |key: &str| SOURCES.iter().find(|(k, _)| *k == key).map_or("", |(_, s)| s);
    for (key, value, default) in used {
        let tag = if value == default { source(key) } else { "user" };
        parts.push(format!("{key}={value} [{tag}]"));
    }
    match cfg.orbach.rate_coefficient {
        Some(c) => parts.push(format!("rate_coefficient={c} [user]")),
        None => parts.push(format!("rate_coefficient=auto [{}]", source("rate_coefficient"))),
    }
    parts.join("; ")
}

fn write_report(cli: &Cli, cfg: &RunConfig, report: &commands::Report) -> Result<(), CliError> {
    let name = cli.command.name();
    let header = provenance(name, cfg);
    let io = |p: &Path, e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", p.display()));
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io(dir, &e))?;
            let path = dir.join(format!("{name}.csv"));
            let file = fs::File::create(&path).map_err(|e| io(&path, &e))?;
            report.table.write(&header, std::io::BufWriter::new(file)).map_err(|e| io(&path, &e))?;
            if let Some(fit) = &report.fit {
                let path = dir.join(format!("{name}.json"));
                fs::write(&path, fit.to_json() + "\n").map_err(|e| io(&path, &e))?;
            }
        }
        None => {
            let stdout = std::io::stdout();
            report.table.write(&header, stdout.lock()).map_err(|e| CliError::Config(e.to_string()))?;
        }
    }
    if let Some(fit) = &report.fit {
        let mut err = std::io::stderr();
        for n in &fit.notices {
            let _ = writeln!(err, "notice: {n}");
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = cli.model {
        cfg.model = m;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(e.to_string()))?;

    let report = pool.install(|| match &cli.command {
        Command::EsrSpectrum => commands::esr_spectrum(&cfg),
        Command::OrientationSweep => commands::orientation_sweep(&cfg),
        Command::TemperatureSweep => commands::temperature_sweep(&cfg),
        Command::Decay => commands::decay(&cfg),
        Command::BathSweep => commands::bath_sweep(&cfg),
        Command::FitBiexp { input } => commands::fit_biexp(input),
        Command::FitArrhenius { input } => commands::fit_arrhenius_cmd(&cfg, input),
        Command::FitId { input } => commands::fit_id(input),
        Command::FitOrientation { input } => commands::fit_orientation(&cfg, input),
    })?;
    write_report(cli, &cfg, &report)?;
    if !report.converged {
        return Err(CliError::NonConvergence("results were written but are not converged".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("orbach: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
