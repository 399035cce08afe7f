use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::RunConfig;

/// Delay-Doppler scattering function identification with weighted delta trains.
#[derive(Debug, Parser)]
#[command(name = "scid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write grid manifest, mask, weights and scattering function.
    Gen,
    /// Simulate an echo ensemble of `L` echoes.
    Sound,
    /// Reconstruct the scattering function.
    Identify {
        #[arg(long, value_enum, default_value_t = Mode::Oracle, global = true)]
        mode: Mode,
    },
    /// Monte Carlo bias/variance report.
    Analyze,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// From the exact autocorrelation of the true scattering function.
    Oracle,
    /// From a recorded echo ensemble.
    Estimate,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Config keys settable from the command line; these win over the file.
#[derive(Debug, Args)]
struct Overrides {
    #[arg(long = "J", global = true)]
    j: Option<String>,
    #[arg(long = "T", global = true)]
    t: Option<String>,
    #[arg(long = "n_t", global = true)]
    n_t: Option<String>,
    #[arg(long = "n_g", global = true)]
    n_g: Option<String>,
    #[arg(long = "n_a", global = true)]
    n_a: Option<String>,
    #[arg(long = "n_b", global = true)]
    n_b: Option<String>,
    /// Mask file path.
    #[arg(long, global = true)]
    mask: Option<String>,
    /// Inline occupied cells, `a,b;a,b;...`.
    #[arg(long, global = true)]
    cells: Option<String>,
    /// Scattering CSV path.
    #[arg(long, global = true)]
    scattering: Option<String>,
    /// `random` or `constant:VALUE`.
    #[arg(long, global = true)]
    generator: Option<String>,
    /// Weights CSV path.
    #[arg(long, global = true)]
    weights: Option<String>,
    /// Echo ensemble path.
    #[arg(long, global = true)]
    echoes: Option<String>,
    #[arg(long = "L", global = true)]
    l: Option<String>,
    #[arg(long, global = true)]
    trials: Option<String>,
    /// Also run with 4·L echoes and report the variance ratio.
    #[arg(long, global = true)]
    scaling: Option<String>,
}

impl Common {
    fn override_map(&self) -> BTreeMap<String, String> {
        let o = &self.overrides;
        let mut m = BTreeMap::new();
        let pairs = [
            ("J", &o.j),
            ("T", &o.t),
            ("n_t", &o.n_t),
            ("n_g", &o.n_g),
            ("n_a", &o.n_a),
            ("n_b", &o.n_b),
            ("mask", &o.mask),
            ("cells", &o.cells),
            ("scattering", &o.scattering),
            ("generator", &o.generator),
            ("weights", &o.weights),
            ("echoes", &o.echoes),
            ("L", &o.l),
            ("trials", &o.trials),
            ("scaling", &o.scaling),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                m.insert(k.to_string(), v.clone());
            }
        }
        if let Some(s) = self.seed {
            m.insert("seed".into(), s.to_string());
        }
        if let Some(o) = &self.out {
            m.insert("out".into(), o.display().to_string());
        }
        m
    }
}

/// 3 for numerical failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<scid::Error>())
        .any(scid::Error::is_numerical);
    if numerical {
        3
    } else {
        2
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.common.threads {
        anyhow::ensure!(n >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let cfg = RunConfig::load(cli.common.config.as_deref(), &cli.common.override_map())?;
    match cli.command {
        Command::Gen => commands::gen(&cfg),
        Command::Sound => commands::sound(&cfg),
        Command::Identify { mode } => commands::identify(&cfg, mode),
        Command::Analyze => commands::analyze(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
