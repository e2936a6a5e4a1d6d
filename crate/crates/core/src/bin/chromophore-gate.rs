use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chromophore_gate::cli::{self, Command};

#[derive(Parser)]
#[command(name = "chromophore-gate", version, about = "Optically gated nuclear spin entanglement")]
struct Args {
    #[command(subcommand)]
    command: Sub,
    /// JSON configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output prefix; overrides `output.prefix`.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// RNG seed; overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Effective couplings, gate times and feasibility.
    Couplings,
    /// Entangling power of the T₊ and T₀ blocks over one period.
    EpowerCurve,
    /// Maximal T₋ entangling power over the hyperfine asymmetry plane.
    AsymmetryMap,
    /// Entanglement of formation against the hyperfine constant.
    ProtocolSweep,
    /// Synthetic echo-detected kinetics traces.
    KineticsSim,
    /// Fit triplet populations and lifetimes to traces.
    KineticsFit,
}

impl From<Sub> for Command {
    fn from(sub: Sub) -> Self {
        match sub {
            Sub::Couplings => Command::Couplings,
            Sub::EpowerCurve => Command::EpowerCurve,
            Sub::AsymmetryMap => Command::AsymmetryMap,
            Sub::ProtocolSweep => Command::ProtocolSweep,
            Sub::KineticsSim => Command::KineticsSim,
            Sub::KineticsFit => Command::KineticsFit,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = (|| {
        let mut config = cli::load_config(args.config.as_deref())?;
        if let Some(prefix) = &args.out {
            config.output.prefix = prefix.clone();
        }
        if let Some(seed) = args.seed {
            config.mc.seed = seed;
        }
        let output = cli::run(args.command.into(), &config, args.workers)?;
        let written = cli::write_artifacts(&config.output.prefix, &output)?;
        Ok::<_, chromophore_gate::Error>((output, written))
    })();
    match result {
        Ok((output, written)) => {
            print!("{}", output.summary);
            for path in written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
