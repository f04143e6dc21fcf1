use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use blindrx::harness::{check, run_experiment, ExperimentConfig, ExperimentKind, Format};
use blindrx::Error;

#[derive(Parser)]
#[command(version, about = "Blind massive-MIMO OFDM receiver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// BER against SNR for the selected receivers.
    Ber(RunArgs),
    /// Dominant-tap detection error rate.
    TapError(RunArgs),
    /// Iterations needed for cold and warm starts on a time-varying channel.
    Temporal(RunArgs),
    /// Spectral utilization at matched BER.
    Utilization(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutFormat,
    /// Worker threads (all cores by default).
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with status 3 if the experiment's expectations are violated.
    #[arg(long)]
    check: bool,
}

fn load(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => ExperimentConfig::new(kind),
    };
    if cfg.experiment != kind {
        return Err(Error::Config {
            path: "experiment".into(),
            message: format!(
                "configuration is for `{}` but the `{}` subcommand was used",
                cfg.experiment.as_str(),
                kind.as_str()
            ),
        });
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(kind: ExperimentKind, args: RunArgs) -> ExitCode {
    let cfg = match load(kind, &args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(t) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let table = match run_experiment(&cfg) {
        Ok(t) => t,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let format = match args.format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    };
    let written = match &args.out {
        Some(p) => table.emit(p, format),
        None => match format {
            Format::Csv => {
                print!("{}", table.to_csv());
                Ok(())
            }
            Format::Json => table.to_json().map(|j| println!("{j}")),
        },
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if args.check {
        let violations = check(&table);
        if !violations.is_empty() {
            for v in &violations {
                eprintln!("check failed: {v}");
            }
            return ExitCode::from(3);
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Ber(a) => run(ExperimentKind::BerSweep, a),
        Command::TapError(a) => run(ExperimentKind::TapError, a),
        Command::Temporal(a) => run(ExperimentKind::Temporal, a),
        Command::Utilization(a) => run(ExperimentKind::Utilization, a),
    }
}
