use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rigoletto::commands::{cmd_evaluate, cmd_features, cmd_predict, cmd_synth, cmd_train, cmd_transfer};
use rigoletto::config::RunConfig;
use rigoletto::synth::SynthParams;
use rigoletto::Result;

/// Riemannian classification of EEG epochs from covariance and connectivity features.
#[derive(Parser, Debug)]
#[command(name = "rigoletto", version)]
struct Cli {
    /// TOML run configuration; defaults apply to anything omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic two-class dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        subjects: usize,
        #[arg(long, default_value_t = 40)]
        trials_per_class: usize,
        #[arg(long, default_value_t = 12)]
        channels: usize,
        #[arg(long, default_value_t = 512.0)]
        fs: f64,
        #[arg(long, default_value_t = 8.0)]
        duration: f64,
        /// Make every odd subject a perturbed clone of the one before it.
        #[arg(long)]
        clones: bool,
    },
    /// Extract feature matrices for every subject of a dataset.
    Features {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the stacked ensemble on one subject's features.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        allow_config_mismatch: bool,
    },
    /// Predict labels for one subject's features as CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        allow_config_mismatch: bool,
    },
    /// Cross-validate every pipeline on every subject.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-subject-out transfer with nearest-mean source selection.
    Transfer {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = || RunConfig::load(cli.config.as_deref(), cli.seed);
    match &cli.command {
        Command::Synth { out, subjects, trials_per_class, channels, fs, duration, clones } => {
            let params = SynthParams {
                subjects: *subjects,
                trials_per_class: *trials_per_class,
                channels: *channels,
                fs_hz: *fs,
                duration_s: *duration,
                seed: cli.seed.unwrap_or(SynthParams::default().seed),
                clones: *clones,
            };
            cmd_synth(out, &params).map(|_| ())
        }
        Command::Features { dataset, out } => cmd_features(dataset, &cfg()?, out),
        Command::Train { features, subject, out, allow_config_mismatch } => {
            cmd_train(features, subject.as_deref(), &cfg()?, out, *allow_config_mismatch)
        }
        Command::Predict { model, features, subject, out, allow_config_mismatch } => {
            cmd_predict(model, features, subject.as_deref(), out, *allow_config_mismatch)
        }
        Command::Evaluate { dataset, out } => cmd_evaluate(dataset, &cfg()?, out).map(|_| ()),
        Command::Transfer { dataset, out } => cmd_transfer(dataset, &cfg()?, out).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rigoletto: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
