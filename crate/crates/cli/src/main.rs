use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trustphys::commands::{self, CommandError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "trustphys", version, about = "Trust estimation from skin conductance, pulse and gaze recordings")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON run configuration; flags given on the command line override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Drop rows from the false-alarm condition.
    #[arg(long, global = true)]
    exclude_fa: bool,
    /// Tune hyperparameters inside each outer fold (`--nested-cv=false` to evaluate with fixed ones).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", require_equals = true)]
    nested_cv: Option<bool>,
    /// Feature window length in seconds.
    #[arg(long, global = true)]
    window_s: Option<f64>,
    /// Override any configuration key, e.g. `--set train.n_iter=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort of session directories.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract windowed features from session directories.
    Features {
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune and fit the boosted-tree classifier.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ten-fold evaluation against the baselines.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-row Shapley attributions and the global ranking.
    Explain {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forward feature selection in attribution order.
    Select {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// One-way ANOVA and Tukey HSD of participant mean ratings by condition.
    Anova {
        /// CSV with participant_id, condition and rating columns (a features file works).
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Majority undersampling at 1x, 2x, 3x and all rows.
    ResampleStudy {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn effective_config(g: &Global) -> Result<RunConfig, CommandError> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for kv in &g.overrides {
        cfg.set(kv)?;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if g.exclude_fa {
        cfg.exclude_fa = true;
    }
    if let Some(nested) = g.nested_cv {
        cfg.nested_cv = nested;
    }
    if let Some(w) = g.window_s {
        cfg.features.window_s = w;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CommandError> {
    let cfg = effective_config(&cli.global)?;
    if let Some(n) = cli.global.threads {
        trustphys::set_threads(n);
    }
    match cli.command {
        Command::Simulate { out } => commands::simulate(&cfg, &out),
        Command::Features { sessions, out } => commands::features(&cfg, &sessions, &out),
        Command::Train { features, out } => commands::train(&cfg, &features, &out),
        Command::Evaluate { features, model, out } => commands::evaluate(&cfg, &features, &model, &out),
        Command::Explain { features, model, out } => commands::explain(&cfg, &features, &model, &out),
        Command::Select { features, out } => commands::select(&cfg, &features, &out),
        Command::Anova { ratings, out } => commands::anova(&cfg, &ratings, &out),
        Command::ResampleStudy { features, out } => commands::resample_study(&cfg, &features, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version land here too, with exit code 0
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
