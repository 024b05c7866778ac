//! `careertrend`: ingest → stage1 → stage2 → evaluate, plus predict, synth and gradcheck.

use std::path::PathBuf;
use std::process::ExitCode;

use careertrend_cli::{
    cmd_evaluate, cmd_gradcheck, cmd_ingest, cmd_predict, cmd_stage1, cmd_stage2, cmd_synth, CliError, ModelName,
    PipelineConfig, PredictSource,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "careertrend", version, about = "Two-stage career-trend forecasting of player BPM")]
struct Cli {
    /// JSON pipeline config; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random stream
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Artifact directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Season CSV
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// Feature schema JSON (defaults to the built-in 48-feature schema)
    #[arg(long, global = true)]
    schema: Option<PathBuf>,

    #[arg(long, global = true)]
    test_fraction: Option<f64>,

    #[arg(long, global = true)]
    k_min: Option<usize>,

    #[arg(long, global = true)]
    k_max: Option<usize>,

    #[arg(long, global = true)]
    ridge_lambda: Option<f64>,

    /// Maximum epochs for every trained model
    #[arg(long, global = true)]
    max_epochs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, filter, impute, split and normalise a season CSV
    Ingest,
    /// Train the autoencoder and choose K by silhouette
    Stage1,
    /// Train the forecaster
    Stage2 {
        /// Train the cluster-free standard LSTM instead
        #[arg(long)]
        standard: bool,
    },
    /// Score models on the test split and write reports
    Evaluate {
        /// Models to score (default: all enabled in the config)
        #[arg(long, value_enum, num_args = 1.., value_delimiter = ',')]
        models: Vec<ModelName>,
    },
    /// Predict BPM at ages 29-31 for one player
    Predict {
        /// Player id from the dataset artifact
        #[arg(long, conflicts_with = "rows", required_unless_present = "rows")]
        player: Option<String>,
        /// Season CSV with ages 22-28 of one player
        #[arg(long)]
        rows: Option<PathBuf>,
        /// Use the standard LSTM
        #[arg(long)]
        standard: bool,
    },
    /// Write a synthetic two-archetype season CSV
    Synth {
        /// Output CSV path
        #[arg(long)]
        output: PathBuf,
        /// JSON list of archetype specs (default: 30 star-like and 170 regular careers)
        #[arg(long)]
        archetypes: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
    /// Finite-difference gradient checks of every model
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

fn build_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &cli.input {
        cfg.input = Some(v.clone());
    }
    if let Some(v) = &cli.schema {
        cfg.schema = Some(v.clone());
    }
    if let Some(v) = cli.test_fraction {
        cfg.test_fraction = v;
    }
    if let Some(v) = cli.k_min {
        cfg.k_min = v;
    }
    if let Some(v) = cli.k_max {
        cfg.k_max = v;
    }
    if let Some(v) = cli.ridge_lambda {
        cfg.ridge_lambda = v;
    }
    if let Some(v) = cli.max_epochs {
        for block in [&mut cfg.autoencoder, &mut cfg.forecaster, &mut cfg.mlp] {
            block.max_epochs = v;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = build_config(&cli)?;
    match cli.command {
        Command::Ingest => {
            let s = cmd_ingest(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("serialisable"));
        }
        Command::Stage1 => {
            let s = cmd_stage1(&cfg)?;
            println!("K,silhouette");
            for (k, v) in &s.silhouette {
                println!("{k},{v:.4}");
            }
            println!("selected K = {}", s.k);
        }
        Command::Stage2 { standard } => {
            let s = cmd_stage2(&cfg, !standard)?;
            println!(
                "stopped_epoch = {}, best_epoch = {}, best validation loss = {:.6}",
                s.outcome.stopped_epoch, s.outcome.best_epoch, s.outcome.best_validation_loss
            );
        }
        Command::Evaluate { models } => {
            let reports = cmd_evaluate(&cfg, &models)?;
            println!("{:<14} {:>8} {:>8} {:>4}", "model", "MAE", "R2", "n");
            for r in &reports {
                let r2 = r.overall.r2.map_or("-".to_string(), |v| format!("{v:.3}"));
                println!("{:<14} {:>8.3} {:>8} {:>4}", r.model_name, r.overall.mae, r2, r.overall.n);
            }
        }
        Command::Predict { player, rows, standard } => {
            let source = match (player, rows) {
                (Some(p), _) => PredictSource::Player(p),
                (None, Some(r)) => PredictSource::Csv(r),
                (None, None) => return Err(CliError::Usage("pass --player or --rows".into())),
            };
            let pred = cmd_predict(&cfg, &source, !standard)?;
            for (age, v) in careertrend::TARGET_AGES.iter().zip(pred) {
                println!("age {age}: {v:.3}");
            }
        }
        Command::Synth { output, archetypes, noise } => {
            let labels = cmd_synth(&cfg, &output, archetypes.as_deref(), noise)?;
            println!("wrote {} players to {}", labels.len(), output.display());
        }
        Command::Gradcheck { seeds } => {
            let rows = cmd_gradcheck(seeds)?;
            let worst = rows.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
            println!("{} checks passed; worst relative error {worst:.3e}", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
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
