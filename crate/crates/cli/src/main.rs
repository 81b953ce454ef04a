use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tunnelfuse_cli::{
    app_state, exit_code, gen_data_to, load_data, load_lf, parse_series, predict, study_to, train_lf_to, write_field,
    RunConfig, CHECKPOINT_FILE,
};
use tunnelfuse_core::eval::{Format, StudyKind};
use tunnelfuse_core::Result;

#[derive(Parser)]
#[command(name = "tunnelfuse", version, about = "Multi-fidelity settlement prediction for shield tunnelling")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for scenarios, initialisation, sampling and noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file overriding the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the desk-sized preset instead of the full one.
    #[arg(long, global = true)]
    reduced: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    ErrorType,
    ErrorLevel,
    MinData,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the low-fidelity dataset into the output directory.
    GenData,
    /// Train the low-fidelity operator on a generated dataset.
    TrainLf {
        /// Directory holding the dataset; defaults to --out.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a fusion study against a trained checkpoint.
    Study {
        #[arg(value_enum)]
        kind: StudyArg,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint; defaults to lf.ckpt in the data directory.
        #[arg(long)]
        lf: Option<PathBuf>,
    },
    /// Predict the settlement field for a pressure history.
    PredictField {
        #[arg(long)]
        lf: PathBuf,
        /// Composite model file; without it the residual is zero.
        #[arg(long)]
        composite: Option<PathBuf>,
        /// Comma-separated grouting pressures for steps 1.., kPa.
        #[arg(long)]
        grouting: String,
        /// Comma-separated face pressures for steps 1.., kPa.
        #[arg(long)]
        face: String,
        /// Step to predict; defaults to the last given.
        #[arg(long)]
        t: Option<usize>,
    },
    /// Serve drive sessions over HTTP.
    Serve {
        /// Checkpoint files; each is exposed under its file stem.
        #[arg(long, required = true)]
        lf: Vec<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
    },
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let base = if g.reduced { RunConfig::reduced() } else { RunConfig::full() };
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path, &base)?,
        None => base,
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let format = match g.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    match cli.command {
        Command::GenData => {
            let data = gen_data_to(&cfg, &g.out)?;
            println!("wrote {} records to {}", data.records.len(), g.out.display());
        }
        Command::TrainLf { data } => {
            let data = load_data(data.as_ref().unwrap_or(&g.out))?;
            let out = train_lf_to(&cfg, &data, &g.out)?;
            println!(
                "held-out R² {:.4} on scenarios {:?}; checkpoint {}",
                out.test_r2,
                out.test_ids,
                g.out.join(CHECKPOINT_FILE).display()
            );
        }
        Command::Study { kind, data, lf } => {
            let data_dir = data.unwrap_or_else(|| g.out.clone());
            let dataset = load_data(&data_dir)?;
            let lf = load_lf(&lf.unwrap_or_else(|| data_dir.join(CHECKPOINT_FILE)))?;
            let kind = match kind {
                StudyArg::ErrorType => StudyKind::ErrorType,
                StudyArg::ErrorLevel => StudyKind::ErrorLevel,
                StudyArg::MinData => StudyKind::MinData,
            };
            let (report, files) = study_to(&cfg, kind, &dataset, lf, format, &g.out)?;
            for c in &report.cases {
                let last = c.steps.last().expect("studies have steps");
                println!(
                    "{:8} t={:2} level {:.3} R² {:.4} (lf {:.4})",
                    c.case.id, last.t_n, last.realized_level, last.r2, last.r2_lf
                );
            }
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::PredictField { lf, composite, grouting, face, t } => {
            let rows = predict(
                &cfg,
                load_lf(&lf)?,
                composite.as_deref(),
                &parse_series(&grouting)?,
                &parse_series(&face)?,
                t,
            )?;
            println!("wrote {}", write_field(&rows, format, &g.out)?.display());
        }
        Command::Serve { lf, addr } => {
            let state = app_state(&cfg, &lf)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(tunnelfuse_service::serve(state, addr))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tunnelfuse_cli::tune_allocator();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
