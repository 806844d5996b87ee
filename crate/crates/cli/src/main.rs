use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sga::data::{self, DatasetSpec};
use sga::harness::{self, Checkpoint, TrainConfig};
use sga::{Error, ErrorKind};

#[derive(Parser)]
#[command(
    name = "sga",
    version,
    about = "Hardness-guided adversarial domain adaptation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write metrics.jsonl, model.json and eval.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a dataset CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train several configs over several seeds and print a summary table.
    Compare {
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        configs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        seeds: Vec<u64>,
        /// Where to write summary.csv; defaults to the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset from a JSON spec.
    GenData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::Io => 4,
        ErrorKind::Other => 1,
    }
}

fn write(path: &Path, text: &str) -> sga::Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> sga::Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = TrainConfig::load(&config)?;
            let outcome = harness::train(&cfg, Some(&out))?;
            if let Some(report) = &outcome.final_eval {
                println!("{}", serde_json::to_string_pretty(report)?);
            }
            log::info!("wrote {}", out.display());
        }
        Command::Eval { model, data } => {
            let ck = Checkpoint::load(&model)?;
            let net = ck.to_model()?;
            let dataset = data::load(&data)?;
            let report = harness::evaluate(&net, &dataset, &ck.config.kernel, ck.config.batch_size)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Compare { configs, seeds, out } => {
            let cfgs = configs
                .iter()
                .map(|p| TrainConfig::load(p))
                .collect::<sga::Result<Vec<_>>>()?;
            let cmp = harness::compare_variants(&cfgs, &seeds)?;
            print!("{}", cmp.to_table());
            let dir = out.unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
                path: dir.clone(),
                source,
            })?;
            write(&dir.join("summary.csv"), &cmp.to_csv())?;
        }
        Command::GenData { spec, out } => {
            let text = std::fs::read_to_string(&spec).map_err(|source| Error::Io {
                path: spec.clone(),
                source,
            })?;
            let spec: DatasetSpec =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", spec.display())))?;
            let dataset = data::generate(&spec)?;
            data::save(&dataset, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
