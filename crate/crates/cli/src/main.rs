use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meandim_core::harness::{self, ExperimentConfig, RunOutput};
use meandim_core::Error;

/// Configs shipped with the binary, addressable by bare name.
const BUNDLED_CONFIGS: [(&str, &str); 4] = [
    ("cantor.json", include_str!("../configs/cantor.json")),
    ("full-shift-binary.json", include_str!("../configs/full-shift-binary.json")),
    ("golden-mean.json", include_str!("../configs/golden-mean.json")),
    ("sparse-shift.json", include_str!("../configs/sparse-shift.json")),
];

#[derive(Parser)]
#[command(name = "meandim", version, about = "Mean dimension, rate-distortion and analog compression experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Covering counts and dimension estimates.
    Dims(RunArgs),
    /// Block rate-distortion values for the configured measures.
    Rd(RunArgs),
    /// Error probabilities of the configured codecs.
    Codec(RunArgs),
    /// Run every configured check and print the report.
    Verify(RunArgs),
    /// List bundled models, checks and configs.
    List,
    /// Describe a bundled model or check.
    Describe { id: String },
}

#[derive(Args)]
struct RunArgs {
    /// Config file, or the name of a bundled config.
    #[arg(long)]
    config: String,
    /// Directory for CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn load_config(spec: &str) -> Result<ExperimentConfig, Error> {
    let path = Path::new(spec);
    if path.exists() {
        return ExperimentConfig::from_path(path);
    }
    let name = if spec.ends_with(".json") { spec.to_string() } else { format!("{spec}.json") };
    match BUNDLED_CONFIGS.iter().find(|(n, _)| *n == name) {
        Some((_, text)) => ExperimentConfig::from_json(text),
        None => Err(Error::Config {
            path: spec.to_string(),
            msg: "no such file or bundled config".into(),
        }),
    }
}

fn write_out(out: &RunOutput, args: &RunArgs, cfg: &ExperimentConfig) -> Result<(), Error> {
    match args.out.clone().or_else(|| cfg.out_dir.as_ref().map(PathBuf::from)) {
        Some(dir) => out.write_artifacts(&dir),
        None => Ok(()),
    }
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::List => {
            println!("models:");
            for (id, text) in harness::list_models() {
                println!("  {id:<20} {text}");
            }
            println!("checks:");
            for info in harness::list_checks() {
                println!("  {:<20} {}", info.id, info.anchor);
            }
            println!("configs:");
            for (name, _) in BUNDLED_CONFIGS {
                println!("  {name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Describe { id } => {
            print!("{}", harness::describe(&id)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(args) => {
            let cfg = load_config(&args.config)?;
            let out = harness::run(&cfg, args.seed)?;
            write_out(&out, &args, &cfg)?;
            let report = out.report.as_ref().expect("verify always produces a report");
            print!("{}", report.to_text());
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Dims(args) => table_command(&args, |cfg, _| harness::run_dims(cfg)),
        Command::Rd(args) => table_command(&args, |cfg, _| harness::run_rd(cfg)),
        Command::Codec(args) => table_command(&args, harness::run_codecs),
    }
}

fn table_command(
    args: &RunArgs,
    run: impl FnOnce(&ExperimentConfig, Option<u64>) -> Result<(RunOutput, String), Error>,
) -> Result<ExitCode, Error> {
    let cfg = load_config(&args.config)?;
    let (out, summary) = run(&cfg, args.seed)?;
    write_out(&out, args, &cfg)?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
