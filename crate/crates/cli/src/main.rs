use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seqgen::{cmd_generate, cmd_preview, cmd_stats, cmd_validate, CliError, GenerationConfig};

#[derive(Parser)]
#[command(name = "seqgen", version, about = "Labeled sequential LiDAR range-image generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a TOML config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; output is identical for any value.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory; overrides the config's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every invariant of a generated dataset.
    Validate { dir: PathBuf },
    /// Pixel counts per distance band and class balance.
    Stats { dir: PathBuf },
    /// Render one frame of a sequence file as PNG.
    Preview {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            config,
            seed,
            jobs,
            out,
        } => {
            let mut cfg = GenerationConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out
                .or_else(|| cfg.out.clone())
                .ok_or_else(|| CliError::Config(vec!["no output directory: pass --out or set `out`".into()]))?;
            let jobs = jobs.unwrap_or(cfg.jobs);
            if jobs == 0 {
                return Err(CliError::Config(vec!["--jobs must be at least 1".into()]));
            }
            let m = cmd_generate(&cfg, &out, jobs)?;
            println!("wrote {} sequences to {}", m.sequences.len(), out.display());
        }
        Command::Validate { dir } => {
            let report = cmd_validate(&dir)?;
            if !report.problems.is_empty() {
                return Err(CliError::Validation(report.problems));
            }
            println!("ok: {} sequences, {} frames", report.sequences, report.frames);
        }
        Command::Stats { dir } => print!("{}", cmd_stats(&dir)?),
        Command::Preview { file, frame, out } => {
            cmd_preview(&file, frame, &out)?;
            println!("wrote {}", out.display());
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
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
