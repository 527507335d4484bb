use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use grand_poincare::{emit_report, exit_code, run_with_threads, ExperimentConfig, Format};

#[derive(Parser)]
#[command(name = "grand-poincare", version, about = "Grand Lebesgue norms and Poincaré-type inequality checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<CliFormat>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    Json,
    Csv,
}

fn threads_from_env() -> Result<Option<usize>, String> {
    match std::env::var("GP_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| format!("GP_THREADS must be a positive integer, got {v:?}")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let Command::Run { config, seed, out, format } = Cli::parse().command;
    let result = (|| -> Result<i32, String> {
        let mut cfg = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        let spec_out = cfg.output.clone();
        let format = match format {
            Some(CliFormat::Json) => Format::Json,
            Some(CliFormat::Csv) => Format::Csv,
            None => spec_out.as_ref().map(|o| o.format).unwrap_or_default(),
        };
        let base = config.parent().map(PathBuf::from).unwrap_or_default();
        let out = out.or_else(|| spec_out.and_then(|o| o.path.map(|p| base.join(p))));
        let record = run_with_threads(&cfg, &base, threads_from_env()?).map_err(|e| format!("task {}: {e}", cfg.task.name()))?;
        let text = emit_report(&record, format);
        match out {
            Some(path) => std::fs::write(&path, text).map_err(|e| format!("io error on {}: {e}", path.display()))?,
            None => print!("{text}"),
        }
        Ok(exit_code(&record))
    })();
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
