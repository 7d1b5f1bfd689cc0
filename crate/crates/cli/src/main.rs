use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use equinash::{load_config, run, Mode, THREADS_ENV};

/// Runs one experiment pipeline from a config document.
#[derive(Parser, Debug)]
#[command(name = "equinash", version)]
struct Cli {
    mode: Mode,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<bool> {
        init_threads()?;
        let mut config = load_config(&cli.config)?;
        if let Some(s) = cli.seed {
            config.seed = s;
        }
        let out = cli
            .out
            .clone()
            .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
            .context("no output directory: pass --out or set output.dir")?;
        let manifest = run(cli.mode, &config, &out)?;
        match &manifest.failure {
            Some(f) => eprintln!("{}: FAIL ({f})", manifest.mode),
            None => eprintln!("{}: ok, {} files in {}", manifest.mode, manifest.files.len(), out.display()),
        }
        Ok(manifest.passed)
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
