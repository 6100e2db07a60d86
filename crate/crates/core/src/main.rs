use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use helmholtz_cgo::config::{parse_config, RunConfig};
use helmholtz_cgo::pipeline::{run_pipeline, write_error_json, Command, RunOptions};
use helmholtz_cgo::reconstruct::TracePath;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Phantom,
    Simulate,
    Reconstruct,
    Verify,
    Report,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PathArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
}

/// Inclusion reconstruction from partial boundary data.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Run configuration (TOML); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding output.dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed, overriding data.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default 1)
    #[arg(long)]
    threads: Option<usize>,
    /// Trace path: A boundary-integral traces, B leading-order traces
    #[arg(long, value_enum)]
    path: Option<PathArg>,
    /// Comma-separated |l| values; the first is the working value.
    #[arg(long, value_delimiter = ',')]
    l: Option<Vec<f64>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Phantom => Command::Phantom,
        Cmd::Simulate => Command::Simulate,
        Cmd::Reconstruct => Command::Reconstruct,
        Cmd::Verify => Command::Verify,
        Cmd::Report => Command::Report,
        Cmd::All => Command::All,
    };
    let opts = RunOptions {
        out: cli.out.clone(),
        seed: cli.seed,
        threads: cli.threads,
        path: cli.path.map(|p| match p {
            PathArg::A => TracePath::A,
            PathArg::B => TracePath::B,
        }),
        l: cli.l.clone(),
    };
    let result = cli
        .config
        .as_deref()
        .map_or_else(|| Ok(RunConfig::default()), parse_config)
        .and_then(|cfg| opts.apply(&cfg))
        .and_then(|cfg| {
            let out = PathBuf::from(&cfg.output.dir);
            run_pipeline(&cfg, command, opts.threads).inspect_err(|e| {
                let _ = write_error_json(&out, command, e);
            })
        });
    match result {
        Ok(summary) => {
            for a in &summary.artifacts {
                println!("{}", summary.out.join(a).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let Some(out) = cli.out.as_deref().filter(|o| !o.join("error.json").exists()) {
                let _ = write_error_json(out, command, &e);
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
