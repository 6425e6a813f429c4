use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use texmesh::pipeline::{Command, PipelineConfig};

const THREADS_ENV: &str = "TEXMESH_THREADS";

#[derive(Parser)]
#[command(
    name = "texmesh",
    version,
    about = "Recover a textured mesh from posed images"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML config file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root holding every artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Dotted-key override such as `stage1.steps=500`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Training steps for train1, train2 or both stages of pipeline.
    #[arg(long, global = true)]
    steps: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Render a synthetic dataset with an analytic ground-truth surface.
    Synth,
    /// Fit the volumetric radiance field.
    Train1,
    /// Extract the coarse mesh from the trained density.
    Extract,
    /// Refine mesh geometry, topology and appearance.
    Train2,
    /// Unwrap, bake textures and export the asset.
    Bake,
    /// Render PNGs from the exported asset only.
    Render,
    /// Write the metrics report.
    Eval,
    /// Run every stage in order.
    Pipeline,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Synth => Command::Synth,
            Cmd::Train1 => Command::Train1,
            Cmd::Extract => Command::Extract,
            Cmd::Train2 => Command::Train2,
            Cmd::Bake => Command::Bake,
            Cmd::Render => Command::Render,
            Cmd::Eval => Command::Eval,
            Cmd::Pipeline => Command::Pipeline,
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV}={raw:?} is not a positive integer"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    #[cfg(not(feature = "parallel"))]
    log::warn!("{THREADS_ENV}={n} ignored: built without the parallel feature");
    Ok(())
}

fn config(cli: &Cli, command: Command) -> texmesh::Result<PipelineConfig> {
    let base = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let mut overrides = cli.overrides.clone();
    if let Some(steps) = cli.steps {
        let keys = command.steps_keys();
        if keys.is_empty() {
            return Err(texmesh::Error::Config(
                "--steps applies to train1, train2 and pipeline".into(),
            ));
        }
        overrides.extend(keys.iter().map(|k| format!("{k}={steps}")));
    }
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    base.with_overrides(&overrides)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        log::error!("{e}");
        return ExitCode::from(1);
    }
    let command = Command::from(cli.command);
    let result = config(&cli, command).and_then(|cfg| command.run(&cfg, &cli.out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
