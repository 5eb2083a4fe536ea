use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use hhsync_core::experiment::{
    config_from_document, preset, run_scenario, verify_outputs, RunConfig, RunManifest, RunOptions, RunStatus,
    PRESET_NAMES,
};

#[derive(Parser)]
#[command(name = "hhsync", version, about = "Stochastic Hodgkin-Huxley network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration, a manifest (re-run) or a built-in preset.
    Run {
        /// Configuration or manifest JSON.
        input: Option<PathBuf>,
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
        /// Output directory (overrides `output.dir`).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, value_name = "K", default_value_t = 0)]
        workers: usize,
        /// Replace files in a non-empty output directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Check a configuration (or manifest) and list every problem.
    Validate { input: PathBuf },
    /// Summarize a manifest and verify the digests of its files.
    Report { manifest: PathBuf },
    /// Print a preset configuration, or list the presets.
    Preset { name: Option<String> },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load(path: &Path) -> Result<RunConfig> {
    config_from_document(&read(path)?).map_err(|errs| {
        anyhow!(
            "{} is invalid:\n  {}",
            path.display(),
            errs.join("\n  ")
        )
    })
}

fn named_preset(name: &str) -> Result<RunConfig> {
    preset(name).ok_or_else(|| anyhow!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", ")))
}

fn run(input: Option<PathBuf>, preset_name: Option<String>, out: Option<PathBuf>, workers: usize, overwrite: bool) -> Result<()> {
    let config = match (input, preset_name) {
        (Some(path), None) => load(&path)?,
        (None, Some(name)) => named_preset(&name)?,
        (Some(_), Some(_)) => bail!("give either a configuration file or --preset, not both"),
        (None, None) => bail!("nothing to run: give a configuration file or --preset NAME"),
    };
    let dir = out
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| anyhow!("no output directory: pass --out DIR or set output.dir"))?;
    let opts = RunOptions {
        workers,
        overwrite,
        inject_failure: None,
    };
    let manifest = run_scenario(&config, &dir, &opts)?;
    println!(
        "{}: {} files, {} steps, {} neuron-steps, {} projections, {:.1} s on {} workers -> {}",
        config.scenario,
        manifest.files.len(),
        manifest.steps,
        manifest.neuron_steps,
        manifest.projections,
        manifest.wall_clock_seconds,
        manifest.workers,
        dir.display()
    );
    Ok(())
}

fn report(path: &Path) -> Result<bool> {
    let manifest = RunManifest::from_json(&read(path)?)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    println!("scenario      {}", manifest.config.scenario);
    println!("code version  {}", manifest.code_version);
    println!("status        {:?}", manifest.status);
    if let Some(e) = &manifest.error {
        println!("error         {e}");
    }
    println!("seed          {}", manifest.config.seed);
    println!("steps         {}", manifest.steps);
    println!("neuron-steps  {}", manifest.neuron_steps);
    println!("projections   {}", manifest.projections);
    println!("wall clock    {:.2} s ({} workers)", manifest.wall_clock_seconds, manifest.workers);
    let problems = verify_outputs(&manifest, dir);
    println!("files         {} listed, {} mismatched", manifest.files.len(), problems.len());
    for p in &problems {
        println!("  {p}");
    }
    Ok(problems.is_empty() && manifest.status == RunStatus::Complete)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            input,
            preset,
            out,
            workers,
            overwrite,
        } => run(input, preset, out, workers, overwrite).map(|_| true),
        Command::Validate { input } => load(&input).map(|c| {
            println!("{}: valid ({} cells)", c.scenario, c.cells().len());
            true
        }),
        Command::Report { manifest } => report(&manifest),
        Command::Preset { name: None } => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(true)
        }
        Command::Preset { name: Some(name) } => named_preset(&name).map(|c| {
            println!("{}", c.to_json());
            true
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
