//! `flock`: scenario-driven simulation of rigidity-based flocking with
//! online Gaussian-process disturbance learning.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use flock::config::{preset, ModeConfig, ScenarioConfig, PRESET_NAMES};
use flock::runner;

#[derive(Parser)]
#[command(name = "flock", version, about = "rigidity-based flocking with online GP learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectory, dataset, bound and summary artifacts.
    Run {
        /// Path to a scenario config JSON.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in scenario: triangle2d, hexad2d or tetra3d.
        #[arg(long)]
        preset: Option<String>,
        /// Control law override: nominal or learning.
        #[arg(long)]
        mode: Option<String>,
        /// Output directory (default: $FLOCK_OUT/<name>-<mode> or ./<name>-<mode>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write SVG plots.
        #[arg(long)]
        svg: bool,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Drop all disturbances from the scenario.
        #[arg(long)]
        no_disturbance: bool,
    },
    /// Compare two run directories sharing the same scenario.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        /// Directory for compare.json and the comparison chart (default `.`).
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Parse and validate a config file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_scenario(config: Option<&Path>, preset_name: Option<&str>) -> Result<ScenarioConfig> {
    match (config, preset_name) {
        (Some(path), None) => ScenarioConfig::parse_config(path)
            .with_context(|| format!("failed to load {}", path.display())),
        (None, Some(name)) => Ok(preset(name)?),
        (None, None) => bail!("one of --config or --preset is required (presets: {})", PRESET_NAMES.join(", ")),
        (Some(_), Some(_)) => unreachable!("clap forbids both"),
    }
}

fn default_out_dir(cfg: &ScenarioConfig) -> PathBuf {
    let mode = match cfg.control.mode {
        ModeConfig::Nominal => "nominal",
        ModeConfig::Learning => "learning",
    };
    let name = if cfg.name.is_empty() { "scenario" } else { &cfg.name };
    let leaf = format!("{name}-{mode}");
    match std::env::var_os("FLOCK_OUT") {
        Some(base) => PathBuf::from(base).join(leaf),
        None => PathBuf::from(leaf),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, preset, mode, out, svg, seed, no_disturbance } => {
            let mut cfg = load_scenario(config.as_deref(), preset.as_deref())?;
            if let Some(mode) = mode {
                cfg.control.mode = match mode.as_str() {
                    "nominal" => ModeConfig::Nominal,
                    "learning" => ModeConfig::Learning,
                    other => bail!("unknown mode {other:?} (expected nominal or learning)"),
                };
            }
            if let Some(seed) = seed {
                cfg.sim.seed = seed;
            }
            if no_disturbance {
                cfg.disturbances.clear();
            }
            let out_dir = out.unwrap_or_else(|| default_out_dir(&cfg));
            let summary = runner::run(&cfg, &out_dir, svg)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            eprintln!("artifacts written to {}", out_dir.display());
            Ok(())
        }
        Command::Compare { dir_a, dir_b, out } => {
            let report = runner::compare(&dir_a, &dir_b)?;
            runner::write_compare_artifacts(&report, &dir_a, &dir_b, &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ScenarioConfig::parse_config(&config)?;
            println!("ok: {} agents, d = {}, {} edges", cfg.framework.n, cfg.framework.d, cfg.framework.edges.len());
            Ok(())
        }
    }
}
