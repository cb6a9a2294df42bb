use std::path::PathBuf;
use std::process::exit;
use std::time::Instant;

use clap::{Parser, Subcommand};

use lavamap_cli::{
    cmd_build_field, cmd_demo, cmd_exhaustive, cmd_fit, cmd_simulate, CliError, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "lavamap",
    version,
    about = "Monte Carlo lava-flow invasion hazard mapping",
    propagate_version = true
)]
struct Cli {
    /// Run configuration file (required for every subcommand except demo).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the config seed (and every scenario's seed).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Caps worker threads; outputs are identical for any cap.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Overrides the output directory (for demo: where the fixture goes).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the vent-opening density, danger classes, and vent grid.
    BuildField,
    /// Run one Monte Carlo scenario and write its hazard maps.
    Simulate {
        /// Scenario label from the config.
        label: String,
    },
    /// Deterministically sweep every vent and event class.
    Exhaustive,
    /// Fit a cubic through the four horizons' peak probabilities.
    Fit,
    /// Write a synthetic cone, vent history, event table, and config.
    Demo,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => e.exit(),
                _ => {
                    let _ = e.print();
                    exit(1);
                }
            }
        }
    };
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        exit(e.exit_code());
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.threads == Some(0) {
        return Err(CliError::setup(lavamap::Error::invalid(
            "--threads must be at least 1",
        )));
    }

    if let Command::Demo = cli.command {
        let dir = cli.out.unwrap_or_else(|| PathBuf::from("demo"));
        let seed = cli.seed.unwrap_or(42);
        let files = cmd_demo(&dir, seed)?;
        for f in &files {
            println!("wrote {}", f.display());
        }
        println!(
            "next: lavamap build-field --config {}",
            dir.join("demo.conf").display()
        );
        return Ok(());
    }

    let config_path = cli.config.ok_or_else(|| {
        CliError::setup(lavamap::Error::invalid(
            "missing --config (required for every subcommand except demo)",
        ))
    })?;
    let mut cfg = RunConfig::load(&config_path).map_err(CliError::setup)?;
    cfg.apply_overrides(cli.seed, cli.out);

    match cli.command {
        Command::BuildField => {
            let s = cmd_build_field(&cfg)?;
            println!("wrote {}", s.density_path.display());
            println!("wrote {}", s.classes_path.display());
            println!("wrote {}", s.vents_path.display());
            println!("total vents: {}", s.total_vents);
            for (k, n) in s.class_counts.iter().enumerate() {
                println!("class {k}: {n} vents");
            }
        }
        Command::Simulate { label } => {
            let start = Instant::now();
            let f = cmd_simulate(&cfg, &label, cli.threads)?;
            println!(
                "scenario '{label}': {} runs, {} activations",
                f.result.runs, f.result.total_activations
            );
            println!("max invasion probability: {}", f.result.max_prob);
            for p in [&f.prob_asc, &f.dz_asc, &f.meta, &f.prob_ppm, &f.dz_ppm] {
                println!("wrote {}", p.display());
            }
            println!("completed in {:.2} s", start.elapsed().as_secs_f64());
        }
        Command::Exhaustive => {
            let start = Instant::now();
            let f = cmd_exhaustive(&cfg, cli.threads)?;
            println!("exhaustive sweep: {} weighted flows", f.result.runs);
            println!("max invasion probability: {}", f.result.max_prob);
            for p in [&f.prob_asc, &f.dz_asc, &f.meta, &f.prob_ppm, &f.dz_ppm] {
                println!("wrote {}", p.display());
            }
            println!("completed in {:.2} s", start.elapsed().as_secs_f64());
        }
        Command::Fit => {
            let s = cmd_fit(&cfg)?;
            println!("cubic fit over 4 horizons:");
            for (i, c) in s.coeffs.iter().enumerate() {
                println!("c{i} = {c}");
            }
            for p in &s.points {
                println!(
                    "residual at t = {} ({}): {:e}",
                    p.time_years, p.label, p.residual
                );
            }
        }
        Command::Demo => unreachable!("handled above"),
    }
    Ok(())
}
