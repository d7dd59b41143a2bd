//! `datamarket`: batch front end for the data-market simulator.
//!
//! Precedence: command-line flags override config-file keys, which override
//! the reference defaults.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use datamarket::commands::{self, Command, Invocation};
use datamarket::config::RunConfig;
use datamarket::equilibrium::{full_ratio_grid, DEFAULT_RATIOS, DEFAULT_SELLER_COUNTS};

#[derive(Parser)]
#[command(
    name = "datamarket",
    version,
    about = "Data-market signaling simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Shared {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    n_rounds: Option<usize>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Common random numbers for deviation tables (default).
    #[arg(long, global = true, overrides_with = "no_crn")]
    crn: bool,
    /// Independent sampling per deviation.
    #[arg(long, global = true)]
    no_crn: bool,
    /// Sweep every integer ratio from 2 to 300.
    #[arg(long, global = true)]
    full_grid: bool,
    /// Override the config's seller count `K`.
    #[arg(long = "sellers", global = true)]
    num_sellers: Option<usize>,
    /// Override the config's `sigma_high / sigma_low`.
    #[arg(long, global = true)]
    ratio: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one round and print it.
    Round {
        /// Free samples shared by every seller (default: M).
        #[arg(long)]
        m: Option<usize>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        shared: Shared,
    },
    /// Seller 0's utility for every deviation from a symmetric profile.
    DeviationTable {
        #[arg(long)]
        m_star: usize,
        #[command(flatten)]
        shared: Shared,
    },
    /// Equilibrium verdicts for one cell, plus the theory report.
    Detect {
        /// Belief-shift margin toward Low (default: 0.1, capped at (1-mu)/2).
        #[arg(long)]
        shift_low: Option<f64>,
        /// Belief-shift margin toward High (default: 0.1, capped at mu/2).
        #[arg(long)]
        shift_high: Option<f64>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Phase diagram over a (K, ratio) grid.
    Sweep {
        /// Comma-separated seller counts.
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        /// Comma-separated ratios.
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Re-run the invocation recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn resolve(shared: &Shared) -> anyhow::Result<datamarket::config::ResolvedConfig> {
    let mut raw = match &shared.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = shared.seed {
        raw.seed = Some(s);
    }
    if let Some(n) = shared.n_rounds {
        raw.n_rounds = Some(n);
    }
    if let Some(k) = shared.num_sellers {
        raw.num_sellers = Some(k);
    }
    if let Some(r) = shared.ratio {
        raw.ratio = Some(r);
        raw.sigma_low = None;
    }
    Ok(raw.resolve()?)
}

fn run_in_pool<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> anyhow::Result<T> + Send,
) -> anyhow::Result<T> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .context("building worker pool")?
        .install(f)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (inv, out, workers, json) = match cli.command {
        Cmd::Replay {
            manifest,
            out,
            workers,
        } => {
            eprintln!("replaying {}", manifest.display());
            let outcome = run_in_pool(workers, || {
                commands::replay(&manifest, &out, rayon::current_num_threads())
            })?;
            eprintln!("wrote {}", outcome.out_dir.display());
            return Ok(());
        }
        Cmd::Round { m, json, shared } => {
            let cfg = resolve(&shared)?;
            let m = m.unwrap_or(cfg.max_free_samples);
            let inv = Invocation {
                command: Command::Round { m },
                config: cfg,
                crn: !shared.no_crn,
            };
            (inv, shared.out, shared.workers, json)
        }
        Cmd::DeviationTable { m_star, shared } => {
            let inv = Invocation {
                command: Command::DeviationTable { m_star },
                config: resolve(&shared)?,
                crn: !shared.no_crn,
            };
            (inv, shared.out, shared.workers, false)
        }
        Cmd::Detect {
            shift_low,
            shift_high,
            shared,
        } => {
            let inv = Invocation {
                command: Command::Detect {
                    shift_low,
                    shift_high,
                },
                config: resolve(&shared)?,
                crn: !shared.no_crn,
            };
            (inv, shared.out, shared.workers, false)
        }
        Cmd::Sweep { ks, ratios, shared } => {
            let ks = if ks.is_empty() {
                DEFAULT_SELLER_COUNTS.to_vec()
            } else {
                ks
            };
            let ratios = match (shared.full_grid, ratios.is_empty()) {
                (true, _) => full_ratio_grid(),
                (false, true) => DEFAULT_RATIOS.to_vec(),
                (false, false) => ratios,
            };
            let inv = Invocation {
                command: Command::Sweep { ks, ratios },
                config: resolve(&shared)?,
                crn: !shared.no_crn,
            };
            (inv, shared.out, shared.workers, false)
        }
    };

    let grid = inv.grid();
    eprintln!(
        "{}: {} cell(s), n_rounds={}, seed={}, crn={}",
        inv.command.name(),
        grid.ks.len() * grid.ratios.len(),
        inv.config.n_rounds,
        inv.config.seed,
        inv.crn
    );
    let outcome = run_in_pool(workers, || {
        commands::execute(&inv, &out, rayon::current_num_threads())
    })?;
    eprintln!(
        "wrote {} file(s) to {} in {:.1}s",
        outcome.manifest.outputs.len() + 1,
        outcome.out_dir.display(),
        outcome.manifest.duration_secs
    );

    match (&outcome.round, json) {
        (Some(rec), false) => print!("{}", commands::describe_round(rec)),
        _ => print!("{}", outcome.primary),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
