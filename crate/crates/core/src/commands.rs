//! The four batch commands behind the `datamarket` binary.
//!
//! A command is described by an [`Invocation`]: the resolved config plus the
//! command-specific settings. Executing it writes its data files and a
//! [`RunManifest`] into an output directory. The manifest embeds the
//! invocation, so [`replay`] reproduces every data file byte for byte.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::config::ResolvedConfig;
use crate::equilibrium::{
    detect_equilibria, sweep_phase_diagram, theory_bound_report, DetectOptions, PhaseCell,
};
use crate::params::StrategyProfile;
use crate::report::{self, MANIFEST_FILE};
use crate::rng::{stream, StreamKey, StreamRole};
use crate::simulator::{
    deviation_table, params_cell, simulate_round, DeviationOptions, RoundRecord,
};

pub const ROUND_FILE: &str = "round.json";
pub const DEVIATION_FILE: &str = "deviations.csv";
pub const VERDICT_FILE: &str = "verdicts.csv";
pub const PHASE_FILE: &str = "phase.csv";
pub const THEORY_FILE: &str = "theory.json";

/// Default belief-shift margin for the theory report, reduced to half the
/// admissible interval when `mu` leaves less room.
pub const DEFAULT_SHIFT: f64 = 0.1;

/// Default `(shift_low, shift_high)` for prior `mu`.
pub fn default_shifts(mu: f64) -> (f64, f64) {
    (
        DEFAULT_SHIFT.min((1.0 - mu) / 2.0),
        DEFAULT_SHIFT.min(mu / 2.0),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// One simulated round under a symmetric profile.
    Round {
        m: usize,
    },
    DeviationTable {
        m_star: usize,
    },
    Detect {
        shift_low: Option<f64>,
        shift_high: Option<f64>,
    },
    Sweep {
        ks: Vec<usize>,
        ratios: Vec<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Round { .. } => "round",
            Command::DeviationTable { .. } => "deviation-table",
            Command::Detect { .. } => "detect",
            Command::Sweep { .. } => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    #[serde(flatten)]
    pub command: Command,
    pub config: ResolvedConfig,
    pub crn: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(rename = "K")]
    pub ks: Vec<usize>,
    pub ratios: Vec<f64>,
}

/// Reproducibility record written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub n_rounds: usize,
    pub grid: Grid,
    pub invocation: Invocation,
    pub workers: usize,
    pub duration_secs: f64,
    /// File names relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// What a command produced, for the caller to echo.
#[derive(Debug)]
pub struct Outcome {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
    /// The primary data product (CSV or JSON text).
    pub primary: String,
    pub round: Option<RoundRecord>,
}

impl Invocation {
    pub fn grid(&self) -> Grid {
        match &self.command {
            Command::Sweep { ks, ratios } => Grid {
                ks: ks.clone(),
                ratios: ratios.clone(),
            },
            _ => Grid {
                ks: vec![self.config.num_sellers],
                ratios: vec![self.config.ratio],
            },
        }
    }

    fn detect_options(&self) -> DetectOptions {
        DetectOptions {
            n_rounds: self.config.n_rounds,
            seed: self.config.seed,
            crn: self.crn,
        }
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
    let path = dir.join(name);
    let mut f = BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    );
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

/// Runs `inv`, writing outputs into `out_dir`. `workers` is recorded only;
/// the caller owns the thread pool.
pub fn execute(inv: &Invocation, out_dir: &Path, workers: usize) -> anyhow::Result<Outcome> {
    let started = Instant::now();
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let cfg = &inv.config;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut round = None;

    match &inv.command {
        Command::Round { m } => {
            let params = cfg.validated()?;
            let profile = StrategyProfile::symmetric(*m, &params)?;
            let mut rng = stream(
                cfg.seed,
                StreamKey::new(params_cell(&params), *m as u64, StreamRole::Other(0), 0),
            );
            let rec = simulate_round(&params, &profile, &mut rng)?;
            let json = serde_json::to_string_pretty(&rec)? + "\n";
            files.push((ROUND_FILE.into(), json.into_bytes()));
            round = Some(rec);
        }
        Command::DeviationTable { m_star } => {
            let params = cfg.validated()?;
            let table = deviation_table(
                &params,
                *m_star,
                DeviationOptions {
                    n_rounds: cfg.n_rounds,
                    seed: cfg.seed,
                    crn: inv.crn,
                },
            )?;
            let mut buf = Vec::new();
            report::write_deviation_csv(&mut buf, [(cfg.ratio, &table)], MANIFEST_FILE)?;
            files.push((DEVIATION_FILE.into(), buf));
        }
        Command::Detect {
            shift_low,
            shift_high,
        } => {
            let params = cfg.validated()?;
            let (dl, dh) = default_shifts(cfg.mu);
            let theory =
                theory_bound_report(&params, shift_low.unwrap_or(dl), shift_high.unwrap_or(dh))?;
            let mut cell = detect_equilibria(&params, inv.detect_options())?;
            cell.ratio = cfg.ratio;
            files.extend(cell_files(&[cell], cfg)?);
            let json = serde_json::to_string_pretty(&theory)? + "\n";
            files.push((THEORY_FILE.into(), json.into_bytes()));
        }
        Command::Sweep { ks, ratios } => {
            if ks.is_empty() || ratios.is_empty() {
                bail!("sweep grid is empty");
            }
            let base = cfg.market_params()?;
            let cells = sweep_phase_diagram(&base, ks, ratios, inv.detect_options())?;
            files.extend(cell_files(&cells, cfg)?);
        }
    }

    for (name, bytes) in &files {
        write_file(out_dir, name, bytes)?;
    }
    let primary = files
        .iter()
        .find(|(n, _)| {
            n == match inv.command {
                Command::Round { .. } => ROUND_FILE,
                Command::DeviationTable { .. } => DEVIATION_FILE,
                Command::Detect { .. } => VERDICT_FILE,
                Command::Sweep { .. } => PHASE_FILE,
            }
        })
        .map(|(_, b)| String::from_utf8_lossy(b).into_owned())
        .unwrap_or_default();

    let manifest = RunManifest {
        schema_version: report::SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        n_rounds: cfg.n_rounds,
        grid: inv.grid(),
        invocation: inv.clone(),
        workers,
        duration_secs: started.elapsed().as_secs_f64(),
        outputs: files.iter().map(|(n, _)| n.clone()).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    write_file(out_dir, MANIFEST_FILE, json.as_bytes())?;
    Ok(Outcome {
        manifest,
        out_dir: out_dir.to_path_buf(),
        primary,
        round,
    })
}

fn cell_files(cells: &[PhaseCell], cfg: &ResolvedConfig) -> anyhow::Result<Vec<(String, Vec<u8>)>> {
    let (n, seed) = (cfg.n_rounds, cfg.seed);
    let mut phase = Vec::new();
    report::write_phase_csv(&mut phase, cells, n, seed, MANIFEST_FILE)?;
    let mut verdicts = Vec::new();
    report::write_verdict_csv(&mut verdicts, cells, n, seed, MANIFEST_FILE)?;
    let mut devs = Vec::new();
    report::write_cells_deviation_csv(&mut devs, cells, MANIFEST_FILE)?;
    Ok(vec![
        (PHASE_FILE.into(), phase),
        (VERDICT_FILE.into(), verdicts),
        (DEVIATION_FILE.into(), devs),
    ])
}

/// Re-executes the invocation recorded in a manifest.
pub fn replay(manifest: &Path, out_dir: &Path, workers: usize) -> anyhow::Result<Outcome> {
    let m = RunManifest::load(manifest)?;
    execute(&m.invocation, out_dir, workers)
}

/// Plain-text rendering of one round.
pub fn describe_round(rec: &RoundRecord) -> String {
    let mut s = String::new();
    s.push_str("seller  type  m  cost      S2          pi_H      sigma_bar2   score\n");
    for (i, (r, b)) in rec.realizations.iter().zip(&rec.beliefs).enumerate() {
        let s2 = r
            .sample_variance
            .map_or("-".to_string(), |v| format!("{v:.4}"));
        s.push_str(&format!(
            "{i:>6}  {:<4}  {}  {:<8.4}  {:<10}  {:<8.4}  {:<11.4}  {:.4}\n",
            format!("{:?}", r.variance_type),
            r.free_samples,
            r.cost,
            s2,
            b.pi_high,
            b.posterior_mean_var,
            rec.outcome.scores[i],
        ));
    }
    match rec.outcome.winner {
        Some(w) => s.push_str(&format!(
            "winner {w}: n = {} (relaxed {:.3}), payment {:.4}, rent {:.4}, buyer utility {:.4}\n",
            rec.outcome.allocation[w],
            rec.outcome.relaxed_allocation,
            rec.outcome.payments[w],
            rec.outcome.rents[w],
            rec.outcome.buyer_utility.unwrap_or(f64::NAN),
        )),
        None => s.push_str("no trade: floored allocation is zero\n"),
    }
    s
}
