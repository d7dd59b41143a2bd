//! CSV schemas for deviation tables, verdicts and phase diagrams.
//!
//! Every file starts with one comment line naming the schema version, the
//! table kind and the manifest of the run that produced it:
//!
//! ```text
//! # datamarket schema_version=1 kind=phase manifest=manifest.json
//! ```
//!
//! Readers should skip lines starting with `#`. Floats are written with the
//! shortest representation that round-trips, so output bytes are a pure
//! function of the values.
//!
//! | kind        | columns |
//! |-------------|---------|
//! | `deviation` | `K, ratio, m_star, m_dev, mean, se, n_rounds, no_trade` |
//! | `verdict`   | `K, ratio, m_star, is_equilibrium, margin, n_rounds, seed` |
//! | `phase`     | `K, ratio, region, equilibria, margin_m0, margin_m2, …, margin_mM, n_rounds, seed` |
//!
//! `equilibria` is a `;`-separated list, empty when none was detected.
//! Infinite margins are written as `inf`.

use std::io::Write;

use crate::equilibrium::PhaseCell;
use crate::params::legal_strategy_set;
use crate::simulator::DeviationTable;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub const DEVIATION_COLUMNS: [&str; 8] = [
    "K", "ratio", "m_star", "m_dev", "mean", "se", "n_rounds", "no_trade",
];
pub const VERDICT_COLUMNS: [&str; 7] = [
    "K",
    "ratio",
    "m_star",
    "is_equilibrium",
    "margin",
    "n_rounds",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Deviation,
    Verdict,
    Phase,
}

impl TableKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TableKind::Deviation => "deviation",
            TableKind::Verdict => "verdict",
            TableKind::Phase => "phase",
        }
    }
}

/// The comment line heading every CSV file.
pub fn header_line(kind: TableKind, manifest: &str) -> String {
    format!(
        "# datamarket schema_version={SCHEMA_VERSION} kind={} manifest={manifest}\n",
        kind.as_str()
    )
}

/// Column names of the phase CSV for `max_free_samples = M`.
pub fn phase_columns(max_free_samples: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["K", "ratio", "region", "equilibria"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in legal_strategy_set(max_free_samples).unwrap_or_default() {
        cols.push(format!("margin_m{m}"));
    }
    cols.push("n_rounds".into());
    cols.push("seed".into());
    cols
}

fn begin<W: Write>(mut w: W, kind: TableKind, manifest: &str) -> csv::Result<csv::Writer<W>> {
    w.write_all(header_line(kind, manifest).as_bytes())?;
    Ok(csv::Writer::from_writer(w))
}

/// Writes deviation rows; `ratio` is the nominal ratio label of each table.
pub fn write_deviation_csv<'a, W, I>(w: W, tables: I, manifest: &str) -> csv::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (f64, &'a DeviationTable)>,
{
    let mut out = begin(w, TableKind::Deviation, manifest)?;
    out.write_record(DEVIATION_COLUMNS)?;
    for (ratio, t) in tables {
        for e in &t.entries {
            out.write_record([
                t.num_sellers.to_string(),
                ratio.to_string(),
                t.m_star.to_string(),
                e.m_dev.to_string(),
                e.estimate.mean.to_string(),
                e.estimate.std_error.to_string(),
                e.estimate.n_rounds.to_string(),
                e.estimate.no_trade_count.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Deviation rows of every table of every cell, in cell order.
pub fn write_cells_deviation_csv<W: Write>(
    w: W,
    cells: &[PhaseCell],
    manifest: &str,
) -> csv::Result<()> {
    write_deviation_csv(
        w,
        cells
            .iter()
            .flat_map(|c| c.tables.iter().map(move |t| (c.ratio, t))),
        manifest,
    )
}

pub fn write_verdict_csv<W: Write>(
    w: W,
    cells: &[PhaseCell],
    n_rounds: usize,
    seed: u64,
    manifest: &str,
) -> csv::Result<()> {
    let mut out = begin(w, TableKind::Verdict, manifest)?;
    out.write_record(VERDICT_COLUMNS)?;
    for c in cells {
        for v in &c.verdicts {
            out.write_record([
                c.num_sellers.to_string(),
                c.ratio.to_string(),
                v.m_star.to_string(),
                v.is_equilibrium.to_string(),
                v.margin.to_string(),
                n_rounds.to_string(),
                seed.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_phase_csv<W: Write>(
    w: W,
    cells: &[PhaseCell],
    n_rounds: usize,
    seed: u64,
    manifest: &str,
) -> csv::Result<()> {
    let max_m = cells.first().map_or(2, |c| c.max_free_samples);
    let mut out = begin(w, TableKind::Phase, manifest)?;
    out.write_record(phase_columns(max_m))?;
    for c in cells {
        let mut row = vec![
            c.num_sellers.to_string(),
            c.ratio.to_string(),
            c.region.to_string(),
            c.equilibria
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        ];
        for m in legal_strategy_set(max_m).unwrap_or_default() {
            row.push(c.verdict(m).map_or(String::new(), |v| v.margin.to_string()));
        }
        row.push(n_rounds.to_string());
        row.push(seed.to_string());
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}
