//! Symmetric equilibrium detection and phase-diagram sweeps.
//!
//! A symmetric profile `m*` is declared an equilibrium when seller 0's
//! estimated utility at `m*` beats every unilateral deviation by at least
//! [`SIGNIFICANCE`] combined standard errors. Non-detection only means the
//! margin was not cleared at the simulated sample size.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::belief::{belief_shift_thresholds, posterior_mean_lower_bound};
use crate::error::{MarketError, Result};
use crate::mechanism::rounding_loss;
use crate::params::{MarketParams, ValidatedParams};
use crate::simulator::{deviation_table, DeviationOptions, DeviationTable};

/// Required margin, in combined standard errors.
pub const SIGNIFICANCE: f64 = 2.0;

/// Ratio grid used for desk-scale reproductions.
pub const DEFAULT_RATIOS: [f64; 10] = [
    2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 140.0, 200.0, 250.0, 300.0,
];

/// Seller counts of the reference phase diagram.
pub const DEFAULT_SELLER_COUNTS: [usize; 9] = [2, 3, 4, 5, 6, 7, 8, 9, 10];

/// Every integer ratio from 2 to 300.
pub fn full_ratio_grid() -> Vec<f64> {
    (2..=300).map(|r| r as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumVerdict {
    pub m_star: usize,
    pub is_equilibrium: bool,
    /// Smallest `advantage / se` over deviations `m' != m*`.
    pub margin: f64,
}

impl EquilibriumVerdict {
    pub fn from_table(table: &DeviationTable) -> Self {
        let margin = table
            .entries
            .iter()
            .filter(|e| e.m_dev != table.m_star)
            .map(|e| e.advantage.z_score())
            .fold(f64::INFINITY, f64::min);
        Self {
            m_star: table.m_star,
            is_equilibrium: margin >= SIGNIFICANCE,
            margin,
        }
    }
}

/// Region of the phase diagram a cell falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    /// Only `m* = M`.
    InformativeOnly,
    /// Only `m* = 0`.
    UninformativeOnly,
    /// Exactly one equilibrium, strictly between 0 and `M`.
    IntermediateOnly,
    Multiple,
    NoneDetected,
}

impl Region {
    pub fn classify(equilibria: &BTreeSet<usize>, max_free_samples: usize) -> Self {
        match equilibria.len() {
            0 => Region::NoneDetected,
            1 => match *equilibria.iter().next().unwrap() {
                0 => Region::UninformativeOnly,
                m if m == max_free_samples => Region::InformativeOnly,
                _ => Region::IntermediateOnly,
            },
            _ => Region::Multiple,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Region::InformativeOnly => "informative_only",
            Region::UninformativeOnly => "uninformative_only",
            Region::IntermediateOnly => "intermediate_only",
            Region::Multiple => "multiple",
            Region::NoneDetected => "none_detected",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "informative_only" => Region::InformativeOnly,
            "uninformative_only" => Region::UninformativeOnly,
            "intermediate_only" => Region::IntermediateOnly,
            "multiple" => Region::Multiple,
            "none_detected" => Region::NoneDetected,
            _ => return Err(format!("unknown region {s:?}")),
        })
    }
}

/// Monte Carlo settings shared by detection and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectOptions {
    pub n_rounds: usize,
    pub seed: u64,
    pub crn: bool,
}

/// Equilibrium analysis of one `(K, ratio)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseCell {
    pub num_sellers: usize,
    /// Nominal `sigma_high / sigma_low` of the cell.
    pub ratio: f64,
    pub max_free_samples: usize,
    pub equilibria: BTreeSet<usize>,
    pub region: Region,
    pub verdicts: Vec<EquilibriumVerdict>,
    pub tables: Vec<DeviationTable>,
}

impl PhaseCell {
    pub fn verdict(&self, m_star: usize) -> Option<&EquilibriumVerdict> {
        self.verdicts.iter().find(|v| v.m_star == m_star)
    }

    pub fn contains(&self, m_star: usize) -> bool {
        self.equilibria.contains(&m_star)
    }
}

/// Builds a deviation table for every candidate `m*` and applies the
/// significance rule to each.
pub fn detect_equilibria(params: &ValidatedParams, opts: DetectOptions) -> Result<PhaseCell> {
    detect_cell(params, params.ratio(), opts)
}

fn detect_cell(
    params: &ValidatedParams,
    nominal_ratio: f64,
    opts: DetectOptions,
) -> Result<PhaseCell> {
    let dev = DeviationOptions {
        n_rounds: opts.n_rounds,
        seed: opts.seed,
        crn: opts.crn,
    };
    let tables: Vec<DeviationTable> = params
        .legal_strategies()
        .into_par_iter()
        .map(|m| deviation_table(params, m, dev))
        .collect::<Result<_>>()?;
    let verdicts: Vec<EquilibriumVerdict> =
        tables.iter().map(EquilibriumVerdict::from_table).collect();
    let equilibria: BTreeSet<usize> = verdicts
        .iter()
        .filter(|v| v.is_equilibrium)
        .map(|v| v.m_star)
        .collect();
    Ok(PhaseCell {
        num_sellers: params.num_sellers,
        ratio: nominal_ratio,
        max_free_samples: params.max_free_samples,
        region: Region::classify(&equilibria, params.max_free_samples),
        equilibria,
        verdicts,
        tables,
    })
}

/// Parameters of the grid cell `(K, ratio)`: `sigma_high` is kept from
/// `base` and `sigma_low = sigma_high / ratio`.
pub fn cell_params(base: &MarketParams, num_sellers: usize, ratio: f64) -> Result<ValidatedParams> {
    MarketParams {
        num_sellers,
        sigma_low: base.sigma_high / ratio,
        ..base.clone()
    }
    .validate()
}

/// One classified cell per grid point, ordered with `K` outer and ratio inner.
pub fn sweep_phase_diagram(
    base: &MarketParams,
    seller_counts: &[usize],
    ratios: &[f64],
    opts: DetectOptions,
) -> Result<Vec<PhaseCell>> {
    if seller_counts.is_empty() || ratios.is_empty() {
        return Err(MarketError::EmptyGrid);
    }
    let grid: Vec<(usize, f64)> = seller_counts
        .iter()
        .flat_map(|&k| ratios.iter().map(move |&r| (k, r)))
        .collect();
    grid.into_par_iter()
        .map(|(k, r)| detect_cell(&cell_params(base, k, r)?, r, opts))
        .collect()
}

/// Closed-form diagnostics for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub ratio: f64,
    pub shift_low: f64,
    pub shift_high: f64,
    pub rows: Vec<TheoryRow>,
    pub alpha: f64,
    /// `sigma_low - alpha sqrt(lambda psi(c_max))`.
    pub approx_slack: f64,
    pub n_min: f64,
    /// `1 / (n_min - 1)`; infinite when `n_min <= 1`.
    pub rounding_loss_bound: f64,
    /// Worst-case rounding loss at `n_min` against `var/(n*(n*-1))`.
    pub worst_rounding: Option<WorstRounding>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstRounding {
    pub loss: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryRow {
    pub m: usize,
    /// `None` for `m = 0`, where the posterior is the prior.
    pub posterior_mean_lower_bound: Option<f64>,
    pub prob_low_shift: Option<f64>,
    pub prob_high_shift: Option<f64>,
}

pub fn theory_bound_report(
    params: &ValidatedParams,
    shift_low: f64,
    shift_high: f64,
) -> Result<TheoryReport> {
    // Validate the shifts once, even when no m >= 2 rows use them.
    belief_shift_thresholds(params, 2, shift_low, shift_high)?;
    let mut rows = Vec::new();
    for m in params.legal_strategies() {
        if m == 0 {
            rows.push(TheoryRow {
                m,
                posterior_mean_lower_bound: None,
                prob_low_shift: None,
                prob_high_shift: None,
            });
            continue;
        }
        let t = belief_shift_thresholds(params, m, shift_low, shift_high)?;
        rows.push(TheoryRow {
            m,
            posterior_mean_lower_bound: Some(posterior_mean_lower_bound(params, m)?),
            prob_low_shift: Some(t.prob_low_shift()),
            prob_high_shift: Some(t.prob_high_shift()),
        });
    }
    let psi_max = crate::cost::CostDistribution::psi(
        &params.cost,
        crate::cost::CostDistribution::c_max(&params.cost),
    );
    let worst_rounding = (params.n_min >= 2.0)
        .then(|| rounding_loss(params.var_low(), psi_max, params.lambda).ok())
        .flatten()
        .map(|r| WorstRounding {
            loss: r.loss,
            bound: r.bound,
        });
    Ok(TheoryReport {
        ratio: params.ratio(),
        shift_low,
        shift_high,
        rows,
        alpha: params.alpha,
        approx_slack: params.approx_slack,
        n_min: params.n_min,
        rounding_loss_bound: if params.n_min > 1.0 {
            1.0 / (params.n_min - 1.0)
        } else {
            f64::INFINITY
        },
        worst_rounding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{DeviationEntry, DifferenceEstimate, UtilityEstimate};

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn classification_is_total() {
        // every subset of {0,2,3,4,5}
        let legal = [0usize, 2, 3, 4, 5];
        for mask in 0u32..32 {
            let s: BTreeSet<usize> = (0..5)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| legal[i])
                .collect();
            let r = Region::classify(&s, 5);
            let expect = match s.len() {
                0 => Region::NoneDetected,
                1 if s.contains(&5) => Region::InformativeOnly,
                1 if s.contains(&0) => Region::UninformativeOnly,
                1 => Region::IntermediateOnly,
                _ => Region::Multiple,
            };
            assert_eq!(r, expect, "{s:?}");
            assert_eq!(r.as_str().parse::<Region>().unwrap(), r);
        }
        assert_eq!(Region::classify(&set(&[2]), 2), Region::InformativeOnly);
    }

    fn table(m_star: usize, adv: &[(usize, f64, f64)]) -> DeviationTable {
        let est = UtilityEstimate {
            mean: 0.0,
            std_error: 0.0,
            n_rounds: 1000,
            no_trade_count: 0,
        };
        DeviationTable {
            num_sellers: 2,
            ratio: 2.0,
            m_star,
            crn: true,
            entries: adv
                .iter()
                .map(|&(m, mean, se)| DeviationEntry {
                    m_dev: m,
                    estimate: est,
                    advantage: DifferenceEstimate {
                        mean,
                        std_error: se,
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn verdict_rule() {
        let t = table(2, &[(0, 3.0, 1.0), (2, 0.0, 0.0), (3, 2.0, 1.0)]);
        let v = EquilibriumVerdict::from_table(&t);
        assert_eq!(v.margin, 2.0);
        assert!(v.is_equilibrium);
        let t = table(2, &[(0, 3.0, 1.0), (2, 0.0, 0.0), (3, 1.99, 1.0)]);
        assert!(!EquilibriumVerdict::from_table(&t).is_equilibrium);
        let t = table(0, &[(0, 0.0, 0.0), (2, 0.0, 0.0)]);
        let v = EquilibriumVerdict::from_table(&t);
        assert_eq!(v.margin, 0.0);
        assert!(!v.is_equilibrium);
    }

    #[test]
    fn empty_grid_rejected() {
        let base = MarketParams::reference(2, 2.0);
        let o = DetectOptions {
            n_rounds: 1000,
            seed: 1,
            crn: true,
        };
        assert!(matches!(
            sweep_phase_diagram(&base, &[], &[2.0], o),
            Err(MarketError::EmptyGrid)
        ));
        assert!(matches!(
            sweep_phase_diagram(&base, &[2], &[], o),
            Err(MarketError::EmptyGrid)
        ));
    }

    #[test]
    fn theory_report_values() {
        let p = MarketParams::reference(5, 2.0).validate().unwrap();
        let r = theory_bound_report(&p, 0.1, 0.1).unwrap();
        assert_eq!(r.rows.len(), 5);
        let lbs: Vec<f64> = r
            .rows
            .iter()
            .filter_map(|row| row.posterior_mean_lower_bound)
            .collect();
        assert!(lbs.windows(2).all(|w| w[0] > w[1]));
        assert!(
            (r.rows[2].posterior_mean_lower_bound.unwrap() - (625.0 + 1875.0 / 7.0)).abs() < 1e-9
        );
        assert!(r.approx_slack > 0.0);
        let w = r.worst_rounding.unwrap();
        assert!(w.loss <= w.bound);
        assert!(theory_bound_report(&p, 0.5, 0.1).is_err());
    }
}
