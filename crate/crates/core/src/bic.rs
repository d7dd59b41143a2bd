//! Empirical incentive-compatibility check.
//!
//! With beliefs held fixed, seller 0 faces rivals whose costs are redrawn
//! every round. Each round is shared by all (true cost, report) pairs, so the
//! truthful-minus-misreport difference has a paired standard error.

use rayon::prelude::*;
use serde::Serialize;

use crate::belief::BeliefState;
use crate::cost::CostDistribution;
use crate::error::{MarketError, Result};
use crate::mechanism::Mechanism;
use crate::params::ValidatedParams;
use crate::rng::{mix, stream, StreamKey, StreamRole};
use crate::simulator::{block_sizes, DifferenceEstimate, Moments};

/// Seller 0's utility at one `(true_cost, report)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BicCell {
    pub true_cost: f64,
    pub report: f64,
    pub misreport_utility: f64,
    pub truthful_utility: f64,
    /// Truthful minus misreport utility.
    pub gain_from_truth: DifferenceEstimate,
}

/// `(t(r), n(r))` for seller 0 reporting `r` against `rival_score`.
fn terms(
    mech: &Mechanism<crate::cost::CostModel>,
    own: &BeliefState,
    report: f64,
    rival_score: f64,
) -> Result<(f64, f64)> {
    if mech.score(own, report) > rival_score {
        return Ok((0.0, 0.0));
    }
    let n = mech.floored_allocation(own.posterior_mean_var, report);
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((
        mech.myerson_payment_expost(own, report, rival_score)?,
        n as f64,
    ))
}

/// Estimates seller 0's expected utility `E[t(r) - c n(r)]` for every true
/// cost `c` and report `r`, over `n_draws` rival-cost draws.
///
/// `beliefs[0]` is seller 0; the rest are its rivals.
pub fn empirical_bic(
    params: &ValidatedParams,
    beliefs: &[BeliefState],
    true_costs: &[f64],
    reports: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<Vec<BicCell>> {
    if beliefs.is_empty() {
        return Err(MarketError::EmptyMarket);
    }
    for &c in true_costs.iter().chain(reports) {
        params.cost.virtual_cost(c)?;
    }
    let mech = Mechanism::from_params(params);
    let cell = mix(beliefs.len() as u64 ^ 0xb1c);
    let (nc, nr) = (true_costs.len(), reports.len());

    type Acc = (Vec<Moments>, Vec<Moments>, Vec<Moments>);
    let parts: Vec<Result<Acc>> = block_sizes(n_draws)
        .map(|(b, len)| {
            let mut rng = stream(seed, StreamKey::new(cell, 0, StreamRole::Shared, b));
            let mut mis = vec![Moments::default(); nc * nr];
            let mut tru = vec![Moments::default(); nc];
            let mut gain = vec![Moments::default(); nc * nr];
            let mut by_report = vec![(0.0, 0.0); nr];
            let mut by_truth = vec![(0.0, 0.0); nc];
            for _ in 0..len {
                let rival = beliefs[1..]
                    .iter()
                    .map(|bel| mech.score(bel, params.cost.sample_cost(&mut rng)))
                    .fold(f64::INFINITY, f64::min);
                for (slot, &r) in by_report.iter_mut().zip(reports) {
                    *slot = terms(&mech, &beliefs[0], r, rival)?;
                }
                for (slot, &c) in by_truth.iter_mut().zip(true_costs) {
                    *slot = terms(&mech, &beliefs[0], c, rival)?;
                }
                for (i, &c) in true_costs.iter().enumerate() {
                    let u_true = by_truth[i].0 - c * by_truth[i].1;
                    tru[i].push(u_true);
                    for (j, &(t, n)) in by_report.iter().enumerate() {
                        let u = t - c * n;
                        mis[i * nr + j].push(u);
                        gain[i * nr + j].push(u_true - u);
                    }
                }
            }
            Ok((mis, tru, gain))
        })
        .collect();

    let mut mis = vec![Moments::default(); nc * nr];
    let mut tru = vec![Moments::default(); nc];
    let mut gain = vec![Moments::default(); nc * nr];
    for p in parts {
        let (m, t, g) = p?;
        mis.iter_mut().zip(&m).for_each(|(a, b)| a.merge(b));
        tru.iter_mut().zip(&t).for_each(|(a, b)| a.merge(b));
        gain.iter_mut().zip(&g).for_each(|(a, b)| a.merge(b));
    }
    let mut out = Vec::with_capacity(nc * nr);
    for (i, &c) in true_costs.iter().enumerate() {
        for (j, &r) in reports.iter().enumerate() {
            let g = &gain[i * nr + j];
            out.push(BicCell {
                true_cost: c,
                report: r,
                misreport_utility: mis[i * nr + j].mean,
                truthful_utility: tru[i].mean,
                gain_from_truth: DifferenceEstimate {
                    mean: g.mean,
                    std_error: g.std_error(),
                },
            });
        }
    }
    Ok(out)
}
