//! Monte Carlo engine for market rounds.
//!
//! Rounds are grouped into fixed-size blocks. Each block draws from its own
//! counter-based stream and produces partial moments; blocks are merged in
//! block order, so every estimate is a pure function of the master seed and
//! the configuration, independent of the thread pool running it.
//!
//! Sellers report costs truthfully. A seller's per-round utility is measured
//! by its information rent `n F(c)/f(c)`, which has the same expectation as
//! the realized Myerson surplus `t - c n` and lower variance.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, Discrete};

use crate::belief::{BeliefEngine, BeliefState};
use crate::cost::{CostDistribution, CostModel};
use crate::error::{MarketError, Result};
use crate::mechanism::{Mechanism, MechanismOutcome};
use crate::params::{SellerRealization, StrategyProfile, ValidatedParams, VarianceType};
use crate::rng::{cell_id, mix, stream, RandomStream, StreamKey, StreamRole};

/// Rounds per random-stream block.
pub const BLOCK_ROUNDS: usize = 2048;

/// Smallest accepted `n_rounds` for utility estimates.
pub const MIN_ROUNDS: usize = 1000;

/// Streaming mean and sum of squared deviations, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.sample_variance() / self.count as f64).sqrt()
    }
}

/// Monte Carlo estimate of a seller's interim utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_rounds: usize,
    pub no_trade_count: usize,
}

impl UtilityEstimate {
    fn from_moments(m: &Moments, no_trade_count: usize) -> Self {
        Self {
            mean: m.mean,
            std_error: m.std_error(),
            n_rounds: m.count as usize,
            no_trade_count,
        }
    }
}

/// One simulated round: private draws, buyer beliefs and the mechanism outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub realizations: Vec<SellerRealization>,
    pub beliefs: Vec<BeliefState>,
    pub outcome: MechanismOutcome,
}

fn draw_type<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> VarianceType {
    if rng.random::<f64>() < mu {
        VarianceType::Low
    } else {
        VarianceType::High
    }
}

/// Type and cost of one seller, in that draw order.
fn draw_private<R: Rng + ?Sized>(params: &ValidatedParams, rng: &mut R) -> (VarianceType, f64) {
    let t = draw_type(params.mu, rng);
    let c = params.cost.sample_cost(rng);
    (t, c)
}

/// Draws every seller's type, cost and free-sample variance, forms beliefs
/// and runs the mechanism on truthful cost reports.
pub fn simulate_round<R: Rng + ?Sized>(
    params: &ValidatedParams,
    profile: &StrategyProfile,
    rng: &mut R,
) -> Result<RoundRecord> {
    check_profile(params, profile)?;
    let k = params.num_sellers;
    let mut realizations = Vec::with_capacity(k);
    let mut beliefs = Vec::with_capacity(k);
    let engine = BeliefEngine::new(params);
    for &m in profile.as_slice() {
        let (t, c) = draw_private(params, rng);
        let (s2, b) = engine.signal(t, m, rng);
        realizations.push(SellerRealization::new(t, c, m, s2)?);
        beliefs.push(b);
    }
    let costs: Vec<f64> = realizations.iter().map(|r| r.cost).collect();
    let outcome = Mechanism::from_params(params).run(&beliefs, &costs, rng)?;
    Ok(RoundRecord {
        realizations,
        beliefs,
        outcome,
    })
}

fn check_profile(params: &ValidatedParams, profile: &StrategyProfile) -> Result<()> {
    StrategyProfile::new(profile.as_slice().to_vec(), params).map(|_| ())
}

fn profile_key(profile: &StrategyProfile) -> u64 {
    profile
        .as_slice()
        .iter()
        .fold(0x0fu64, |h, &m| mix(h ^ m as u64))
}

pub(crate) fn block_sizes(n_rounds: usize) -> impl IndexedParallelIterator<Item = (u64, usize)> {
    let blocks = n_rounds.div_ceil(BLOCK_ROUNDS);
    (0..blocks).into_par_iter().map(move |b| {
        let start = b * BLOCK_ROUNDS;
        (b as u64, BLOCK_ROUNDS.min(n_rounds - start))
    })
}

/// Cell identifier used for every stream derived from `params`.
pub fn params_cell(params: &ValidatedParams) -> u64 {
    cell_id(params.num_sellers, params.ratio())
}

struct Rounds<'a> {
    params: &'a ValidatedParams,
    mech: Mechanism<CostModel>,
    engine: BeliefEngine,
    beliefs: Vec<BeliefState>,
    costs: Vec<f64>,
}

impl<'a> Rounds<'a> {
    fn new(params: &'a ValidatedParams) -> Self {
        let k = params.num_sellers;
        Self {
            params,
            mech: Mechanism::from_params(params),
            engine: BeliefEngine::new(params),
            beliefs: Vec::with_capacity(k),
            costs: Vec::with_capacity(k),
        }
    }

    /// One round under `profile`; returns the winner and the rent of `seller`
    /// (`None` on no trade).
    fn play<R: Rng + ?Sized>(
        &mut self,
        profile: &[usize],
        seller: usize,
        rng: &mut R,
    ) -> Option<(usize, f64)> {
        self.beliefs.clear();
        self.costs.clear();
        for &m in profile {
            let (t, c) = draw_private(self.params, rng);
            let (_, b) = self.engine.signal(t, m, rng);
            self.beliefs.push(b);
            self.costs.push(c);
        }
        self.mech
            .award(&self.beliefs, &self.costs, rng)
            .map(|a| (a.winner, if a.winner == seller { a.rent } else { 0.0 }))
    }
}

/// Mean and standard error of `seller`'s per-round information rent under `profile`.
pub fn estimate_seller_utility(
    params: &ValidatedParams,
    profile: &StrategyProfile,
    seller: usize,
    n_rounds: usize,
    seed: u64,
) -> Result<UtilityEstimate> {
    check_profile(params, profile)?;
    if seller >= params.num_sellers {
        return Err(MarketError::LengthMismatch(format!(
            "seller {seller} in a market of {}",
            params.num_sellers
        )));
    }
    if n_rounds < MIN_ROUNDS {
        return Err(MarketError::TooFewRounds {
            min: MIN_ROUNDS,
            got: n_rounds,
        });
    }
    let cell = params_cell(params);
    let strategy = profile_key(profile);
    let parts: Vec<(Moments, usize)> = block_sizes(n_rounds)
        .map(|(b, len)| {
            let mut rng = stream(
                seed,
                StreamKey::new(cell, strategy, StreamRole::Other(seller as u64), b),
            );
            let mut rounds = Rounds::new(params);
            let mut acc = Moments::default();
            let mut no_trade = 0;
            for _ in 0..len {
                match rounds.play(profile.as_slice(), seller, &mut rng) {
                    Some((_, u)) => acc.push(u),
                    None => {
                        no_trade += 1;
                        acc.push(0.0);
                    }
                }
            }
            (acc, no_trade)
        })
        .collect();
    let mut total = Moments::default();
    let mut no_trade = 0;
    for (m, z) in &parts {
        total.merge(m);
        no_trade += z;
    }
    Ok(UtilityEstimate::from_moments(&total, no_trade))
}

/// How often each seller wins (index `K` counts no-trade rounds).
pub fn win_counts(
    params: &ValidatedParams,
    profile: &StrategyProfile,
    n_rounds: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    check_profile(params, profile)?;
    let k = params.num_sellers;
    let cell = params_cell(params);
    let strategy = profile_key(profile);
    let parts: Vec<Vec<u64>> = block_sizes(n_rounds)
        .map(|(b, len)| {
            let mut rng = stream(
                seed,
                StreamKey::new(cell, strategy, StreamRole::Other(u64::MAX), b),
            );
            let mut rounds = Rounds::new(params);
            let mut counts = vec![0u64; k + 1];
            for _ in 0..len {
                match rounds.play(profile.as_slice(), 0, &mut rng) {
                    Some((w, _)) => counts[w] += 1,
                    None => counts[k] += 1,
                }
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; k + 1];
    for p in parts {
        for (t, c) in total.iter_mut().zip(p) {
            *t += c;
        }
    }
    Ok(total)
}

/// Estimate of `mean(base) - mean(deviation)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DifferenceEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl DifferenceEstimate {
    /// `mean / std_error`, with the sign of `mean` when the error is zero.
    pub fn z_score(&self) -> f64 {
        if self.std_error > 0.0 {
            self.mean / self.std_error
        } else if self.mean > 0.0 {
            f64::INFINITY
        } else if self.mean < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationEntry {
    pub m_dev: usize,
    pub estimate: UtilityEstimate,
    /// Base-strategy utility minus this deviation's utility.
    pub advantage: DifferenceEstimate,
}

/// Seller 0's utility for every unilateral deviation from a symmetric profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationTable {
    pub num_sellers: usize,
    pub ratio: f64,
    pub m_star: usize,
    pub crn: bool,
    /// One entry per legal strategy, in increasing order of `m_dev`.
    pub entries: Vec<DeviationEntry>,
}

impl DeviationTable {
    pub fn entry(&self, m_dev: usize) -> Option<&DeviationEntry> {
        self.entries.iter().find(|e| e.m_dev == m_dev)
    }

    pub fn base(&self) -> &DeviationEntry {
        self.entry(self.m_star).expect("base strategy present")
    }

    pub fn keys(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.m_dev).collect()
    }
}

/// Options for [`deviation_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviationOptions {
    pub n_rounds: usize,
    pub seed: u64,
    /// Common random numbers: every deviation sees the same types, costs and
    /// rival signals, and seller 0's `m'` free samples are the first `m'` of
    /// one shared sequence of observations.
    pub crn: bool,
}

/// Estimates seller 0's utility when it plays each legal `m'` and all other
/// sellers play `m_star`.
pub fn deviation_table(
    params: &ValidatedParams,
    m_star: usize,
    opts: DeviationOptions,
) -> Result<DeviationTable> {
    let strategies = params.legal_strategies();
    if !strategies.contains(&m_star) {
        return Err(MarketError::IllegalSampleCount(m_star));
    }
    if opts.n_rounds < MIN_ROUNDS {
        return Err(MarketError::TooFewRounds {
            min: MIN_ROUNDS,
            got: opts.n_rounds,
        });
    }
    let entries = if opts.crn {
        crn_entries(params, m_star, &strategies, opts)
    } else {
        independent_entries(params, m_star, &strategies, opts)?
    };
    Ok(DeviationTable {
        num_sellers: params.num_sellers,
        ratio: params.ratio(),
        m_star,
        crn: opts.crn,
        entries,
    })
}

/// Rounds given to each stratum of "number of High-type rivals".
///
/// Strata whose proportional share falls below `n_rounds / (2 * strata)` are
/// raised to that floor; the rest share the remaining rounds in proportion to
/// their probabilities (largest-remainder rounding). Every stratum gets at
/// least two rounds.
pub fn stratum_allocation(n_rounds: usize, weights: &[f64]) -> Vec<usize> {
    let s = weights.len();
    let floor = (n_rounds / (2 * s)).max(2);
    let small: Vec<bool> = weights
        .iter()
        .map(|&w| (n_rounds as f64 * w) < floor as f64)
        .collect();
    let n_small = small.iter().filter(|&&b| b).count();
    let rest = n_rounds.saturating_sub(n_small * floor);
    let big_mass: f64 = weights
        .iter()
        .zip(&small)
        .filter(|(_, &b)| !b)
        .map(|(w, _)| w)
        .sum();
    let mut alloc = vec![floor; s];
    let mut remainders = Vec::new();
    let mut assigned = 0;
    for h in 0..s {
        if small[h] {
            continue;
        }
        let exact = rest as f64 * weights[h] / big_mass;
        alloc[h] = exact.floor() as usize;
        assigned += alloc[h];
        remainders.push((exact - exact.floor(), h));
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, h) in remainders.iter().take(rest.saturating_sub(assigned)) {
        alloc[h] += 1;
    }
    alloc.iter_mut().for_each(|n| *n = (*n).max(2));
    alloc
}

/// `P(h of the K - 1 rivals are High)`.
fn rival_type_weights(params: &ValidatedParams) -> Vec<f64> {
    let rivals = params.num_sellers - 1;
    let b = Binomial::new(1.0 - params.mu, rivals as u64).expect("mu in (0, 1)");
    (0..=rivals).map(|h| b.pmf(h as u64)).collect()
}

#[derive(Clone)]
struct CrnBlock {
    utility: Vec<Moments>,
    advantage: Vec<Moments>,
    no_trade: Vec<usize>,
}

impl CrnBlock {
    fn new(s: usize) -> Self {
        Self {
            utility: vec![Moments::default(); s],
            advantage: vec![Moments::default(); s],
            no_trade: vec![0; s],
        }
    }

    fn merge(&mut self, other: &CrnBlock) {
        for d in 0..self.utility.len() {
            self.utility[d].merge(&other.utility[d]);
            self.advantage[d].merge(&other.advantage[d]);
            self.no_trade[d] += other.no_trade[d];
        }
    }
}

/// Paired deviation estimates, stratified on the number of High-type rivals.
///
/// Within a stratum with `h` High rivals, rivals `1..=h` are High and the rest
/// Low (rivals are exchangeable). Every deviation in a round shares the
/// types, costs and rival signals, and seller 0's `m'` free samples are the
/// first `m'` of one sequence of observations. Stratum means are combined
/// with their exact binomial probabilities, which keeps the estimand while
/// sampling rare rival configurations often enough to resolve them.
fn crn_entries(
    params: &ValidatedParams,
    m_star: usize,
    strategies: &[usize],
    opts: DeviationOptions,
) -> Vec<DeviationEntry> {
    let cell = params_cell(params);
    let k = params.num_sellers;
    let s = strategies.len();
    let max_m = params.max_free_samples;
    let base_idx = strategies
        .iter()
        .position(|&m| m == m_star)
        .expect("base present");
    let weights = rival_type_weights(params);
    let alloc = stratum_allocation(opts.n_rounds, &weights);

    let strata: Vec<CrnBlock> = alloc
        .iter()
        .enumerate()
        .map(|(h, &n_h)| {
            let parts: Vec<CrnBlock> = block_sizes(n_h)
                .map(|(b, len)| {
                    let key =
                        |role| StreamKey::new(cell, m_star as u64, role, ((h as u64) << 32) | b);
                    let mut shared = stream(opts.seed, key(StreamRole::Shared));
                    let mut signal = stream(opts.seed, key(StreamRole::Signal));
                    let mut own: Vec<RandomStream> = strategies
                        .iter()
                        .map(|&m| stream(opts.seed, key(StreamRole::Deviation(m))))
                        .collect();
                    let mech = Mechanism::from_params(params);
                    let engine = BeliefEngine::new(params);
                    let mut beliefs = vec![BeliefState::prior(params); k];
                    let mut costs = vec![0.0; k];
                    let mut block = CrnBlock::new(s);
                    let mut u = vec![0.0; s];
                    let mut s2 = vec![0.0; max_m + 1];
                    for _ in 0..len {
                        let (t0, c0) = draw_private(params, &mut shared);
                        costs[0] = c0;
                        for j in 1..k {
                            let t = if j <= h {
                                VarianceType::High
                            } else {
                                VarianceType::Low
                            };
                            costs[j] = params.cost.sample_cost(&mut shared);
                            beliefs[j] = engine.signal(t, m_star, &mut shared).1;
                        }
                        engine.nested_draw(t0, max_m, &mut signal, &mut s2);
                        for (d, &m) in strategies.iter().enumerate() {
                            beliefs[0] = if m >= 2 {
                                engine.posterior(m, s2[m])
                            } else {
                                engine.prior()
                            };
                            u[d] = match mech.award(&beliefs, &costs, &mut own[d]) {
                                Some(a) if a.winner == 0 => a.rent,
                                Some(_) => 0.0,
                                None => {
                                    block.no_trade[d] += 1;
                                    0.0
                                }
                            };
                        }
                        for d in 0..s {
                            block.utility[d].push(u[d]);
                            block.advantage[d].push(u[base_idx] - u[d]);
                        }
                    }
                    block
                })
                .collect();
            let mut total = CrnBlock::new(s);
            parts.iter().for_each(|p| total.merge(p));
            total
        })
        .collect();

    let combine = |pick: &dyn Fn(&CrnBlock) -> &Moments| {
        let (mut mean, mut var) = (0.0, 0.0);
        for (w, st) in weights.iter().zip(&strata) {
            let m = pick(st);
            mean += w * m.mean;
            var += w * w * m.sample_variance() / m.count as f64;
        }
        DifferenceEstimate {
            mean,
            std_error: var.sqrt(),
        }
    };
    strategies
        .iter()
        .enumerate()
        .map(|(d, &m)| {
            let utility = combine(&|b: &CrnBlock| &b.utility[d]);
            DeviationEntry {
                m_dev: m,
                estimate: UtilityEstimate {
                    mean: utility.mean,
                    std_error: utility.std_error,
                    n_rounds: opts.n_rounds.max(alloc.iter().sum()),
                    no_trade_count: strata.iter().map(|b| b.no_trade[d]).sum(),
                },
                advantage: combine(&|b: &CrnBlock| &b.advantage[d]),
            }
        })
        .collect()
}

fn independent_entries(
    params: &ValidatedParams,
    m_star: usize,
    strategies: &[usize],
    opts: DeviationOptions,
) -> Result<Vec<DeviationEntry>> {
    let cell = params_cell(params);
    let base = StrategyProfile::symmetric(m_star, params)?;
    let estimates: Vec<UtilityEstimate> = strategies
        .iter()
        .map(|&m| {
            let profile = base.with_deviation(0, m, params)?;
            let parts: Vec<(Moments, usize)> = block_sizes(opts.n_rounds)
                .map(|(b, len)| {
                    let mut rng = stream(
                        opts.seed,
                        StreamKey::new(cell, m_star as u64, StreamRole::Independent(m), b),
                    );
                    let mut rounds = Rounds::new(params);
                    let mut acc = Moments::default();
                    let mut no_trade = 0;
                    for _ in 0..len {
                        match rounds.play(profile.as_slice(), 0, &mut rng) {
                            Some((_, u)) => acc.push(u),
                            None => {
                                no_trade += 1;
                                acc.push(0.0);
                            }
                        }
                    }
                    (acc, no_trade)
                })
                .collect();
            let mut total = Moments::default();
            let mut no_trade = 0;
            for (m, z) in &parts {
                total.merge(m);
                no_trade += z;
            }
            Ok(UtilityEstimate::from_moments(&total, no_trade))
        })
        .collect::<Result<_>>()?;
    let base_idx = strategies
        .iter()
        .position(|&m| m == m_star)
        .expect("base present");
    let b = estimates[base_idx];
    Ok(strategies
        .iter()
        .zip(&estimates)
        .map(|(&m, e)| DeviationEntry {
            m_dev: m,
            estimate: *e,
            advantage: if m == m_star {
                DifferenceEstimate {
                    mean: 0.0,
                    std_error: 0.0,
                }
            } else {
                DifferenceEstimate {
                    mean: b.mean - e.mean,
                    std_error: (b.std_error.powi(2) + e.std_error.powi(2)).sqrt(),
                }
            },
        })
        .collect())
}

/// Sample means over rounds of the two sides of the payment identity,
/// aggregated over all sellers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaymentIdentityReport {
    pub n_rounds: usize,
    /// Mean of `t - c n`.
    pub surplus: f64,
    /// Mean of `n F(c)/f(c)`.
    pub rent: f64,
    /// Paired standard error of `(t - c n) - rent`.
    pub surplus_minus_rent_se: f64,
    /// Mean of `t`.
    pub payment: f64,
    /// Mean of `n ψ(c)`.
    pub virtual_spend: f64,
    /// Paired standard error of `t - n ψ(c)`.
    pub payment_minus_virtual_se: f64,
}

/// Runs full rounds with ex-post Myerson payments and compares realized
/// surplus with information rents.
pub fn payment_identity(
    params: &ValidatedParams,
    profile: &StrategyProfile,
    n_rounds: usize,
    seed: u64,
) -> Result<PaymentIdentityReport> {
    check_profile(params, profile)?;
    let cell = params_cell(params);
    let strategy = profile_key(profile);
    let parts: Vec<Result<[Moments; 6]>> = block_sizes(n_rounds)
        .map(|(b, len)| {
            let mut rng = stream(
                seed,
                StreamKey::new(cell, strategy, StreamRole::Other(u64::MAX - 1), b),
            );
            let mut acc = [Moments::default(); 6];
            for _ in 0..len {
                let rec = simulate_round(params, profile, &mut rng)?;
                let (mut surplus, mut rent, mut pay, mut spend) = (0.0, 0.0, 0.0, 0.0);
                if let Some(w) = rec.outcome.winner {
                    let n = rec.outcome.allocation[w] as f64;
                    let c = rec.realizations[w].cost;
                    surplus = rec.outcome.payments[w] - c * n;
                    rent = rec.outcome.rents[w];
                    pay = rec.outcome.payments[w];
                    spend = n * params.cost.psi(c);
                }
                for (a, x) in
                    acc.iter_mut()
                        .zip([surplus, rent, surplus - rent, pay, spend, pay - spend])
                {
                    a.push(x);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = [Moments::default(); 6];
    for p in parts {
        for (t, m) in total.iter_mut().zip(p?.iter()) {
            t.merge(m);
        }
    }
    Ok(PaymentIdentityReport {
        n_rounds,
        surplus: total[0].mean,
        rent: total[1].mean,
        surplus_minus_rent_se: total[2].std_error(),
        payment: total[3].mean,
        virtual_spend: total[4].mean,
        payment_minus_virtual_se: total[5].std_error(),
    })
}

/// Lower bound on a seller's utility in a symmetric profile where everyone
/// shares `m` samples, at the point the bound is derived in the argument for
/// an uninformative equilibrium:
/// `(ℓ/L) N₀ (1/K) (1/(L (K+1)))`, with `N₀ = 1` for `m >= 2` and
/// `N₀ = sqrt(prior_mean_var / (λ ψ(c_max)))` for `m = 0`.
///
/// The headline constant `1/(K(K+1)L²)` omits the `ℓ` factor that the
/// derivation produces; this function keeps it.
pub fn symmetric_utility_lower_bound(params: &ValidatedParams, m: usize) -> f64 {
    let c = &params.cost;
    let (lo, hi) = (c.density_lower(), c.density_upper());
    let k = params.num_sellers as f64;
    let n0 = if m == 0 {
        (params.prior_mean_var() / (params.lambda * c.psi(c.c_max()))).sqrt()
    } else {
        1.0
    };
    lo / hi * n0 / k / (hi * (k + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::MarketParams;

    fn reference(k: usize, ratio: f64) -> ValidatedParams {
        MarketParams::reference(k, ratio).validate().unwrap()
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.5).collect();
        let mut one = Moments::default();
        xs.iter().for_each(|&x| one.push(x));
        let mut merged = Moments::default();
        for chunk in xs.chunks(77) {
            let mut m = Moments::default();
            chunk.iter().for_each(|&x| m.push(x));
            merged.merge(&m);
        }
        assert_eq!(one.count, merged.count);
        assert!((one.mean - merged.mean).abs() < 1e-12);
        assert!((one.sample_variance() - merged.sample_variance()).abs() < 1e-9);
    }

    #[test]
    fn round_invariants() {
        let p = reference(5, 20.0);
        let profile = StrategyProfile::new(vec![0, 2, 3, 4, 5], &p).unwrap();
        let mut rng = stream(3, StreamKey::new(0, 0, StreamRole::Other(0), 0));
        for _ in 0..500 {
            let rec = simulate_round(&p, &profile, &mut rng).unwrap();
            for r in &rec.realizations {
                assert_eq!(r.sample_variance.is_some(), r.free_samples >= 2);
                assert!(p.cost.in_support(r.cost));
            }
            let w = rec.outcome.winner.unwrap();
            assert_eq!(rec.outcome.allocation.iter().filter(|&&n| n > 0).count(), 1);
            let best = rec
                .outcome
                .scores
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert_eq!(rec.outcome.scores[w], best);
            let expected = (rec.beliefs[w].sigma_bar()
                / (p.lambda * p.cost.psi(rec.realizations[w].cost)).sqrt())
            .floor();
            assert_eq!(rec.outcome.allocation[w] as f64, expected);
            for i in 0..5 {
                assert!(rec.outcome.rents[i] >= 0.0);
                if i != w {
                    assert_eq!(rec.outcome.rents[i], 0.0);
                } else {
                    let n = rec.outcome.allocation[i] as f64;
                    assert!(rec.outcome.payments[i] - n * rec.realizations[i].cost >= -1e-9);
                }
            }
        }
    }

    #[test]
    fn uninformative_profile_picks_cheapest() {
        let p = reference(4, 10.0);
        let profile = StrategyProfile::symmetric(0, &p).unwrap();
        let mut rng = stream(8, StreamKey::new(0, 0, StreamRole::Other(1), 0));
        for _ in 0..500 {
            let rec = simulate_round(&p, &profile, &mut rng).unwrap();
            let cheapest = (0..4)
                .min_by(|&a, &b| {
                    rec.realizations[a]
                        .cost
                        .total_cmp(&rec.realizations[b].cost)
                })
                .unwrap();
            assert_eq!(rec.outcome.winner, Some(cheapest));
        }
    }

    #[test]
    fn singleton_market_always_wins() {
        let p = reference(1, 5.0);
        let counts = win_counts(&p, &StrategyProfile::symmetric(3, &p).unwrap(), 5000, 1).unwrap();
        assert_eq!(counts, vec![5000, 0]);
    }

    #[test]
    fn estimate_rejects_small_runs_and_bad_sellers() {
        let p = reference(3, 5.0);
        let prof = StrategyProfile::symmetric(0, &p).unwrap();
        assert!(estimate_seller_utility(&p, &prof, 0, 999, 1).is_err());
        assert!(estimate_seller_utility(&p, &prof, 3, 5000, 1).is_err());
    }

    #[test]
    fn estimates_are_deterministic_across_pools() {
        let p = reference(3, 50.0);
        let prof = StrategyProfile::symmetric(2, &p).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_seller_utility(&p, &prof, 0, 10_000, 42).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn deviation_table_keys_and_base() {
        let p = reference(4, 10.0);
        for crn in [true, false] {
            let t = deviation_table(
                &p,
                3,
                DeviationOptions {
                    n_rounds: 2000,
                    seed: 5,
                    crn,
                },
            )
            .unwrap();
            assert_eq!(t.keys(), vec![0, 2, 3, 4, 5]);
            assert_eq!(t.base().advantage.mean, 0.0);
            assert_eq!(t.base().advantage.std_error, 0.0);
        }
        assert!(deviation_table(
            &p,
            1,
            DeviationOptions {
                n_rounds: 2000,
                seed: 5,
                crn: true
            }
        )
        .is_err());
    }

    #[test]
    fn crn_advantage_is_difference_of_means() {
        let p = reference(3, 100.0);
        let t = deviation_table(
            &p,
            0,
            DeviationOptions {
                n_rounds: 4000,
                seed: 9,
                crn: true,
            },
        )
        .unwrap();
        let base = t.base().estimate.mean;
        for e in &t.entries {
            assert!((e.advantage.mean - (base - e.estimate.mean)).abs() < 1e-9);
        }
    }

    #[test]
    fn lower_bound_uses_prior_for_zero_samples() {
        let p = reference(2, 2.0);
        let b0 = symmetric_utility_lower_bound(&p, 0);
        let b2 = symmetric_utility_lower_bound(&p, 2);
        // uniform: ℓ = L = 1/1.5
        let base = 1.0 / 2.0 / (1.0 / 1.5 * 3.0);
        assert!((b2 - base).abs() < 1e-12);
        let n0 = (p.prior_mean_var() / (0.007 * 3.5)).sqrt();
        assert!((b0 - base * n0).abs() < 1e-9);
    }
}
