//! The buyer's single-sourcing procurement mechanism.
//!
//! The buyer ranks sellers by `σ̄² ψ(c)`, buys `⌊σ̄ / sqrt(λ ψ(c))⌋` samples
//! from the lowest-scoring seller and pays the Myerson payment for that
//! allocation rule, so truthful cost reporting is a Bayesian equilibrium.

use rand::Rng;
use serde::Serialize;

use crate::belief::BeliefState;
use crate::cost::{CostDistribution, CostModel};
use crate::error::{MarketError, Result};
use crate::params::MarketParams;

/// Result of one procurement round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismOutcome {
    /// `None` when the floored allocation is zero and nothing is bought.
    pub winner: Option<usize>,
    /// Per-seller purchased sample counts; at most one entry is nonzero.
    pub allocation: Vec<u64>,
    /// Unfloored allocation `n*` of the selected seller.
    pub relaxed_allocation: f64,
    pub payments: Vec<f64>,
    /// Information rents `n_i F(c_i)/f(c_i)`.
    pub rents: Vec<f64>,
    /// Estimator weights; all mass on the winner, all zero on no trade.
    pub weights: Vec<f64>,
    /// Ranking scores `σ̄_i² ψ(c_i)`.
    pub scores: Vec<f64>,
    /// `-σ̄²/n - λ t`; `None` on a no-trade round, where the variance of
    /// the estimator is undefined.
    pub buyer_utility: Option<f64>,
}

impl MechanismOutcome {
    pub fn is_no_trade(&self) -> bool {
        self.winner.is_none()
    }
}

/// Winner, allocation and rent without payments: what the simulator needs
/// per round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Award {
    pub winner: usize,
    pub relaxed: f64,
    pub samples: u64,
    pub rent: f64,
}

/// The mechanism for a fixed payment weight and cost distribution.
#[derive(Debug, Clone, Copy)]
pub struct Mechanism<D> {
    lambda: f64,
    costs: D,
}

impl Mechanism<CostModel> {
    pub fn from_params(params: &MarketParams) -> Self {
        Self {
            lambda: params.lambda,
            costs: params.cost,
        }
    }
}

impl<D: CostDistribution> Mechanism<D> {
    pub fn new(lambda: f64, costs: D) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(MarketError::NonPositive("lambda", lambda));
        }
        Ok(Self { lambda, costs })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn costs(&self) -> &D {
        &self.costs
    }

    pub fn score(&self, belief: &BeliefState, cost: f64) -> f64 {
        belief.posterior_mean_var * self.costs.psi(cost)
    }

    /// `⌊σ̄ / sqrt(λ ψ(c))⌋` for a seller with posterior mean variance `var` and cost `c`.
    pub fn floored_allocation(&self, var: f64, cost: f64) -> u64 {
        floor_allocation(var.sqrt() / (self.lambda * self.costs.psi(cost)).sqrt())
    }

    fn check_inputs(&self, beliefs: &[BeliefState], costs: &[f64]) -> Result<()> {
        if beliefs.is_empty() {
            return Err(MarketError::EmptyMarket);
        }
        if beliefs.len() != costs.len() {
            return Err(MarketError::LengthMismatch(format!(
                "{} beliefs vs {} costs",
                beliefs.len(),
                costs.len()
            )));
        }
        for &c in costs {
            self.costs.virtual_cost(c)?;
        }
        Ok(())
    }

    /// Index minimizing `σ̄_i² ψ(c_i)`; exact ties are broken uniformly at random.
    pub fn select_winner<R: Rng + ?Sized>(
        &self,
        beliefs: &[BeliefState],
        costs: &[f64],
        rng: &mut R,
    ) -> Result<usize> {
        self.check_inputs(beliefs, costs)?;
        Ok(self.select_unchecked(beliefs, costs, rng))
    }

    fn select_unchecked<R: Rng + ?Sized>(
        &self,
        beliefs: &[BeliefState],
        costs: &[f64],
        rng: &mut R,
    ) -> usize {
        let mut best = 0;
        let mut best_score = self.score(&beliefs[0], costs[0]);
        let mut ties = 1u32;
        for i in 1..beliefs.len() {
            let s = self.score(&beliefs[i], costs[i]);
            if s < best_score {
                best = i;
                best_score = s;
                ties = 1;
            } else if s == best_score {
                ties += 1;
            }
        }
        if ties == 1 {
            return best;
        }
        let pick = rng.random_range(0..ties);
        (0..beliefs.len())
            .filter(|&i| self.score(&beliefs[i], costs[i]) == best_score)
            .nth(pick as usize)
            .expect("tie index in range")
    }

    /// Winner, allocation and information rent; `None` on a no-trade round.
    /// Inputs are trusted: the simulator only produces in-support costs.
    pub fn award<R: Rng + ?Sized>(
        &self,
        beliefs: &[BeliefState],
        costs: &[f64],
        rng: &mut R,
    ) -> Option<Award> {
        let winner = self.select_unchecked(beliefs, costs, rng);
        let var = beliefs[winner].posterior_mean_var;
        let c = costs[winner];
        let relaxed = var.sqrt() / (self.lambda * self.costs.psi(c)).sqrt();
        let samples = floor_allocation(relaxed);
        if samples == 0 {
            return None;
        }
        Some(Award {
            winner,
            relaxed,
            samples,
            rent: information_rent(samples, c, &self.costs),
        })
    }

    /// Ex-post Myerson payment to a winner with the given belief and cost
    /// facing `rival_score = min_j σ̄_j² ψ(c_j)` (infinite with no rivals).
    ///
    /// `t = c n(c) + ∫_c^τ n(s) ds` with `τ` the highest cost at which the
    /// seller still wins. `n(s)` is a step function, so the integral is the
    /// sum of the step widths: `n(s) >= k` iff `s <= ψ⁻¹(σ̄² / (λ k²))`.
    pub fn myerson_payment_expost(
        &self,
        winner: &BeliefState,
        cost: f64,
        rival_score: f64,
    ) -> Result<f64> {
        self.costs.virtual_cost(cost)?;
        let var = winner.posterior_mean_var;
        let own = var * self.costs.psi(cost);
        if own.is_nan() || own > rival_score {
            return Err(MarketError::NotWinning {
                score: own,
                rival: rival_score,
            });
        }
        let c_max = self.costs.c_max();
        let tau = if rival_score.is_infinite() {
            c_max
        } else {
            self.costs
                .inverse_virtual_cost_clamped(rival_score / var)
                .clamp(cost, c_max)
        };
        let n_c = self.floored_allocation(var, cost);
        let n_tau = self.floored_allocation(var, tau);
        let mut integral = n_tau as f64 * (tau - cost);
        for k in (n_tau + 1)..=n_c {
            let edge = self
                .costs
                .inverse_virtual_cost_clamped(var / (self.lambda * (k * k) as f64))
                .clamp(cost, tau);
            integral += edge - cost;
        }
        Ok(cost * n_c as f64 + integral)
    }

    /// Runs the full mechanism on reported costs.
    pub fn run<R: Rng + ?Sized>(
        &self,
        beliefs: &[BeliefState],
        costs: &[f64],
        rng: &mut R,
    ) -> Result<MechanismOutcome> {
        self.check_inputs(beliefs, costs)?;
        let k = beliefs.len();
        let scores: Vec<f64> = (0..k).map(|i| self.score(&beliefs[i], costs[i])).collect();
        let winner = self.select_unchecked(beliefs, costs, rng);
        let var = beliefs[winner].posterior_mean_var;
        let c = costs[winner];
        let relaxed = relaxed_allocation(var.sqrt(), self.costs.psi(c), self.lambda)?;
        let samples = floor_allocation(relaxed);

        let mut outcome = MechanismOutcome {
            winner: None,
            allocation: vec![0; k],
            relaxed_allocation: relaxed,
            payments: vec![0.0; k],
            rents: vec![0.0; k],
            weights: vec![0.0; k],
            scores,
            buyer_utility: None,
        };
        if samples == 0 {
            return Ok(outcome);
        }
        let rival = outcome
            .scores
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != winner)
            .map(|(_, &s)| s)
            .fold(f64::INFINITY, f64::min);
        let payment = self.myerson_payment_expost(&beliefs[winner], c, rival)?;
        outcome.winner = Some(winner);
        outcome.allocation[winner] = samples;
        outcome.payments[winner] = payment;
        outcome.rents[winner] = information_rent(samples, c, &self.costs);
        let vars: Vec<f64> = beliefs.iter().map(|b| b.posterior_mean_var).collect();
        outcome.weights = optimal_weights(&outcome.allocation, &vars)?;
        let variance = estimator_variance(&outcome.allocation, &outcome.weights, &vars)?;
        outcome.buyer_utility = Some(-variance - self.lambda * payment);
        Ok(outcome)
    }
}

/// `n* = σ̄ / sqrt(λ ψ(c))`.
pub fn relaxed_allocation(sigma_bar: f64, psi_c: f64, lambda: f64) -> Result<f64> {
    for (name, v) in [
        ("sigma_bar", sigma_bar),
        ("psi(c)", psi_c),
        ("lambda", lambda),
    ] {
        if v.is_nan() || v <= 0.0 {
            return Err(MarketError::NonPositive(name, v));
        }
    }
    Ok(sigma_bar / (lambda * psi_c).sqrt())
}

pub fn floor_allocation(relaxed: f64) -> u64 {
    relaxed.floor() as u64
}

/// Variance-minimizing weights `w_i ∝ n_i / σ̄_i²`.
pub fn optimal_weights(allocation: &[u64], vars: &[f64]) -> Result<Vec<f64>> {
    if allocation.len() != vars.len() {
        return Err(MarketError::LengthMismatch(format!(
            "{} allocations vs {} variances",
            allocation.len(),
            vars.len()
        )));
    }
    if let Some(&v) = vars.iter().find(|&&v| v.is_nan() || v <= 0.0) {
        return Err(MarketError::NonPositive("posterior mean variance", v));
    }
    let precision: Vec<f64> = allocation
        .iter()
        .zip(vars)
        .map(|(&n, &v)| n as f64 / v)
        .collect();
    let total: f64 = precision.iter().sum();
    if total == 0.0 {
        return Err(MarketError::ZeroAllocation);
    }
    Ok(precision.into_iter().map(|p| p / total).collect())
}

/// `Σ w_i² σ̄_i² / n_i`, skipping zero-weight sellers.
pub fn estimator_variance(allocation: &[u64], weights: &[f64], vars: &[f64]) -> Result<f64> {
    if allocation.len() != weights.len() || allocation.len() != vars.len() {
        return Err(MarketError::LengthMismatch(
            "allocation, weights and variances".into(),
        ));
    }
    let mut total = 0.0;
    for i in 0..allocation.len() {
        if weights[i] == 0.0 {
            continue;
        }
        if allocation[i] == 0 {
            return Err(MarketError::WeightWithoutSamples(i));
        }
        total += weights[i] * weights[i] * vars[i] / allocation[i] as f64;
    }
    Ok(total)
}

/// `n F(c)/f(c)`: the winner's expected surplus under the Myerson payment.
pub fn information_rent<D: CostDistribution + ?Sized>(samples: u64, cost: f64, costs: &D) -> f64 {
    samples as f64 * costs.rent_rate(cost)
}

/// Buyer objective `-var/n - λ n ψ(c)` at a (possibly fractional) allocation,
/// with the payment replaced by its expected Myerson value.
pub fn buyer_objective(var: f64, psi_c: f64, lambda: f64, samples: f64) -> f64 {
    -var / samples - lambda * samples * psi_c
}

/// Rounding loss of flooring the relaxed allocation, and the bound
/// `var / (n* (n* - 1))` it never exceeds (for `n* >= 2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundingLoss {
    pub relaxed_allocation: f64,
    pub relaxed_objective: f64,
    pub floored_objective: f64,
    pub loss: f64,
    pub bound: f64,
    /// `loss / |relaxed objective|`.
    pub relative_loss: f64,
    /// `1 / (n* - 1)`.
    pub relative_bound: f64,
}

pub fn rounding_loss(var: f64, psi_c: f64, lambda: f64) -> Result<RoundingLoss> {
    let relaxed = relaxed_allocation(var.sqrt(), psi_c, lambda)?;
    let floored = relaxed.floor();
    let relaxed_objective = buyer_objective(var, psi_c, lambda, relaxed);
    let floored_objective = buyer_objective(var, psi_c, lambda, floored);
    let loss = relaxed_objective - floored_objective;
    Ok(RoundingLoss {
        relaxed_allocation: relaxed,
        relaxed_objective,
        floored_objective,
        loss,
        bound: var / (relaxed * (relaxed - 1.0)),
        relative_loss: loss / relaxed_objective.abs(),
        relative_bound: 1.0 / (relaxed - 1.0),
    })
}
