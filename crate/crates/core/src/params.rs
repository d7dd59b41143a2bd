//! Exogenous market constants, per-seller realizations and free-sample
//! strategy profiles.
//!
//! The unknown data mean is fixed to zero everywhere: only the sample
//! variance of the free samples reaches the buyer, and it does not depend on
//! the mean.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::cost::{check_regularity, CostDistribution, CostModel};
use crate::error::{MarketError, Result};

/// Default constant in the approximation condition `sigma_low >= alpha * sqrt(lambda * psi(c_max))`.
pub const DEFAULT_ALPHA: f64 = 3.0;

/// Simulation constants used throughout the reproduction grid.
pub mod reference {
    pub const SIGMA_HIGH: f64 = 50.0;
    pub const MU: f64 = 0.6;
    pub const LAMBDA: f64 = 0.007;
    pub const C_MIN: f64 = 0.5;
    pub const C_MAX: f64 = 2.0;
    pub const MAX_FREE_SAMPLES: usize = 5;
    pub const N_ROUNDS: usize = 100_000;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarianceType {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub sigma_low: f64,
    pub sigma_high: f64,
    /// Prior probability that a seller is the low-variance type.
    pub mu: f64,
    /// Buyer's weight on payments relative to estimation variance.
    pub lambda: f64,
    pub num_sellers: usize,
    pub max_free_samples: usize,
    pub cost: CostModel,
}

impl MarketParams {
    /// Reference constants with `sigma_high = 50` and `sigma_low = 50 / ratio`.
    pub fn reference(num_sellers: usize, ratio: f64) -> Self {
        Self {
            sigma_low: reference::SIGMA_HIGH / ratio,
            sigma_high: reference::SIGMA_HIGH,
            mu: reference::MU,
            lambda: reference::LAMBDA,
            num_sellers,
            max_free_samples: reference::MAX_FREE_SAMPLES,
            cost: CostModel::uniform(reference::C_MIN, reference::C_MAX)
                .expect("reference cost support is valid"),
        }
    }

    pub fn ratio(&self) -> f64 {
        self.sigma_high / self.sigma_low
    }

    pub fn var_low(&self) -> f64 {
        self.sigma_low * self.sigma_low
    }

    pub fn var_high(&self) -> f64 {
        self.sigma_high * self.sigma_high
    }

    pub fn variance_of(&self, t: VarianceType) -> f64 {
        match t {
            VarianceType::Low => self.var_low(),
            VarianceType::High => self.var_high(),
        }
    }

    /// Prior mean of the variance, `mu * sigma_low^2 + (1 - mu) * sigma_high^2`.
    pub fn prior_mean_var(&self) -> f64 {
        self.mu * self.var_low() + (1.0 - self.mu) * self.var_high()
    }

    /// Checks every invariant and collects one message per violated field.
    pub fn validate(self) -> Result<ValidatedParams> {
        let mut errs = Vec::new();
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if !finite_pos(self.sigma_low) {
            errs.push(format!(
                "sigma_low must be positive, got {}",
                self.sigma_low
            ));
        }
        if !finite_pos(self.sigma_high) {
            errs.push(format!(
                "sigma_high must be positive, got {}",
                self.sigma_high
            ));
        }
        if self.sigma_low.is_nan() || self.sigma_low >= self.sigma_high {
            errs.push(format!(
                "sigma_low < sigma_high strictness violated ({} >= {})",
                self.sigma_low, self.sigma_high
            ));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            errs.push(format!("mu must lie in (0, 1), got {}", self.mu));
        }
        if !finite_pos(self.lambda) {
            errs.push(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.num_sellers < 1 {
            errs.push("K must be at least 1".to_string());
        }
        if self.max_free_samples < 2 {
            errs.push(format!(
                "M must be at least 2, got {}",
                self.max_free_samples
            ));
        }
        if let Err(e) = check_regularity(&self.cost) {
            errs.push(e.to_string());
        }
        if !errs.is_empty() {
            return Err(MarketError::InvalidParams(errs));
        }
        Ok(ValidatedParams::new(self, DEFAULT_ALPHA))
    }
}

/// Parameters that passed [`MarketParams::validate`], with the diagnostics
/// computed once at validation time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedParams {
    params: MarketParams,
    /// `sigma_low / sqrt(lambda * psi(c_max))`: the smallest relaxed allocation
    /// any winner can receive.
    pub n_min: f64,
    pub alpha: f64,
    /// `sigma_low - alpha * sqrt(lambda * psi(c_max))`; negative when the
    /// approximation condition fails. Reported, never enforced.
    pub approx_slack: f64,
}

impl ValidatedParams {
    fn new(params: MarketParams, alpha: f64) -> Self {
        let unit = (params.lambda * params.cost.psi(params.cost.c_max())).sqrt();
        Self {
            n_min: params.sigma_low / unit,
            alpha,
            approx_slack: params.sigma_low - alpha * unit,
            params,
        }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self::new(self.params, alpha)
    }

    /// Whether the floor allocation is guaranteed to be at least 3.
    pub fn n_min_ok(&self) -> bool {
        self.n_min >= 3.0
    }

    pub fn approx_condition_holds(&self) -> bool {
        self.approx_slack >= 0.0
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn into_inner(self) -> MarketParams {
        self.params
    }

    pub fn legal_strategies(&self) -> Vec<usize> {
        legal_strategy_set(self.params.max_free_samples).expect("validated M >= 2")
    }
}

impl Deref for ValidatedParams {
    type Target = MarketParams;

    fn deref(&self) -> &MarketParams {
        &self.params
    }
}

/// `{0, 2, 3, ..., M}`.
pub fn legal_strategy_set(max_free_samples: usize) -> Result<Vec<usize>> {
    if max_free_samples < 2 {
        return Err(MarketError::MaxSamplesTooSmall(max_free_samples));
    }
    Ok(std::iter::once(0).chain(2..=max_free_samples).collect())
}

pub fn is_legal_strategy(m: usize, max_free_samples: usize) -> bool {
    m == 0 || (2..=max_free_samples).contains(&m)
}

/// One seller's private draw for a single round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SellerRealization {
    pub variance_type: VarianceType,
    pub cost: f64,
    pub free_samples: usize,
    /// Present exactly when `free_samples >= 2`.
    pub sample_variance: Option<f64>,
}

impl SellerRealization {
    pub fn new(
        variance_type: VarianceType,
        cost: f64,
        free_samples: usize,
        sample_variance: Option<f64>,
    ) -> Result<Self> {
        if free_samples == 1 {
            return Err(MarketError::IllegalSampleCount(1));
        }
        check_sample_variance(free_samples, sample_variance)?;
        Ok(Self {
            variance_type,
            cost,
            free_samples,
            sample_variance,
        })
    }
}

pub(crate) fn check_sample_variance(m: usize, s2: Option<f64>) -> Result<()> {
    match (m, s2) {
        (1, _) => Err(MarketError::IllegalSampleCount(1)),
        (0, None) => Ok(()),
        (0, Some(_)) | (_, None) => Err(MarketError::SampleVariancePresence {
            m,
            present: s2.is_some(),
        }),
        (_, Some(v)) if !(v >= 0.0 && v.is_finite()) => Err(MarketError::NegativeSampleVariance(v)),
        _ => Ok(()),
    }
}

/// Free-sample commitments, one per seller.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrategyProfile(Vec<usize>);

impl StrategyProfile {
    pub fn new(commitments: Vec<usize>, params: &MarketParams) -> Result<Self> {
        if commitments.len() != params.num_sellers {
            return Err(MarketError::ProfileLength {
                got: commitments.len(),
                expected: params.num_sellers,
            });
        }
        if let Some(&m) = commitments
            .iter()
            .find(|&&m| !is_legal_strategy(m, params.max_free_samples))
        {
            return Err(MarketError::IllegalSampleCount(m));
        }
        Ok(Self(commitments))
    }

    pub fn symmetric(m: usize, params: &MarketParams) -> Result<Self> {
        Self::new(vec![m; params.num_sellers], params)
    }

    /// The profile where `seller` plays `m` and everyone else keeps their commitment.
    pub fn with_deviation(&self, seller: usize, m: usize, params: &MarketParams) -> Result<Self> {
        let mut v = self.0.clone();
        v[seller] = m;
        Self::new(v, params)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for StrategyProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|m| m.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> MarketParams {
        MarketParams {
            sigma_low: 25.0,
            sigma_high: 50.0,
            mu: 0.6,
            lambda: 0.007,
            num_sellers: 5,
            max_free_samples: 5,
            cost: CostModel::uniform(0.5, 2.0).unwrap(),
        }
    }

    #[test]
    fn reference_params_validate() {
        let v = base().validate().unwrap();
        // 25 / sqrt(0.007 * 3.5)
        assert!((v.n_min - 159.719_141_249_9).abs() < 1e-6, "{}", v.n_min);
        assert!(v.n_min_ok());
        assert!(v.approx_condition_holds());
    }

    #[test]
    fn equal_sigmas_rejected() {
        let p = MarketParams {
            sigma_low: 50.0,
            ..base()
        };
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("strictness violated"), "{err}");
    }

    #[test]
    fn every_violation_reported() {
        let p = MarketParams {
            mu: 1.0,
            lambda: 0.0,
            max_free_samples: 1,
            num_sellers: 0,
            ..base()
        };
        match p.validate().unwrap_err() {
            MarketError::InvalidParams(msgs) => assert_eq!(msgs.len(), 4, "{msgs:?}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn approx_condition_is_reported_not_enforced() {
        let v = MarketParams::reference(3, 300.0).validate().unwrap();
        assert!(!v.approx_condition_holds());
        assert!(!v.n_min_ok());
        assert!(v.n_min > 1.0);
    }

    #[test]
    fn legal_sets() {
        assert_eq!(legal_strategy_set(5).unwrap(), vec![0, 2, 3, 4, 5]);
        assert_eq!(legal_strategy_set(2).unwrap(), vec![0, 2]);
        assert_eq!(legal_strategy_set(3).unwrap(), vec![0, 2, 3]);
        assert!(legal_strategy_set(1).is_err());
        assert!(legal_strategy_set(0).is_err());
    }

    #[test]
    fn realization_invariants() {
        assert!(SellerRealization::new(VarianceType::Low, 1.0, 1, Some(1.0)).is_err());
        assert!(SellerRealization::new(VarianceType::Low, 1.0, 0, Some(1.0)).is_err());
        assert!(SellerRealization::new(VarianceType::Low, 1.0, 3, None).is_err());
        assert!(SellerRealization::new(VarianceType::Low, 1.0, 3, Some(-1.0)).is_err());
        assert!(SellerRealization::new(VarianceType::High, 1.0, 0, None).is_ok());
        assert!(SellerRealization::new(VarianceType::High, 1.0, 2, Some(0.0)).is_ok());
    }

    #[test]
    fn profiles() {
        let p = base();
        let s = StrategyProfile::symmetric(5, &p).unwrap();
        assert_eq!(s.as_slice(), &[5; 5]);
        let d = s.with_deviation(0, 0, &p).unwrap();
        assert_eq!(d.as_slice(), &[0, 5, 5, 5, 5]);
        assert!(s.with_deviation(0, 1, &p).is_err());
        assert!(StrategyProfile::new(vec![0; 4], &p).is_err());
        assert!(StrategyProfile::symmetric(6, &p).is_err());
    }

    proptest::proptest! {
        #[test]
        fn legal_set_cardinality(m in 2usize..64) {
            let s = legal_strategy_set(m).unwrap();
            proptest::prop_assert_eq!(s.len(), m);
            proptest::prop_assert!(!s.contains(&1));
            proptest::prop_assert!(s.iter().all(|&x| is_legal_strategy(x, m)));
        }
    }
}
