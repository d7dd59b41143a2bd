//! Free-sample statistics and the buyer's posterior over a seller's variance.
//!
//! All likelihoods are handled in log space; `(sigma_high/sigma_low)^(m-1)`
//! overflows ordinary arithmetic long before the ratios swept by the phase
//! diagram are reached.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{MarketError, Result};
use crate::params::{check_sample_variance, MarketParams, VarianceType};

/// The buyer's belief about one seller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeliefState {
    /// Posterior probability of the high-variance type.
    pub pi_high: f64,
    /// Posterior mean of the variance.
    pub posterior_mean_var: f64,
}

impl BeliefState {
    pub fn from_pi_high(params: &MarketParams, pi_high: f64) -> Self {
        Self {
            pi_high,
            posterior_mean_var: params.var_low() + pi_high * (params.var_high() - params.var_low()),
        }
    }

    pub fn prior(params: &MarketParams) -> Self {
        Self::from_pi_high(params, 1.0 - params.mu)
    }

    /// Posterior mean standard deviation `sqrt(posterior_mean_var)`.
    pub fn sigma_bar(&self) -> f64 {
        self.posterior_mean_var.sqrt()
    }
}

/// `1 / (1 + exp(x))` without overflow.
pub(crate) fn logistic_neg(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

fn require_m(m: usize) -> Result<()> {
    if m < 2 {
        Err(MarketError::IllegalSampleCount(m))
    } else {
        Ok(())
    }
}

/// Draws the unbiased sample variance of `m` normal observations from its
/// exact sampling law, `sigma^2 * chi2_{m-1} / (m - 1)`.
pub fn draw_sample_variance<R: Rng + ?Sized>(
    params: &MarketParams,
    variance_type: VarianceType,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    require_m(m)?;
    let dof = (m - 1) as f64;
    let chi2 = Gamma::new(dof / 2.0, 2.0)
        .expect("positive shape")
        .sample(rng);
    Ok(scale_chi_squared(
        params.variance_of(variance_type),
        m,
        chi2,
    ))
}

/// `sigma2 * x / (m - 1)`: the sample variance corresponding to a chi-squared draw `x`.
pub fn scale_chi_squared(sigma2: f64, m: usize, x: f64) -> f64 {
    sigma2 * x / (m - 1) as f64
}

/// Draws `m` zero-mean normal observations and returns their unbiased
/// sample variance. Same law as [`draw_sample_variance`], slower.
pub fn draw_sample_variance_raw<R: Rng + ?Sized>(
    params: &MarketParams,
    variance_type: VarianceType,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    require_m(m)?;
    let sigma = params.variance_of(variance_type).sqrt();
    let xs: Vec<f64> = (0..m)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mean = xs.iter().sum::<f64>() / m as f64;
    Ok(xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64)
}

/// `ln Λ_m(S²)`, the log of the low-to-high likelihood ratio of the sample variance.
pub fn log_likelihood_ratio(params: &MarketParams, m: usize, s2: f64) -> Result<f64> {
    require_m(m)?;
    check_sample_variance(m, Some(s2))?;
    let (vl, vh) = (params.var_low(), params.var_high());
    let k = (m - 1) as f64;
    Ok(k * (params.sigma_high / params.sigma_low).ln() - (vh - vl) / (2.0 * vh * vl) * k * s2)
}

pub fn likelihood_ratio(params: &MarketParams, m: usize, s2: f64) -> Result<f64> {
    log_likelihood_ratio(params, m, s2).map(f64::exp)
}

/// Bayes update of the prior on the observed sample variance. `m = 0`
/// returns the prior; `m = 1` is rejected.
pub fn posterior_from_sample_variance(
    params: &MarketParams,
    m: usize,
    s2: Option<f64>,
) -> Result<BeliefState> {
    check_sample_variance(m, s2)?;
    let Some(s2) = s2 else {
        return Ok(BeliefState::prior(params));
    };
    let log_prior_odds = (params.mu / (1.0 - params.mu)).ln();
    let llr = log_likelihood_ratio(params, m, s2)?;
    Ok(BeliefState::from_pi_high(
        params,
        logistic_neg(log_prior_odds + llr),
    ))
}

/// Smallest posterior mean variance reachable with `m` free samples,
/// attained at `S² = 0`.
pub fn posterior_mean_lower_bound(params: &MarketParams, m: usize) -> Result<f64> {
    require_m(m)?;
    let log_prior_odds = (params.mu / (1.0 - params.mu)).ln();
    let x = log_prior_odds + (m - 1) as f64 * params.ratio().ln();
    Ok(params.var_low() + (params.var_high() - params.var_low()) * logistic_neg(x))
}

/// Thresholds describing when `m` free samples move the posterior by at
/// least `shift_low` (towards low variance) or `shift_high` (towards high).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeliefShiftThresholds {
    pub m: usize,
    /// `π_H < 1 - μ - shift_low` iff `Λ_m > t_plus`.
    pub t_plus: f64,
    /// Under the low type, `Λ_m > t_plus` iff `(m-1)S²/σ_L² < z_plus`.
    pub z_plus: f64,
    /// `π_H > 1 - μ + shift_high` iff `Λ_m < t_minus`.
    pub t_minus: f64,
    /// Under the high type, `Λ_m < t_minus` iff `(m-1)S²/σ_H² > z_minus`.
    pub z_minus: f64,
}

impl BeliefShiftThresholds {
    /// `Pr(Z <= z_plus)` for `Z ~ chi2_{m-1}`: chance a low-variance seller's
    /// samples shift the belief down by the requested margin.
    pub fn prob_low_shift(&self) -> f64 {
        if self.z_plus <= 0.0 {
            return 0.0;
        }
        chi_squared_cdf(self.m - 1, self.z_plus)
    }

    /// `Pr(Z' >= z_minus)` for `Z' ~ chi2_{m-1}`.
    pub fn prob_high_shift(&self) -> f64 {
        if self.z_minus <= 0.0 {
            return 1.0;
        }
        1.0 - chi_squared_cdf(self.m - 1, self.z_minus)
    }
}

fn chi_squared_cdf(dof: usize, x: f64) -> f64 {
    ChiSquared::new(dof as f64).expect("positive dof").cdf(x)
}

pub fn belief_shift_thresholds(
    params: &MarketParams,
    m: usize,
    shift_low: f64,
    shift_high: f64,
) -> Result<BeliefShiftThresholds> {
    require_m(m)?;
    let mu = params.mu;
    if !(shift_low > 0.0 && shift_low < 1.0 - mu) {
        return Err(MarketError::ShiftOutOfRange {
            name: "delta_low",
            value: shift_low,
            lo: 0.0,
            hi: 1.0 - mu,
        });
    }
    if !(shift_high > 0.0 && shift_high < mu) {
        return Err(MarketError::ShiftOutOfRange {
            name: "delta_high",
            value: shift_high,
            lo: 0.0,
            hi: mu,
        });
    }
    let (vl, vh) = (params.var_low(), params.var_high());
    let signal = (m - 1) as f64 * params.ratio().ln();
    let t_plus = (1.0 - mu) * (mu + shift_low) / (mu * (1.0 - mu - shift_low));
    let t_minus = (1.0 - mu) * (mu - shift_high) / (mu * (1.0 - mu + shift_high));
    Ok(BeliefShiftThresholds {
        m,
        t_plus,
        z_plus: 2.0 * vh / (vh - vl) * (signal - t_plus.ln()),
        t_minus,
        z_minus: 2.0 * vl / (vh - vl) * (signal - t_minus.ln()),
    })
}

/// Precomputed sampling and update constants for one parameter set, used
/// in simulation hot loops. Agrees with [`draw_sample_variance`] and
/// [`posterior_from_sample_variance`].
#[derive(Debug, Clone)]
pub struct BeliefEngine {
    var_low: f64,
    var_high: f64,
    log_prior_odds: f64,
    log_ratio: f64,
    /// `(σ_H² - σ_L²) / (2 σ_H² σ_L²)`
    decay: f64,
    /// Chi-squared samplers indexed by `m`; entries below 2 are unused.
    chi2: Vec<Option<Gamma<f64>>>,
    prior: BeliefState,
}

impl BeliefEngine {
    pub fn new(params: &MarketParams) -> Self {
        let (vl, vh) = (params.var_low(), params.var_high());
        let chi2 = (0..=params.max_free_samples)
            .map(|m| {
                (m >= 2).then(|| Gamma::new((m - 1) as f64 / 2.0, 2.0).expect("positive shape"))
            })
            .collect();
        Self {
            var_low: vl,
            var_high: vh,
            log_prior_odds: (params.mu / (1.0 - params.mu)).ln(),
            log_ratio: params.ratio().ln(),
            decay: (vh - vl) / (2.0 * vh * vl),
            chi2,
            prior: BeliefState::prior(params),
        }
    }

    /// Sample variance of `m >= 2` free samples from a seller of type `t`.
    pub fn draw<R: Rng + ?Sized>(&self, t: VarianceType, m: usize, rng: &mut R) -> f64 {
        let x = self.chi2[m].as_ref().expect("m >= 2").sample(rng);
        let var = match t {
            VarianceType::Low => self.var_low,
            VarianceType::High => self.var_high,
        };
        scale_chi_squared(var, m, x)
    }

    /// Posterior after observing `s2` from `m >= 2` samples.
    pub fn posterior(&self, m: usize, s2: f64) -> BeliefState {
        let k = (m - 1) as f64;
        let llr = k * self.log_ratio - self.decay * k * s2;
        let pi_high = logistic_neg(self.log_prior_odds + llr);
        BeliefState {
            pi_high,
            posterior_mean_var: self.var_low + pi_high * (self.var_high - self.var_low),
        }
    }

    pub fn prior(&self) -> BeliefState {
        self.prior
    }

    /// Sample variances of the first `m` of one sequence of `max_m` normal
    /// observations, for every `m` in `2..=max_m`; `out[m]` receives the
    /// value and entries below 2 are left untouched.
    ///
    /// Each `out[m]` has the exact law of [`draw`](Self::draw), and the values
    /// are coupled across `m` the way a seller's nested free samples are.
    pub fn nested_draw<R: Rng + ?Sized>(
        &self,
        t: VarianceType,
        max_m: usize,
        rng: &mut R,
        out: &mut [f64],
    ) {
        let var = match t {
            VarianceType::Low => self.var_low,
            VarianceType::High => self.var_high,
        };
        let (mut mean, mut m2) = (0.0, 0.0);
        #[allow(clippy::needless_range_loop)]
        for i in 1..=max_m {
            let z: f64 = rng.sample(StandardNormal);
            let delta = z - mean;
            mean += delta / i as f64;
            m2 += delta * (z - mean);
            if i >= 2 {
                out[i] = var * m2 / (i - 1) as f64;
            }
        }
    }

    /// Draws the signal for commitment `m` and returns it with the belief it induces.
    pub fn signal<R: Rng + ?Sized>(
        &self,
        t: VarianceType,
        m: usize,
        rng: &mut R,
    ) -> (Option<f64>, BeliefState) {
        if m < 2 {
            return (None, self.prior);
        }
        let s2 = self.draw(t, m, rng);
        (Some(s2), self.posterior(m, s2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(ratio: f64) -> MarketParams {
        MarketParams::reference(5, ratio)
    }

    /// Density of `S² = σ² X / (m-1)`, `X ~ chi2_{m-1}`, evaluated directly.
    fn scaled_chi2_density(sigma2: f64, m: usize, s2: f64) -> f64 {
        use statrs::distribution::Continuous;
        let k = (m - 1) as f64;
        let scale = sigma2 / k;
        ChiSquared::new(k).unwrap().pdf(s2 / scale) / scale
    }

    #[test]
    fn engine_matches_free_functions() {
        let p = params(37.0);
        let engine = BeliefEngine::new(&p);
        for m in 2..=5 {
            for s2 in [0.0, 0.01, 1.0, 100.0, 3000.0] {
                let a = engine.posterior(m, s2);
                let b = posterior_from_sample_variance(&p, m, Some(s2)).unwrap();
                assert_relative_eq!(a.pi_high, b.pi_high, max_relative = 1e-12, epsilon = 1e-300);
                assert_relative_eq!(
                    a.posterior_mean_var,
                    b.posterior_mean_var,
                    max_relative = 1e-12
                );
            }
            let mut r1 = ChaCha8Rng::seed_from_u64(m as u64);
            let mut r2 = ChaCha8Rng::seed_from_u64(m as u64);
            for _ in 0..100 {
                let x = engine.draw(VarianceType::High, m, &mut r1);
                let y = draw_sample_variance(&p, VarianceType::High, m, &mut r2).unwrap();
                assert_eq!(x, y);
            }
        }
        assert_eq!(
            engine
                .signal(VarianceType::Low, 0, &mut ChaCha8Rng::seed_from_u64(0))
                .1,
            BeliefState::prior(&p)
        );
    }

    #[test]
    fn ratio_at_zero_sample_variance() {
        let p = params(2.0);
        assert_relative_eq!(
            likelihood_ratio(&p, 3, 0.0).unwrap(),
            4.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn ratio_vanishes_for_large_variance() {
        let p = params(2.0);
        assert!(likelihood_ratio(&p, 2, 1e9).unwrap() < 1e-100);
    }

    #[test]
    fn ratio_matches_density_oracle() {
        let p = params(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..12 {
            let s2: f64 = rng.random_range(1.0..5000.0);
            let oracle =
                scaled_chi2_density(p.var_low(), 3, s2) / scaled_chi2_density(p.var_high(), 3, s2);
            let got = likelihood_ratio(&p, 3, s2).unwrap();
            assert_relative_eq!(got, oracle, max_relative = 1e-10);
        }
    }

    #[test]
    fn ratio_bounded_by_zero_variance_value() {
        let p = params(7.0);
        for m in 2..=5 {
            let cap = (7.0f64).powi(m as i32 - 1);
            assert_relative_eq!(
                likelihood_ratio(&p, m, 0.0).unwrap(),
                cap,
                max_relative = 1e-12
            );
            assert!(likelihood_ratio(&p, m, 1e-3).unwrap() < cap);
        }
    }

    #[test]
    fn prior_when_no_samples() {
        let b = posterior_from_sample_variance(&params(2.0), 0, None).unwrap();
        assert_relative_eq!(b.pi_high, 0.4, max_relative = 1e-15);
    }

    #[test]
    fn posterior_hand_values() {
        let p = params(2.0);
        let b = posterior_from_sample_variance(&p, 3, Some(0.0)).unwrap();
        assert_relative_eq!(b.pi_high, 1.0 / 7.0, max_relative = 1e-12);
        assert_relative_eq!(
            b.posterior_mean_var,
            625.0 + 1875.0 / 7.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn posterior_rejects_bad_inputs() {
        let p = params(2.0);
        assert!(posterior_from_sample_variance(&p, 1, Some(1.0)).is_err());
        assert!(posterior_from_sample_variance(&p, 0, Some(1.0)).is_err());
        assert!(posterior_from_sample_variance(&p, 3, None).is_err());
        assert!(posterior_from_sample_variance(&p, 3, Some(-0.5)).is_err());
    }

    #[test]
    fn lower_bound_values() {
        let p = params(2.0);
        assert_relative_eq!(
            posterior_mean_lower_bound(&p, 3).unwrap(),
            625.0 + 1875.0 / 7.0,
            max_relative = 1e-12
        );
        assert!((posterior_mean_lower_bound(&p, 200).unwrap() - 625.0).abs() < 1e-9);
        assert!(posterior_mean_lower_bound(&p, 1).is_err());
    }

    #[test]
    fn lower_bound_strictly_decreasing_on_reference_cells() {
        for ratio in [
            2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 140.0, 200.0, 250.0, 300.0,
        ] {
            let p = params(ratio);
            for m in 2..5 {
                let a = posterior_mean_lower_bound(&p, m).unwrap();
                let b = posterior_mean_lower_bound(&p, m + 1).unwrap();
                assert!(a > b, "ratio {ratio} m {m}: {a} <= {b}");
                assert!(b > p.var_low());
            }
        }
    }

    #[test]
    fn log_space_handles_extreme_ratios() {
        let p = params(300.0);
        for m in 2..=20 {
            for s2 in [0.0, 1e-6, 0.1, 10.0, 2500.0, 1e6] {
                let b = posterior_from_sample_variance(&p, m, Some(s2)).unwrap();
                assert!(b.pi_high.is_finite() && (0.0..=1.0).contains(&b.pi_high));
                assert!(
                    b.posterior_mean_var >= p.var_low() && b.posterior_mean_var <= p.var_high()
                );
            }
            assert!(posterior_mean_lower_bound(&p, m).unwrap().is_finite());
        }
    }

    #[test]
    fn sample_variance_moments() {
        let p = params(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| draw_sample_variance(&p, VarianceType::Low, 5, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target_var = 2.0 * 625.0f64.powi(2) / 4.0;
        let se_mean = (target_var / n as f64).sqrt();
        assert!((mean - 625.0).abs() < 3.0 * se_mean, "mean {mean}");
        // Var of the sample variance of S^2 values: kurtosis of scaled chi2_4
        // gives Var((S²-σ²)²) = σ^8 * (E[X^4]/16 - ...); use a loose 3-SE band from
        // a batch-means estimate instead of the closed form.
        let batches = 100;
        let per = n / batches;
        let bvars: Vec<f64> = draws
            .chunks(per)
            .map(|c| {
                let m = c.iter().sum::<f64>() / per as f64;
                c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (per - 1) as f64
            })
            .collect();
        let bm = bvars.iter().sum::<f64>() / batches as f64;
        let bsd =
            (bvars.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (batches - 1) as f64).sqrt();
        let se_var = bsd / (batches as f64).sqrt();
        assert!(
            (var - target_var).abs() < 3.0 * se_var,
            "var {var} vs {target_var} (se {se_var})"
        );
        assert_eq!(scale_chi_squared(625.0, 5, 0.0), 0.0);
        assert!(draw_sample_variance(&p, VarianceType::Low, 1, &mut rng).is_err());
    }

    #[test]
    fn raw_and_exact_sampling_agree() {
        let p = params(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 200_000;
        let m = 3;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            a.push(draw_sample_variance(&p, VarianceType::High, m, &mut rng).unwrap());
            b.push(draw_sample_variance_raw(&p, VarianceType::High, m, &mut rng).unwrap());
        }
        // compare means and the probability of falling under the median of chi2_2 scaled
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = 2500.0 * (2.0f64 / 2.0).sqrt();
        let se = sd * (2.0 / n as f64).sqrt();
        assert!((mean(&a) - mean(&b)).abs() < 4.0 * se);
        let median = 2500.0 * 2.0f64.ln(); // chi2_2 median = 2 ln 2, divided by (m-1)=2
        let frac = |v: &[f64]| v.iter().filter(|&&x| x < median).count() as f64 / v.len() as f64;
        let se_p = (0.25 / n as f64).sqrt() * 2f64.sqrt();
        assert!((frac(&a) - 0.5).abs() < 4.0 * se_p);
        assert!((frac(&b) - 0.5).abs() < 4.0 * se_p);
    }

    #[test]
    fn thresholds_hand_value_and_errors() {
        let p = params(2.0);
        let t = belief_shift_thresholds(&p, 3, 0.2, 0.1).unwrap();
        assert_relative_eq!(t.t_plus, 0.4 * 0.8 / (0.6 * 0.2), max_relative = 1e-12);
        assert!(belief_shift_thresholds(&p, 3, 0.4, 0.1).is_err());
        assert!(belief_shift_thresholds(&p, 3, 0.0, 0.1).is_err());
        assert!(belief_shift_thresholds(&p, 3, 0.1, 0.6).is_err());
        let near = belief_shift_thresholds(&p, 3, 0.4 - 1e-9, 0.1).unwrap();
        assert!(near.t_plus > 1e8);
    }

    #[test]
    fn thresholds_match_posterior() {
        // At Λ = t_plus exactly the posterior equals 1 - μ - Δ_L.
        let p = params(20.0);
        let t = belief_shift_thresholds(&p, 4, 0.2, 0.3).unwrap();
        let s2 = t.z_plus * p.var_low() / 3.0;
        let b = posterior_from_sample_variance(&p, 4, Some(s2)).unwrap();
        assert_relative_eq!(b.pi_high, 0.4 - 0.2, max_relative = 1e-9);
        let s2 = t.z_minus * p.var_high() / 3.0;
        let b = posterior_from_sample_variance(&p, 4, Some(s2)).unwrap();
        assert_relative_eq!(b.pi_high, 0.4 + 0.3, max_relative = 1e-9);
    }

    #[test]
    fn thresholds_trend_with_ratio() {
        let mut prev: Option<BeliefShiftThresholds> = None;
        for ratio in [10.0, 100.0, 1000.0] {
            let t = belief_shift_thresholds(&params(ratio), 5, 0.1, 0.1).unwrap();
            if let Some(q) = prev {
                assert!(t.z_plus > q.z_plus);
                assert!(t.z_minus < q.z_minus);
                assert!(t.prob_low_shift() >= q.prob_low_shift());
                assert!(t.prob_high_shift() >= q.prob_high_shift());
            }
            prev = Some(t);
        }
        assert!(prev.unwrap().z_minus < 1e-3);
    }

    proptest::proptest! {
        #[test]
        fn posterior_invariants(ratio in 1.01f64..300.0, m in 2usize..20, s2a in 0.0f64..1e4, s2b in 0.0f64..1e4) {
            let p = params(ratio);
            let (lo, hi) = (s2a.min(s2b), s2a.max(s2b));
            let a = posterior_from_sample_variance(&p, m, Some(lo)).unwrap();
            let b = posterior_from_sample_variance(&p, m, Some(hi)).unwrap();
            proptest::prop_assert!(a.pi_high <= b.pi_high);
            let affine = p.var_low() + a.pi_high * (p.var_high() - p.var_low());
            proptest::prop_assert_eq!(a.posterior_mean_var, affine);
            let lb = posterior_mean_lower_bound(&p, m).unwrap();
            proptest::prop_assert!(a.posterior_mean_var >= lb * (1.0 - 1e-12));
        }
    }
}
