//! How the buyer reads free samples: posterior probability of the noisy type
//! as a function of the observed sample variance.
//!
//! ```text
//! cargo run --example belief_update [ratio]
//! ```

use datamarket::belief::{
    belief_shift_thresholds, posterior_from_sample_variance, posterior_mean_lower_bound,
};
use datamarket::params::MarketParams;

fn main() -> datamarket::Result<()> {
    let ratio: f64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("ratio must be a number"))
        .unwrap_or(2.0);
    let params = MarketParams::reference(5, ratio).validate()?;
    let (vl, vh) = (params.var_low(), params.var_high());
    println!(
        "sigma_L^2 = {vl:.3}, sigma_H^2 = {vh:.3}, prior P(High) = {:.2}",
        1.0 - params.mu
    );
    println!();

    // Observed S² as multiples of sigma_L².
    let grid = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0];
    print!("{:>4}", "m");
    for g in grid {
        print!("  S2={:<5}", format!("{g}L"));
    }
    println!("  lower bound");
    for m in 2..=params.max_free_samples {
        print!("{m:>4}");
        for g in grid {
            let b = posterior_from_sample_variance(&params, m, Some(g * vl))?;
            print!("  {:>8.4}", b.pi_high);
        }
        println!("  {:>10.3}", posterior_mean_lower_bound(&params, m)?);
    }

    println!();
    println!("probability a Low seller is recognized (and a High one exposed), shifts 0.1:");
    for m in 2..=params.max_free_samples {
        let t = belief_shift_thresholds(&params, m, 0.1, 0.1)?;
        println!(
            "  m={m}: P(low shift) = {:.4}, P(high shift) = {:.4}",
            t.prob_low_shift(),
            t.prob_high_shift()
        );
    }
    Ok(())
}
