//! Equilibrium detection for one cell, next to the closed-form diagnostics.
//!
//! ```text
//! cargo run --release --example detect [K] [ratio] [n_rounds]
//! ```

use datamarket::equilibrium::{cell_params, detect_equilibria, theory_bound_report, DetectOptions};
use datamarket::params::MarketParams;

fn main() -> datamarket::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().map_or(5, |s| s.parse().unwrap());
    let ratio: f64 = args.next().map_or(200.0, |s| s.parse().unwrap());
    let n_rounds: usize = args.next().map_or(100_000, |s| s.parse().unwrap());

    let params = cell_params(&MarketParams::reference(k, ratio), k, ratio)?;
    let cell = detect_equilibria(
        &params,
        DetectOptions {
            n_rounds,
            seed: 1,
            crn: true,
        },
    )?;
    println!(
        "K={k} ratio={ratio} N={n_rounds}: {} {:?}",
        cell.region, cell.equilibria
    );
    for v in &cell.verdicts {
        println!(
            "  m*={}  margin {:>8.2}  {}",
            v.m_star,
            v.margin,
            if v.is_equilibrium { "equilibrium" } else { "" }
        );
    }

    let t = theory_bound_report(&params, 0.1, 0.1)?;
    println!();
    println!(
        "approximation slack sigma_L - alpha sqrt(lambda psi(c_max)) = {:.3}",
        t.approx_slack
    );
    println!(
        "n_min = {:.2}, rounding-loss bound 1/(n_min-1) = {:.4}",
        t.n_min, t.rounding_loss_bound
    );
    for row in t.rows.iter().filter(|r| r.m >= 2) {
        println!(
            "  m={}  lower bound {:>10.4}  P(low shift) {:.4}  P(high shift) {:.4}",
            row.m,
            row.posterior_mean_lower_bound.unwrap(),
            row.prob_low_shift.unwrap(),
            row.prob_high_shift.unwrap()
        );
    }
    Ok(())
}
