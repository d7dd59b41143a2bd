//! Empirical incentive compatibility: with beliefs fixed, no misreported
//! cost beats the truth.
//!
//! ```text
//! cargo run --release --example incentive_compatibility
//! ```

use datamarket::belief::BeliefState;
use datamarket::bic::empirical_bic;
use datamarket::params::MarketParams;

fn main() -> datamarket::Result<()> {
    let params = MarketParams::reference(3, 5.0).validate()?;
    let beliefs = [
        BeliefState::prior(&params),
        BeliefState::from_pi_high(&params, 0.2),
        BeliefState::from_pi_high(&params, 0.7),
    ];
    let truths = [0.6, 1.0, 1.4, 1.8];
    let reports: Vec<f64> = (0..7).map(|i| 0.5 + 0.25 * i as f64).collect();
    let cells = empirical_bic(&params, &beliefs, &truths, &reports, 50_000, 3)?;

    print!("true\\report");
    for r in &reports {
        print!("{r:>9.2}");
    }
    println!();
    for (i, c) in truths.iter().enumerate() {
        print!("{c:>11.2}");
        for cell in &cells[i * reports.len()..(i + 1) * reports.len()] {
            print!("{:>9.3}", cell.misreport_utility);
        }
        println!();
    }
    let worst = cells
        .iter()
        .filter(|c| c.gain_from_truth.std_error > 0.0)
        .map(|c| c.gain_from_truth.z_score())
        .fold(f64::INFINITY, f64::min);
    println!();
    println!("smallest (truthful - misreport) / se: {worst:.2}");
    Ok(())
}
