//! Seller 0's utility for each unilateral deviation from a symmetric profile,
//! with and without common random numbers.
//!
//! ```text
//! cargo run --release --example deviation_table [K] [ratio] [m_star]
//! ```

use datamarket::equilibrium::{cell_params, EquilibriumVerdict};
use datamarket::params::MarketParams;
use datamarket::simulator::{deviation_table, DeviationOptions};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args()
        .nth(i)
        .map(|s| s.parse().ok().expect("bad argument"))
        .unwrap_or(default)
}

fn main() -> datamarket::Result<()> {
    let (k, ratio, m_star) = (arg(1, 6usize), arg(2, 140.0f64), arg(3, 2usize));
    let params = cell_params(&MarketParams::reference(k, ratio), k, ratio)?;
    for crn in [true, false] {
        let table = deviation_table(
            &params,
            m_star,
            DeviationOptions {
                n_rounds: 20_000,
                seed: 1,
                crn,
            },
        )?;
        println!("K={k} ratio={ratio} m*={m_star} crn={crn}");
        println!("  m'   utility     se        advantage   se        z");
        for e in &table.entries {
            println!(
                "  {:<3}  {:<10.5}  {:<8.5}  {:<10.5}  {:<8.5}  {:.1}",
                e.m_dev,
                e.estimate.mean,
                e.estimate.std_error,
                e.advantage.mean,
                e.advantage.std_error,
                e.advantage.z_score()
            );
        }
        let v = EquilibriumVerdict::from_table(&table);
        println!(
            "  margin {:.2} -> equilibrium: {}\n",
            v.margin, v.is_equilibrium
        );
    }
    Ok(())
}
