//! One full market round: private draws, free samples, beliefs, mechanism.
//!
//! ```text
//! cargo run --example simulate_round [seed]
//! ```

use datamarket::commands::describe_round;
use datamarket::params::{MarketParams, StrategyProfile};
use datamarket::rng::{stream, StreamKey, StreamRole};
use datamarket::simulator::simulate_round;

fn main() -> datamarket::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(7);
    let params = MarketParams::reference(4, 10.0).validate()?;
    // An asymmetric profile: one seller hides its data, the others share.
    let profile = StrategyProfile::new(vec![0, 2, 3, 5], &params)?;
    let mut rng = stream(seed, StreamKey::new(0, 0, StreamRole::Other(0), 0));
    let round = simulate_round(&params, &profile, &mut rng)?;
    println!("profile {profile}");
    print!("{}", describe_round(&round));
    Ok(())
}
