//! Runs the procurement mechanism on hand-picked beliefs and costs.
//!
//! ```text
//! cargo run --example mechanism_round
//! ```

use datamarket::belief::BeliefState;
use datamarket::cost::CostDistribution;
use datamarket::mechanism::Mechanism;
use datamarket::params::MarketParams;
use datamarket::rng::{stream, StreamKey, StreamRole};

fn main() -> datamarket::Result<()> {
    let params = MarketParams::reference(3, 5.0).validate()?;
    let mech = Mechanism::from_params(&params);

    // Seller 0 looks noisy but is cheap; seller 2 looks precise but is expensive.
    let beliefs = [
        BeliefState::from_pi_high(&params, 0.8),
        BeliefState::prior(&params),
        BeliefState::from_pi_high(&params, 0.05),
    ];
    let costs = [0.6, 1.0, 1.8];

    println!("seller  pi_H   sigma_bar2   cost   psi(c)   score");
    for (i, (b, &c)) in beliefs.iter().zip(&costs).enumerate() {
        println!(
            "{i:>6}  {:.2}  {:>10.2}   {c:.2}   {:.2}     {:.1}",
            b.pi_high,
            b.posterior_mean_var,
            params.cost.psi(c),
            mech.score(b, c)
        );
    }

    let mut rng = stream(1, StreamKey::new(0, 0, StreamRole::Other(0), 0));
    let out = mech.run(&beliefs, &costs, &mut rng)?;
    let w = out.winner.expect("reference parameters always trade");
    println!();
    println!("winner          {w}");
    println!(
        "samples bought  {} (relaxed {:.2})",
        out.allocation[w], out.relaxed_allocation
    );
    println!("payment         {:.4}", out.payments[w]);
    println!("cost of samples {:.4}", costs[w] * out.allocation[w] as f64);
    println!("information rent {:.4}", out.rents[w]);
    println!("buyer utility   {:.4}", out.buyer_utility.unwrap());

    // The payment makes truthful reporting optimal: raising the reported
    // cost lowers the samples bought and, past a point, loses the round.
    println!();
    println!(
        "report  samples  payment  utility at true cost {:.2}",
        costs[w]
    );
    let rival = (0..3)
        .filter(|&j| j != w)
        .map(|j| mech.score(&beliefs[j], costs[j]))
        .fold(f64::INFINITY, f64::min);
    for report in [0.5, costs[w], 0.9, 1.2, 1.5] {
        if mech.score(&beliefs[w], report) > rival {
            println!("{report:>6.2}  loses the round");
            continue;
        }
        let n = mech.floored_allocation(beliefs[w].posterior_mean_var, report);
        let t = mech.myerson_payment_expost(&beliefs[w], report, rival)?;
        println!(
            "{report:>6.2}  {n:>7}  {t:>7.3}  {:.4}",
            t - costs[w] * n as f64
        );
    }
    Ok(())
}
