//! Checks two properties of the mechanism by simulation and in closed form:
//! expected payments equal expected virtual spend, and flooring the
//! allocation costs the buyer at most `var / (n* (n* - 1))`.
//!
//! ```text
//! cargo run --release --example payment_identity
//! ```

use datamarket::mechanism::rounding_loss;
use datamarket::params::{MarketParams, StrategyProfile};
use datamarket::simulator::payment_identity;

fn main() -> datamarket::Result<()> {
    let params = MarketParams::reference(5, 20.0).validate()?;
    let profile = StrategyProfile::symmetric(5, &params)?;
    let r = payment_identity(&params, &profile, 200_000, 1)?;
    println!(
        "{} symmetric rounds, K = 5, all sellers share 5 samples",
        r.n_rounds
    );
    println!(
        "  E[t - c n]     = {:.4}   E[n F/f]   = {:.4}   (diff/se = {:.2})",
        r.surplus,
        r.rent,
        (r.surplus - r.rent) / r.surplus_minus_rent_se
    );
    println!(
        "  E[t]           = {:.4}   E[n psi(c)] = {:.4}  (diff/se = {:.2})",
        r.payment,
        r.virtual_spend,
        (r.payment - r.virtual_spend) / r.payment_minus_virtual_se
    );

    println!();
    println!("rounding loss of the floored allocation:");
    println!(
        "  {:>8}  {:>10}  {:>10}  {:>8}",
        "n*", "loss", "bound", "1/(n*-1)"
    );
    for var in [50.0, 200.0, 625.0, 2500.0] {
        let l = rounding_loss(var, 1.7, params.lambda)?;
        println!(
            "  {:>8.2}  {:>10.6}  {:>10.6}  {:>8.4}",
            l.relaxed_allocation, l.loss, l.bound, l.relative_bound
        );
    }
    Ok(())
}
