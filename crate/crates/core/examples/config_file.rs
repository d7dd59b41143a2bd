//! Driving the library from a TOML config, the way the binary does, and
//! writing a deviation table CSV to standard output.
//!
//! ```text
//! cargo run --release --example config_file
//! ```

use datamarket::config::RunConfig;
use datamarket::report::{write_deviation_csv, MANIFEST_FILE};
use datamarket::simulator::{deviation_table, DeviationOptions};

const CONFIG: &str = r#"
sigma_high = 50.0
ratio = 20
mu = 0.6
lambda = 0.007
distribution = "uniform"
c_min = 0.5
c_max = 2.0
K = 4
M = 5
n_rounds = 10000
seed = 3
"#;

fn main() -> anyhow::Result<()> {
    let cfg = RunConfig::from_toml(CONFIG)?.resolve()?;
    let params = cfg.validated()?;
    eprintln!(
        "K={} ratio={} n_min={:.1} approx slack={:.2}",
        cfg.num_sellers, cfg.ratio, params.n_min, params.approx_slack
    );
    let table = deviation_table(
        &params,
        params.max_free_samples,
        DeviationOptions {
            n_rounds: cfg.n_rounds,
            seed: cfg.seed,
            crn: true,
        },
    )?;
    write_deviation_csv(std::io::stdout(), [(cfg.ratio, &table)], MANIFEST_FILE)?;
    Ok(())
}
