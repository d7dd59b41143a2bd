//! Phase diagram of symmetric equilibria over seller count and noise ratio,
//! printed as a grid and written as CSV.
//!
//! ```text
//! cargo run --release --example phase_diagram [n_rounds] [out.csv]
//! ```
//!
//! Legend: `M` informative only, `0` uninformative only, `2` intermediate
//! only, `*` several, `.` none detected.

use std::fs::File;

use datamarket::equilibrium::{
    sweep_phase_diagram, DetectOptions, Region, DEFAULT_RATIOS, DEFAULT_SELLER_COUNTS,
};
use datamarket::params::MarketParams;
use datamarket::report::{write_phase_csv, MANIFEST_FILE};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_rounds: usize = args.next().map_or(Ok(20_000), |s| s.parse())?;
    let out = args.next();

    let opts = DetectOptions {
        n_rounds,
        seed: 1,
        crn: true,
    };
    let base = MarketParams::reference(2, 2.0);
    let cells = sweep_phase_diagram(&base, &DEFAULT_SELLER_COUNTS, &DEFAULT_RATIOS, opts)?;

    print!(" K \\ ratio");
    for r in DEFAULT_RATIOS {
        print!("{r:>5}");
    }
    println!();
    for row in cells.chunks(DEFAULT_RATIOS.len()) {
        print!("{:>10}", row[0].num_sellers);
        for c in row {
            let mark = match c.region {
                Region::InformativeOnly => "M".to_string(),
                Region::UninformativeOnly => "0".into(),
                Region::IntermediateOnly => c.equilibria.iter().next().unwrap().to_string(),
                Region::Multiple => "*".into(),
                Region::NoneDetected => ".".into(),
            };
            print!("{mark:>5}");
        }
        println!();
    }
    for c in cells.iter().filter(|c| c.region == Region::Multiple) {
        println!("K={} ratio={}: {:?}", c.num_sellers, c.ratio, c.equilibria);
    }

    if let Some(path) = out {
        write_phase_csv(
            File::create(&path)?,
            &cells,
            n_rounds,
            opts.seed,
            MANIFEST_FILE,
        )?;
        println!("wrote {path}");
    }
    Ok(())
}
