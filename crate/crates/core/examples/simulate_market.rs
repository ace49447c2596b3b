//! Simulate an advertiser panel, write it as CSV, and read it back through
//! the ingest and cleaning path.
//!
//! ```text
//! cargo run --release --example simulate_market -- [seed] [out.csv]
//! ```

use cpc_core::panel::{clean, ingest_csv};
use cpc_core::simgen::{simulate, MarketConfig};

fn main() -> cpc_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let out = args.next().unwrap_or_else(|| "market.csv".into());

    let cfg = MarketConfig { seed, ..Default::default() }.with_default_shock();
    let (panel, truth) = simulate(&cfg)?;
    println!(
        "{} advertisers, {} days from {} to {}",
        panel.advertisers.len(),
        panel.len_days(),
        cfg.start_date,
        cfg.end_date()
    );
    println!("shock on {:?} hits {:?}", truth.shock_date, truth.shocked_advertisers);

    for a in panel.advertisers.iter().take(4) {
        let mean = a.cpc.iter().sum::<f64>() / a.len() as f64;
        println!(
            "  {} {}  planted cluster {}  mean cpc {mean:.3}",
            a.advertiser_id, a.category, truth.cluster_of[&a.advertiser_id]
        );
    }

    panel.write_csv(std::fs::File::create(&out)?)?;
    let back = clean(&ingest_csv(std::fs::File::open(&out)?)?, 0.2)?;
    println!("wrote {out}; reloaded {} advertisers", back.advertisers.len());
    Ok(())
}
