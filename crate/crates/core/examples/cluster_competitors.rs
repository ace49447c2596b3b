//! Discover competitor groups in a simulated market with all three routes
//! and compare them with the planted clusters.
//!
//! ```text
//! cargo run --release --example cluster_competitors -- [seed]
//! ```

use std::collections::BTreeMap;

use cpc_core::clustering::{
    category_clusters, cluster_panel, compare_assignments, ClusterAssignment, ClusterMethod,
    ClusteringOptions,
};
use cpc_core::simgen::{simulate, MarketConfig};

fn main() -> cpc_core::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let cfg = MarketConfig {
        seed,
        ..MarketConfig::default()
    };
    let (panel, truth) = simulate(&cfg)?;
    let planted = ClusterAssignment {
        method: ClusterMethod::Distance,
        k: cfg.n_clusters,
        labels: truth.cluster_of.clone(),
        wcss_by_k: BTreeMap::new(),
        centroids: None,
        timestamp_weights: None,
    };
    let opts = ClusteringOptions {
        seed,
        ..Default::default()
    };

    let by_category = category_clusters(&panel);
    for method in [ClusterMethod::Category, ClusterMethod::Extracted, ClusterMethod::Distance] {
        let start = std::time::Instant::now();
        let assignment = cluster_panel(&panel, method, None, &opts)?;
        let vs_truth = compare_assignments(&assignment, &planted)?;
        let vs_category = compare_assignments(&assignment, &by_category)?;
        println!(
            "{:<10} k = {:>2}  ARI vs planted {:>6.3}  ARI vs category {:>6.3}  ({:.1?})",
            method.as_str(),
            assignment.k,
            vs_truth.ari,
            vs_category.ari,
            start.elapsed()
        );
        if method == ClusterMethod::Distance {
            println!("  objective by k: {:?}", assignment.wcss_by_k);
            println!("  contingency vs category (rows = clusters):");
            for row in &vs_category.contingency {
                println!("    {row:?}");
            }
        }
    }
    Ok(())
}
