//! Loads a dataset (or generates one) and prints its most frequent queries
//! and a few singleton-query statistics.
//!
//!     cargo run --example query_counts -- [dataset_dir]

use kge_subsampling::data::{count_queries, singleton_query_stats};
use kge_subsampling::synth::{zipf_kg, SynthConfig};
use kge_subsampling::Dataset;

fn main() -> kge_subsampling::Result<()> {
    let ds = match std::env::args().nth(1) {
        Some(dir) => Dataset::load(dir.as_ref())?,
        None => zipf_kg(&SynthConfig::default())?,
    };
    let freq = count_queries(&ds.train, 0.0);
    let mut top: Vec<_> = freq.iter().collect();
    top.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    println!("{} distinct queries over {} training triples", freq.len(), ds.train.len());
    for (q, c) in top.iter().take(5) {
        let e = ds.vocab.entities.label(q.entity).unwrap_or("?");
        let r = ds.vocab.relations.label(q.relation).unwrap_or("?");
        println!("  {:<4} {e:>6} {r:>4}  {c}", q.direction.as_str());
    }
    let t = ds.train[0];
    println!(
        "triple frequency of the first triple: {} (smoothed: {})",
        freq.triple_frequency(&t),
        count_queries(&ds.train, 4.0).triple_frequency(&t)
    );
    let singles = singleton_query_stats(&ds.train);
    println!("{} queries appear exactly once", singles.len());
    Ok(())
}
