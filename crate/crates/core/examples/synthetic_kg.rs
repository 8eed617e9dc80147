//! Writes a synthetic Zipf KG to a directory for use with `kgesub`.
//!
//!     cargo run --example synthetic_kg -- /tmp/zipf [seed]

use std::path::PathBuf;

use kge_subsampling::synth::{zipf_kg, SynthConfig};

fn main() -> kge_subsampling::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "zipf-kg".into()));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let ds = zipf_kg(&SynthConfig { seed, ..Default::default() })?;
    ds.save(&dir)?;
    println!(
        "{}: {} entities, {} relations, {}/{}/{} triples",
        dir.display(),
        ds.num_entities(),
        ds.num_relations(),
        ds.train.len(),
        ds.valid.len(),
        ds.test.len()
    );
    Ok(())
}
