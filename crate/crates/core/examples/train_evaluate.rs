//! Trains TransE with and without count-based subsampling and reports
//! filtered validation metrics.
//!
//!     cargo run --release --example train_evaluate -- [steps]

use kge_subsampling::data::count_queries;
use kge_subsampling::evaluation::{evaluate, Split};
use kge_subsampling::models::{init_params, ModelConfig, ModelKind};
use kge_subsampling::subsampling::build_cbs_weights;
use kge_subsampling::synth::{zipf_kg, SynthConfig};
use kge_subsampling::training::{full_training_loss, train};
use kge_subsampling::{AggregateReport, SubsamplingMethod, TrainConfig};

fn main() -> kge_subsampling::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let ds = zipf_kg(&SynthConfig::default())?;
    let freq = count_queries(&ds.train, 4.0);
    let config = TrainConfig { steps, ..Default::default() };
    for method in [SubsamplingMethod::None, SubsamplingMethod::Base] {
        let weights = build_cbs_weights(&ds, &freq, method)?;
        let init = init_params(&ModelConfig::new(ModelKind::TransE, 32, 6.0), ds.num_entities(), ds.num_relations(), 0)?;
        let before = full_training_loss(&ds, &weights, &init, 16, 0.0, 7)?;
        let (params, log) = train(&ds, &weights, init, &config, None)?;
        let after = full_training_loss(&ds, &weights, &params, 16, 0.0, 7)?;
        println!("{method}: loss {before:.3} -> {after:.3} ({} steps)", log.records.len());
        print!("{}", AggregateReport::from(&evaluate(&params, &ds, Split::Valid)?));
    }
    Ok(())
}
