//! Pre-trains a ComplEx sub-model, scores the training set and builds MBS
//! and MIX weights from it.

use kge_subsampling::models::{ModelConfig, ModelKind};
use kge_subsampling::submodel::{build_weights, pretrain_submodel, score_training_triples, SubmodelSubsampling, WeightSpec};
use kge_subsampling::synth::{zipf_kg, SynthConfig};
use kge_subsampling::{SubsamplingMethod, SubsamplingSource, TrainConfig};

fn summary(name: &str, w: &[f64]) {
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let max = w.iter().copied().fold(0.0, f64::max);
    println!("{name:<10} min {min:.3}  max {max:.3}");
}

fn main() -> kge_subsampling::Result<()> {
    let ds = zipf_kg(&SynthConfig::default())?;
    let train = TrainConfig { steps: 500, ..Default::default() };
    let sub = pretrain_submodel(&ds, &ModelConfig::new(ModelKind::ComplEx, 16, 6.0), SubmodelSubsampling::None, &train, 4.0)?;
    let scores = score_training_triples(&sub.params, &ds, &sub.id)?;
    println!("sub-model {} scored {} examples", sub.id, scores.len());
    for (source, alpha) in [(SubsamplingSource::Cbs, 0.5), (SubsamplingSource::Mbs, 0.5), (SubsamplingSource::Mbs, 0.1), (SubsamplingSource::Mix, 0.5)] {
        let spec = WeightSpec { source, method: SubsamplingMethod::Freq, alpha, lambda: 0.5, ..Default::default() };
        let w = build_weights(&ds, 4.0, &spec, Some(&scores), None)?;
        summary(&format!("{source} a={alpha}"), &w.b);
    }
    Ok(())
}
