//! Appearance probability of the rarest queries under count-based and
//! model-based weights.

use kge_subsampling::analysis::{weights_report, weights_report_tsv};
use kge_subsampling::data::count_queries;
use kge_subsampling::models::{ModelConfig, ModelKind};
use kge_subsampling::submodel::{build_weights, pretrain_submodel, score_training_triples, SubmodelSubsampling, WeightSpec};
use kge_subsampling::subsampling::build_cbs_weights;
use kge_subsampling::synth::{zipf_kg, SynthConfig};
use kge_subsampling::{SubsamplingMethod, SubsamplingSource, TrainConfig};

fn main() -> kge_subsampling::Result<()> {
    let ds = zipf_kg(&SynthConfig::default())?;
    let cbs = build_cbs_weights(&ds, &count_queries(&ds.train, 4.0), SubsamplingMethod::Base)?;
    let train = TrainConfig { steps: 500, ..Default::default() };
    let sub = pretrain_submodel(&ds, &ModelConfig::new(ModelKind::ComplEx, 16, 6.0), SubmodelSubsampling::None, &train, 4.0)?;
    let scores = score_training_triples(&sub.params, &ds, &sub.id)?;
    let spec = WeightSpec { source: SubsamplingSource::Mbs, method: SubsamplingMethod::Base, alpha: 0.5, ..Default::default() };
    let mbs = build_weights(&ds, 4.0, &spec, Some(&scores), None)?;
    let (rows, _) = weights_report(&ds, &cbs, &mbs, 10, 4.0)?;
    print!("{}", weights_report_tsv(&ds.vocab, &rows));
    Ok(())
}
