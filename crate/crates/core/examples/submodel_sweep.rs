//! Two-stage sub-model, alpha and lambda selection on a small graph.

use kge_subsampling::evaluation::{evaluate, Split};
use kge_subsampling::models::{init_params, ModelConfig, ModelKind};
use kge_subsampling::submodel::{
    build_weights, pretrain_submodel, score_training_triples, select_submodel, SelectionLedger, SubmodelSubsampling,
    WeightSpec,
};
use kge_subsampling::synth::{zipf_kg, SynthConfig};
use kge_subsampling::training::train;
use kge_subsampling::{SubModelScores, SubsamplingMethod, SubsamplingSource, TrainConfig};

fn main() -> kge_subsampling::Result<()> {
    let ds = zipf_kg(&SynthConfig::default())?;
    let short = TrainConfig { steps: 300, ..Default::default() };
    let mut candidates = Vec::new();
    for kind in [ModelKind::ComplEx, ModelKind::DistMult] {
        let sub = pretrain_submodel(&ds, &ModelConfig::new(kind, 16, 6.0), SubmodelSubsampling::None, &short, 4.0)?;
        candidates.push(score_training_triples(&sub.params, &ds, &sub.id)?);
    }
    let main_model = ModelConfig::new(ModelKind::TransE, 16, 6.0);
    let eval = |scores: &SubModelScores, alpha: f64, lambda: Option<f64>| {
        let spec = WeightSpec {
            source: if lambda.is_some() { SubsamplingSource::Mix } else { SubsamplingSource::Mbs },
            method: SubsamplingMethod::Base,
            alpha,
            lambda: lambda.unwrap_or(0.0),
            ..Default::default()
        };
        let w = build_weights(&ds, 4.0, &spec, Some(scores), None)?;
        let p = init_params(&main_model, ds.num_entities(), ds.num_relations(), 0)?;
        let (p, _) = train(&ds, &w, p, &short, None)?;
        Ok(evaluate(&p, &ds, Split::Valid)?.mrr)
    };
    let mut ledger = SelectionLedger::in_memory();
    let sel = select_submodel(&candidates, &[1.0, 0.5, 0.1], &[0.3, 0.7], &mut ledger, 4, &eval)?;
    for e in ledger.entries() {
        let l = e.lambda.map_or("-".to_owned(), |l| l.to_string());
        println!("{:<24} alpha {:<4} lambda {:<4} valid MRR {:.4}", e.submodel_id, e.alpha, l, e.valid_mrr);
    }
    println!("selected {} alpha={} lambda={}", sel.submodel_id, sel.alpha, sel.lambda);
    Ok(())
}
