mod common;

use common::{oracle_rank, random_dataset};
use kge_subsampling::data::Direction;
use kge_subsampling::evaluation::{evaluate, filtered_rank, Split};
use kge_subsampling::models::{init_params, ModelConfig, ModelKind, ModelParams};
use kge_subsampling::data::AnswerIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random parameters; every other instance is quantised to {-1, 0, 1} so
/// that ties are common.
pub fn random_model(rng: &mut ChaCha8Rng, entities: usize, relations: usize, quantise: bool) -> ModelParams {
    let kind = ModelKind::ALL[rng.random_range(0..ModelKind::ALL.len())];
    let mut p = init_params(&ModelConfig::new(kind, 4, 6.0), entities, relations, rng.random()).unwrap();
    if quantise {
        for x in p.entity.iter_mut().chain(p.relation.iter_mut()) {
            *x = rng.random_range(-1i32..=1) as f64;
        }
    }
    p
}

#[test]
fn evaluate_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for instance in 0..200 {
        let e = rng.random_range(2..=20);
        let r = rng.random_range(1..=3);
        let n = rng.random_range(4..60);
        let ds = random_dataset(&mut rng, e, r, n, 6);
        let p = random_model(&mut rng, e, r, instance % 2 == 0);
        let known: Vec<_> = ds.train.iter().chain(&ds.valid).chain(&ds.test).copied().collect();
        let answers = AnswerIndex::build([ds.train.as_slice(), ds.valid.as_slice(), ds.test.as_slice()]);
        let report = evaluate(&p, &ds, Split::Test).unwrap();
        let mut expected = Vec::new();
        for t in &ds.test {
            for d in Direction::BOTH {
                let rank = oracle_rank(&p, t, d, &known);
                let q = t.query(d);
                assert_eq!(filtered_rank(&p, &q, t.answer(d), answers.answers(&q)), rank);
                expected.push(rank);
            }
        }
        let got: Vec<u64> = report.ranks.iter().map(|r| r.rank).collect();
        assert_eq!(got, expected, "instance {instance}");
        let n = expected.len() as f64;
        let mrr = expected.iter().map(|r| 1.0 / *r as f64).sum::<f64>() / n;
        let h10 = expected.iter().filter(|r| **r <= 10).count() as f64 / n;
        assert_eq!(report.mrr, mrr);
        assert_eq!(report.h10, h10);
        assert!(report.h10 >= report.h3 && report.h3 >= report.h1 && report.mrr >= report.h1);
    }
}

#[test]
fn monotone_transform_of_scores_keeps_ranks() {
    // scaling DistMult relation rows by a positive constant scales every score
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ds = random_dataset(&mut rng, 12, 2, 40, 10);
    let p = init_params(&ModelConfig::new(ModelKind::DistMult, 4, 0.0), 12, 2, 3).unwrap();
    let mut scaled = p.clone();
    scaled.relation.iter_mut().for_each(|x| *x *= 3.0);
    let a = evaluate(&p, &ds, Split::Test).unwrap();
    let b = evaluate(&scaled, &ds, Split::Test).unwrap();
    assert_eq!(a.ranks, b.ranks);
}

#[test]
fn saved_checkpoint_evaluates_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ds = random_dataset(&mut rng, 15, 3, 50, 10);
    let p = init_params(&ModelConfig::new(ModelKind::RotatE, 6, 6.0), 15, 3, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    p.save(&path).unwrap();
    let q = ModelParams::load(&path).unwrap();
    assert_eq!(evaluate(&p, &ds, Split::Test).unwrap(), evaluate(&q, &ds, Split::Test).unwrap());
}
