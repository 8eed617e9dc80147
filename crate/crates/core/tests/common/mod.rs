//! Independent oracles and random instance generators shared by the
//! integration and acceptance tests.
#![allow(dead_code)]

use kge_subsampling::data::{Direction, QueryKey, Triple, Vocab};
use kge_subsampling::models::{score, score_gradient, ModelParams};
use kge_subsampling::training::{negative_weights, ns_loss_with_negative_weights, TrainExample};
use kge_subsampling::Dataset;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn vocab(num_entities: usize, num_relations: usize) -> Vocab {
    let mut v = Vocab::default();
    for e in 0..num_entities {
        v.entities.intern(&format!("e{e}"));
    }
    for r in 0..num_relations {
        v.relations.intern(&format!("r{r}"));
    }
    v
}

/// Random distinct triples split into train/valid/test (valid and test may
/// be empty when `held_out` is 0).
pub fn random_dataset<R: Rng>(rng: &mut R, entities: usize, relations: usize, triples: usize, held_out: usize) -> Dataset {
    let mut all: Vec<Triple> = Vec::new();
    let cap = entities * entities * relations;
    let want = triples.min(cap);
    let mut seen = std::collections::HashSet::new();
    while all.len() < want {
        let t = Triple::new(
            rng.random_range(0..entities as u32),
            rng.random_range(0..relations as u32),
            rng.random_range(0..entities as u32),
        );
        if seen.insert(t) {
            all.push(t);
        }
    }
    all.shuffle(rng);
    let held = held_out.min(all.len().saturating_sub(1));
    let test = all.split_off(all.len() - held / 2);
    let valid = all.split_off(all.len() - (held - held / 2));
    Dataset {
        train: all,
        valid,
        test,
        vocab: vocab(entities, relations),
    }
}

/// Query counts by sorting the key list and measuring runs.
pub fn sorted_run_counts(train: &[Triple]) -> Vec<(QueryKey, u64)> {
    let mut keys: Vec<QueryKey> = Vec::with_capacity(2 * train.len());
    for t in train {
        keys.push(QueryKey::new(Direction::TailQuery, t.head, t.relation));
        keys.push(QueryKey::new(Direction::HeadQuery, t.tail, t.relation));
    }
    keys.sort();
    let mut out: Vec<(QueryKey, u64)> = Vec::new();
    for k in keys {
        match out.last_mut() {
            Some((last, c)) if *last == k => *c += 1,
            _ => out.push((k, 1)),
        }
    }
    out
}

/// Rank by exhaustive scoring: sort the surviving candidates by score and
/// average the positions of the answer's tie group, rounding half up.
pub fn oracle_rank(params: &ModelParams, triple: &Triple, direction: Direction, known: &[Triple]) -> u64 {
    let q = triple.query(direction);
    let answer = triple.answer(direction);
    let mut cands: Vec<(f64, u32)> = Vec::new();
    for e in 0..params.num_entities as u32 {
        let cand = q.with_answer(e);
        if e != answer && known.contains(&cand) {
            continue;
        }
        cands.push((score(params, &cand), e));
    }
    cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let target = score(params, triple);
    let first = cands.iter().position(|c| c.0 == target).unwrap() as u64 + 1;
    let last = cands.iter().rposition(|c| c.0 == target).unwrap() as u64 + 1;
    // mean of positions first..=last, rounded half up
    (first + last).div_ceil(2)
}

/// `max |analytic - fd| / max(1, max |fd|)` over the given coordinates.
pub fn relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let diff = analytic.iter().zip(fd).map(|(a, f)| (a - f).abs()).fold(0.0, f64::max);
    let scale = fd.iter().map(|f| f.abs()).fold(1.0, f64::max);
    diff / scale
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Which parameter a flat coordinate refers to.
#[derive(Debug, Clone, Copy)]
pub enum Coord {
    Entity(usize),
    Relation(usize),
}

fn get(p: &ModelParams, c: Coord) -> f64 {
    match c {
        Coord::Entity(i) => p.entity[i],
        Coord::Relation(i) => p.relation[i],
    }
}

fn set(p: &mut ModelParams, c: Coord, v: f64) {
    match c {
        Coord::Entity(i) => p.entity[i] = v,
        Coord::Relation(i) => p.relation[i] = v,
    }
}

/// Central differences of `f` at every coordinate in `coords`.
pub fn central_differences(params: &ModelParams, coords: &[Coord], f: impl Fn(&ModelParams) -> f64) -> Vec<f64> {
    let mut p = params.clone();
    coords
        .iter()
        .map(|c| {
            let x = get(&p, *c);
            set(&mut p, *c, x + FD_STEP);
            let up = f(&p);
            set(&mut p, *c, x - FD_STEP);
            let down = f(&p);
            set(&mut p, *c, x);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn all_coords(p: &ModelParams) -> Vec<Coord> {
    (0..p.entity.len())
        .map(Coord::Entity)
        .chain((0..p.relation.len()).map(Coord::Relation))
        .collect()
}

/// Analytic score gradient laid out over all coordinates.
pub fn dense_score_gradient(p: &ModelParams, t: &Triple) -> Vec<f64> {
    let g = score_gradient(p, t);
    let d = p.config.dim;
    let dr = p.config.relation_dim();
    let mut out = vec![0.0; p.entity.len() + p.relation.len()];
    for k in 0..d {
        out[t.head as usize * d + k] += g.head[k];
        out[t.tail as usize * d + k] += g.tail[k];
    }
    for k in 0..dr {
        out[p.entity.len() + t.relation as usize * dr + k] += g.relation[k];
    }
    out
}

pub fn dense_sparse(p: &ModelParams, g: &kge_subsampling::models::SparseGrad) -> Vec<f64> {
    let d = p.config.dim;
    let dr = p.config.relation_dim();
    let mut out = vec![0.0; p.entity.len() + p.relation.len()];
    for (id, row) in &g.entity {
        for k in 0..d {
            out[*id as usize * d + k] += row[k];
        }
    }
    for (id, row) in &g.relation {
        for k in 0..dr {
            out[p.entity.len() + *id as usize * dr + k] += row[k];
        }
    }
    out
}

/// Score-function gradient check at `params` for triple `t`.
pub fn score_gradient_error(params: &ModelParams, t: &Triple) -> f64 {
    let coords = all_coords(params);
    let fd = central_differences(params, &coords, |p| score(p, t));
    relative_error(&dense_score_gradient(params, t), &fd)
}

/// Full NS-loss gradient check; self-adversarial weights are frozen at
/// their value for `params`.
pub fn loss_gradient_error(params: &ModelParams, ex: &TrainExample, negatives: &[u32], beta: f64) -> f64 {
    let q = ex.query();
    let neg_scores: Vec<f64> = negatives.iter().map(|e| score(params, &q.with_answer(*e))).collect();
    let w = negative_weights(&neg_scores, beta);
    let lg = ns_loss_with_negative_weights(params, ex, negatives, &w).unwrap();
    let coords = all_coords(params);
    let fd = central_differences(params, &coords, |p| {
        ns_loss_with_negative_weights(p, ex, negatives, &w).unwrap().loss
    });
    relative_error(&dense_sparse(params, &lg.grad), &fd)
}
