//! Small synthetic knowledge graphs with Zipf-distributed query frequencies.
//!
//! Entities are split into `clusters` groups (`cluster(e) = e % clusters`)
//! and relation `r` links every entity of cluster `c` to every entity of
//! cluster `c + r + 1`. A translation model can represent this structure
//! exactly. Observed triples are drawn from it with Zipf-skewed heads,
//! relations and tails, so a few queries are frequent and most are rare.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Triple, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_entities: usize,
    pub num_relations: usize,
    pub clusters: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Exponent `s` of the rank weights `1 / rank^s`.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_entities: 50,
            num_relations: 5,
            clusters: 5,
            train: 500,
            valid: 50,
            test: 50,
            zipf_exponent: 1.0,
            seed: 0,
        }
    }
}

struct Zipf {
    cumulative: Vec<f64>,
}

impl Zipf {
    fn new(n: usize, s: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = (1..=n)
            .map(|k| {
                acc += (k as f64).powf(-s);
                acc
            })
            .collect();
        Zipf { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.cumulative.last().unwrap();
        self.cumulative.partition_point(|c| *c <= u).min(self.cumulative.len() - 1)
    }
}

/// Generates a dataset. Valid and test triples whose entities never occur
/// in train are moved to train, so the split sizes are targets.
pub fn zipf_kg(config: &SynthConfig) -> Result<Dataset> {
    let SynthConfig {
        num_entities: n,
        num_relations: nr,
        clusters: k,
        ..
    } = *config;
    if k == 0 || n < k || nr == 0 {
        return Err(Error::Config("synthetic KG needs clusters <= entities and a relation".into()));
    }
    let per_cluster = n / k;
    let capacity = n * nr * per_cluster;
    let wanted = config.train + config.valid + config.test;
    if wanted > capacity / 2 {
        return Err(Error::Config(format!(
            "{wanted} triples requested but the latent graph only has {capacity}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // random popularity order so entity ids carry no information
    let mut popularity: Vec<u32> = (0..n as u32).collect();
    popularity.shuffle(&mut rng);
    let heads = Zipf::new(n, config.zipf_exponent);
    let rels = Zipf::new(nr, config.zipf_exponent);
    let tails = Zipf::new(per_cluster, config.zipf_exponent);

    let mut seen = BTreeSet::new();
    let mut triples = Vec::with_capacity(wanted);
    while triples.len() < wanted {
        let h = popularity[heads.sample(&mut rng)];
        let r = rels.sample(&mut rng) as u32;
        let c = (h as usize % k + r as usize + 1) % k;
        let t = (c + k * tails.sample(&mut rng)) as u32;
        if t as usize >= n {
            continue;
        }
        let triple = Triple::new(h, r, t);
        if seen.insert(triple) {
            triples.push(triple);
        }
    }

    let mut test = triples.split_off(config.train + config.valid);
    let mut valid = triples.split_off(config.train);
    let mut train = triples;
    let mut known = vec![false; n];
    for t in &train {
        known[t.head as usize] = true;
        known[t.tail as usize] = true;
    }
    for split in [&mut valid, &mut test] {
        let (keep, moved): (Vec<Triple>, Vec<Triple>) = split
            .iter()
            .partition(|t| known[t.head as usize] && known[t.tail as usize]);
        train.extend(moved);
        *split = keep;
    }

    let mut vocab = Vocab::default();
    for e in 0..n {
        vocab.entities.intern(&format!("e{e}"));
    }
    for r in 0..nr {
        vocab.relations.intern(&format!("r{r}"));
    }
    Ok(Dataset {
        train,
        valid,
        test,
        vocab,
    })
}

/// Every triple of `dataset` follows the latent cluster rule.
pub fn follows_latent_rule(dataset: &Dataset, clusters: usize) -> bool {
    let ok = |t: &Triple| (t.head as usize % clusters + t.relation as usize + 1) % clusters == t.tail as usize % clusters;
    dataset.train.iter().chain(&dataset.valid).chain(&dataset.test).all(ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::count_queries;

    #[test]
    fn default_shape() {
        let ds = zipf_kg(&SynthConfig::default()).unwrap();
        ds.validate().unwrap();
        assert_eq!(ds.num_entities(), 50);
        assert_eq!(ds.num_relations(), 5);
        assert_eq!(ds.train.len() + ds.valid.len() + ds.test.len(), 600);
        assert!(ds.train.len() >= 500);
        assert!(follows_latent_rule(&ds, 5));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = zipf_kg(&SynthConfig::default()).unwrap();
        let b = zipf_kg(&SynthConfig::default()).unwrap();
        let c = zipf_kg(&SynthConfig {
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn query_counts_are_skewed() {
        let ds = zipf_kg(&SynthConfig::default()).unwrap();
        let f = count_queries(&ds.train, 0.0);
        let mut counts: Vec<f64> = f.iter().map(|(_, c)| c).collect();
        counts.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let singletons = counts.iter().filter(|c| **c == 1.0).count();
        assert!(counts[0] >= 3.0 * counts[counts.len() / 2], "{counts:?}");
        assert!(singletons > counts.len() / 4);
    }

    #[test]
    fn impossible_request_is_rejected() {
        let cfg = SynthConfig {
            train: 10_000,
            ..Default::default()
        };
        assert!(zipf_kg(&cfg).is_err());
    }
}
