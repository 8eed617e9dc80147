//! Plot-ready diagnostics: rare-query appearance probabilities under two
//! weight tables, and entity/relation frequencies of singleton queries.

use std::collections::BTreeMap;

use crate::data::{count_queries, singleton_query_stats, Dataset, QueryKey, SingletonQuery, Vocab};
use crate::error::{Error, Result};
use crate::subsampling::WeightTable;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryProbability {
    pub query: QueryKey,
    pub cbs_frequency: f64,
    /// Percent of the total `b` mass of each table spent on this query.
    pub cbs_percent: f64,
    pub mbs_percent: f64,
}

/// Appearance probability (in percent) of every query under `table`, taken
/// from the query-side weight `b`.
pub fn query_percentages(dataset: &Dataset, table: &WeightTable) -> Result<BTreeMap<QueryKey, f64>> {
    if table.len() != dataset.num_examples() {
        return Err(Error::Data(format!(
            "weight table has {} rows, training set has {} examples",
            table.len(),
            dataset.num_examples()
        )));
    }
    let total: f64 = table.b.iter().sum();
    let mut out = BTreeMap::new();
    for (i, t, d) in dataset.examples() {
        *out.entry(t.query(d)).or_insert(0.0) += 100.0 * table.b[i] / total;
    }
    Ok(out)
}

/// The `n` queries with the lowest counted frequency, listed by counted
/// frequency descending. Returns the rows and whether `n` was clamped.
pub fn weights_report(
    dataset: &Dataset,
    cbs: &WeightTable,
    mbs: &WeightTable,
    n: usize,
    smoothing: f64,
) -> Result<(Vec<QueryProbability>, bool)> {
    let freq = count_queries(&dataset.train, smoothing);
    let pc = query_percentages(dataset, cbs)?;
    let pm = query_percentages(dataset, mbs)?;
    let mut rows: Vec<QueryProbability> = pc
        .iter()
        .map(|(q, p)| QueryProbability {
            query: *q,
            cbs_frequency: freq.query_frequency(q),
            cbs_percent: *p,
            mbs_percent: pm[q],
        })
        .collect();
    // stable sorts keep key order among equal frequencies
    rows.sort_by(|a, b| a.cbs_frequency.total_cmp(&b.cbs_frequency));
    let clamped = n > rows.len();
    rows.truncate(n);
    rows.sort_by(|a, b| b.cbs_frequency.total_cmp(&a.cbs_frequency));
    Ok((rows, clamped))
}

fn label(vocab: &Vocab, q: &QueryKey) -> (String, String) {
    let e = vocab.entities.label(q.entity).map_or_else(|| q.entity.to_string(), str::to_owned);
    let r = vocab.relations.label(q.relation).map_or_else(|| q.relation.to_string(), str::to_owned);
    (e, r)
}

pub fn weights_report_tsv(vocab: &Vocab, rows: &[QueryProbability]) -> String {
    let mut s = String::from("direction\tentity\trelation\tcbs_frequency\tcbs_percent\tmbs_percent\n");
    for r in rows {
        let (e, rel) = label(vocab, &r.query);
        s += &format!(
            "{}\t{e}\t{rel}\t{}\t{}\t{}\n",
            r.query.direction, r.cbs_frequency, r.cbs_percent, r.mbs_percent
        );
    }
    s
}

/// Every `stride`-th singleton query (after sorting by entity frequency).
pub fn singleton_rows(dataset: &Dataset, stride: usize) -> Result<Vec<SingletonQuery>> {
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    Ok(singleton_query_stats(&dataset.train).into_iter().step_by(stride).collect())
}

pub fn singleton_tsv(vocab: &Vocab, rows: &[SingletonQuery]) -> String {
    let mut s = String::from("direction\tentity\trelation\tentity_frequency\trelation_frequency\n");
    for r in rows {
        let (e, rel) = label(vocab, &r.query);
        s += &format!(
            "{}\t{e}\t{rel}\t{}\t{}\n",
            r.query.direction, r.entity_count, r.relation_count
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Direction, Triple};
    use crate::subsampling::{build_cbs_weights, SubsamplingMethod};

    fn toy() -> Dataset {
        let mut vocab = Vocab::default();
        for e in ["e1", "e2", "e3"] {
            vocab.entities.intern(e);
        }
        vocab.relations.intern("r1");
        Dataset {
            train: vec![Triple::new(0, 0, 1), Triple::new(0, 0, 2), Triple::new(1, 0, 2)],
            valid: vec![],
            test: vec![],
            vocab,
        }
    }

    #[test]
    fn toy_report_by_hand() {
        let ds = toy();
        let cbs = build_cbs_weights(&ds, &count_queries(&ds.train, 0.0), SubsamplingMethod::Base).unwrap();
        let mbs = WeightTable::ones(6);
        let (rows, clamped) = weights_report(&ds, &cbs, &mbs, 2, 0.0).unwrap();
        assert!(!clamped);
        // pair frequencies 1.5, 1.5, 2, 2, 1.5, 1.5 for examples 0..6; the two
        // frequency-1 queries are (e2,r1,?) [example 4] and (?,r1,e2) [example 1]
        let s = 4.0 / 1.5f64.sqrt() + 2.0 / 2f64.sqrt();
        let expected = 100.0 / 1.5f64.sqrt() / s;
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].query, QueryKey::new(Direction::TailQuery, 1, 0));
        assert_eq!(rows[1].query, QueryKey::new(Direction::HeadQuery, 1, 0));
        for r in &rows {
            assert_eq!(r.cbs_frequency, 1.0);
            assert!((r.cbs_percent - expected).abs() < 1e-12);
            assert!((r.mbs_percent - 100.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rows_and_clamping() {
        let ds = toy();
        let w = WeightTable::ones(6);
        let (rows, _) = weights_report(&ds, &w, &w, 0, 0.0).unwrap();
        assert_eq!(weights_report_tsv(&ds.vocab, &rows).lines().count(), 1);
        let (rows, clamped) = weights_report(&ds, &w, &w, 100, 0.0).unwrap();
        assert!(clamped);
        assert_eq!(rows.len(), 4);
        let sorted = rows.windows(2).all(|p| p[0].cbs_frequency >= p[1].cbs_frequency);
        assert!(sorted);
    }

    #[test]
    fn stride_subsamples_rows() {
        let ds = toy();
        let all = singleton_rows(&ds, 1).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(singleton_rows(&ds, 2).unwrap().len(), 1);
        assert!(singleton_rows(&ds, 0).is_err());
        assert_eq!(singleton_tsv(&ds.vocab, &all).lines().count(), 3);
    }
}
