//! Filtered link-prediction ranking, MRR / Hits@k, and multi-run aggregation.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{AnswerIndex, Dataset, Direction, QueryKey, Triple};
use crate::error::{Error, Result};
use crate::models::{score_batch, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Valid,
    Test,
}

impl Split {
    pub fn triples(self, dataset: &Dataset) -> &[Triple] {
        match self {
            Split::Valid => &dataset.valid,
            Split::Test => &dataset.test,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("split must be `valid` or `test`, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankRecord {
    pub triple_index: usize,
    pub direction: Direction,
    pub rank: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mrr: f64,
    pub h1: f64,
    pub h3: f64,
    pub h10: f64,
    pub ranks: Vec<RankRecord>,
    pub split: Split,
}

/// Rank of `answer` given the scores of every candidate entity.
///
/// Candidates in `known_true` (sorted) other than `answer` are skipped.
/// Ties use the mean-rank convention, `1 + better + ceil(tied / 2)`.
pub fn rank_from_scores(scores: &[f64], answer: u32, known_true: &[u32]) -> u64 {
    let target = scores[answer as usize];
    let mut better = 0u64;
    let mut tied = 0u64;
    for (e, s) in scores.iter().enumerate() {
        let e = e as u32;
        if e == answer || known_true.binary_search(&e).is_ok() {
            continue;
        }
        if *s > target {
            better += 1;
        } else if *s == target {
            tied += 1;
        }
    }
    1 + better + tied.div_ceil(2)
}

/// Filtered rank of `answer` among all entities for `query`.
pub fn filtered_rank(params: &ModelParams, query: &QueryKey, answer: u32, known_true: &[u32]) -> u64 {
    let candidates: Vec<u32> = (0..params.num_entities as u32).collect();
    let scores = score_batch(params, query, &candidates);
    rank_from_scores(&scores, answer, known_true)
}

/// `(mrr, h1, h3, h10)` of a rank list.
pub fn metrics_from_ranks(ranks: &[u64]) -> (f64, f64, f64, f64) {
    let n = ranks.len() as f64;
    let hits = |k: u64| ranks.iter().filter(|r| **r <= k).count() as f64 / n;
    let mrr = ranks.iter().map(|r| 1.0 / *r as f64).sum::<f64>() / n;
    (mrr, hits(1), hits(3), hits(10))
}

/// Ranks both directions of every triple in `split`, filtering answers known
/// from train, valid and test.
pub fn evaluate(params: &ModelParams, dataset: &Dataset, split: Split) -> Result<EvalReport> {
    let triples = split.triples(dataset);
    if triples.is_empty() {
        return Err(Error::Data(format!("{split} split is empty")));
    }
    if params.num_entities != dataset.num_entities() {
        return Err(Error::Data("model entity count does not match dataset".into()));
    }
    let known = AnswerIndex::build([
        dataset.train.as_slice(),
        dataset.valid.as_slice(),
        dataset.test.as_slice(),
    ]);
    let jobs: Vec<(usize, Direction)> = (0..triples.len())
        .flat_map(|i| Direction::BOTH.into_iter().map(move |d| (i, d)))
        .collect();
    let ranks: Vec<RankRecord> = jobs
        .par_iter()
        .map(|&(i, d)| {
            let t = triples[i];
            let q = t.query(d);
            RankRecord {
                triple_index: i,
                direction: d,
                rank: filtered_rank(params, &q, t.answer(d), known.answers(&q)),
            }
        })
        .collect();
    let raw: Vec<u64> = ranks.iter().map(|r| r.rank).collect();
    let (mrr, h1, h3, h10) = metrics_from_ranks(&raw);
    Ok(EvalReport {
        mrr,
        h1,
        h3,
        h10,
        ranks,
        split,
    })
}

impl EvalReport {
    /// Writes `triple_index<TAB>direction<TAB>rank` rows.
    pub fn write_ranks(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for r in &self.ranks {
            writeln!(w, "{}\t{}\t{}", r.triple_index, r.direction, r.rank).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanSd { mean, sd: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub mrr: MeanSd,
    pub h1: MeanSd,
    pub h3: MeanSd,
    pub h10: MeanSd,
    pub runs: usize,
}

pub fn aggregate_runs(reports: &[EvalReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::Data("no reports to aggregate".into()));
    }
    let col = |f: fn(&EvalReport) -> f64| MeanSd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateReport {
        mrr: col(|r| r.mrr),
        h1: col(|r| r.h1),
        h3: col(|r| r.h3),
        h10: col(|r| r.h10),
        runs: reports.len(),
    })
}

impl AggregateReport {
    pub fn rows(&self) -> [(&'static str, MeanSd); 4] {
        [("mrr", self.mrr), ("h1", self.h1), ("h3", self.h3), ("h10", self.h10)]
    }

    /// `metric<TAB>mean<TAB>sd` on the [0, 1] scale.
    pub fn to_tsv(&self) -> String {
        self.rows()
            .iter()
            .map(|(m, v)| format!("{m}\t{}\t{}\n", v.mean, v.sd))
            .collect()
    }
}

impl fmt::Display for AggregateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6} {:>6} {:>5}   (x100, {} run(s))", "metric", "mean", "sd", self.runs)?;
        for (m, v) in self.rows() {
            writeln!(f, "{:<6} {:>6.1} {:>5.1}", m.to_uppercase(), 100.0 * v.mean, 100.0 * v.sd)?;
        }
        Ok(())
    }
}

impl From<&EvalReport> for AggregateReport {
    fn from(r: &EvalReport) -> Self {
        aggregate_runs(std::slice::from_ref(r)).expect("one report")
    }
}
