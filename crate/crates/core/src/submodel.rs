//! Sub-model pipeline: pre-train a frozen model, score the training set with
//! it, turn the scores into weight tables, and pick the sub-model,
//! temperature and mixing ratio by validation MRR.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{count_queries, Dataset};
use crate::error::{Error, Result};
use crate::models::{init_params, score, ModelConfig, ModelParams};
use crate::subsampling::{
    build_cbs_weights, build_mbs_weights, mbs_frequencies, mbs_frequencies_all_candidates, mix_weights,
    softmax_over_train, QueryMass, SubModelScores, SubsamplingMethod, SubsamplingSource, WeightTable,
};
use crate::training::{train, TrainConfig};

/// Subsampling used while pre-training a sub-model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SubmodelSubsampling {
    #[default]
    None,
    /// Count-based `Base` weights.
    Base,
}

impl fmt::Display for SubmodelSubsampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubmodelSubsampling::None => "none",
            SubmodelSubsampling::Base => "base",
        })
    }
}

impl FromStr for SubmodelSubsampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(SubmodelSubsampling::None),
            "base" => Ok(SubmodelSubsampling::Base),
            _ => Err(Error::Config(format!(
                "sub-model subsampling must be `none` or `base`, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Submodel {
    pub params: ModelParams,
    /// `<kind>-<subsampling>-seed<seed>`
    pub id: String,
}

/// Trains a sub-model with `None` or count-based `Base` subsampling.
pub fn pretrain_submodel(
    dataset: &Dataset,
    model: &ModelConfig,
    subsampling: SubmodelSubsampling,
    train_config: &TrainConfig,
    smoothing: f64,
) -> Result<Submodel> {
    let method = match subsampling {
        SubmodelSubsampling::None => SubsamplingMethod::None,
        SubmodelSubsampling::Base => SubsamplingMethod::Base,
    };
    let weights = build_cbs_weights(dataset, &count_queries(&dataset.train, smoothing), method)?;
    let params = init_params(model, dataset.num_entities(), dataset.num_relations(), train_config.seed)?;
    let (params, _) = train(dataset, &weights, params, train_config, None)?;
    Ok(Submodel {
        params,
        id: format!("{}-{}-seed{}", model.kind, subsampling, train_config.seed),
    })
}

/// Raw score of every direction-expanded training example. Both directions
/// of a triple share the triple's score.
pub fn score_training_triples(submodel: &ModelParams, dataset: &Dataset, id: &str) -> Result<SubModelScores> {
    if submodel.num_entities != dataset.num_entities() || submodel.num_relations != dataset.num_relations() {
        return Err(Error::Data(format!(
            "sub-model vocabulary ({} entities, {} relations) does not match dataset ({}, {})",
            submodel.num_entities,
            submodel.num_relations,
            dataset.num_entities(),
            dataset.num_relations()
        )));
    }
    let raw: Vec<f64> = dataset.examples().map(|(_, t, _)| score(submodel, &t)).collect();
    if let Some(i) = raw.iter().position(|s| !s.is_finite()) {
        return Err(Error::Degenerate(format!("sub-model score of example {i} is not finite")));
    }
    Ok(SubModelScores {
        raw,
        submodel_id: id.to_owned(),
    })
}

/// Everything that determines a weight table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSpec {
    pub source: SubsamplingSource,
    pub method: SubsamplingMethod,
    pub alpha: f64,
    pub lambda: f64,
    pub query_mass: QueryMass,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec {
            source: SubsamplingSource::Cbs,
            method: SubsamplingMethod::None,
            alpha: 0.5,
            lambda: 0.5,
            query_mass: QueryMass::ObservedAnswers,
        }
    }
}

/// Builds the weight table described by `spec`.
///
/// MBS and MIX need `scores`; the all-candidates query mass additionally
/// needs the live sub-model.
pub fn build_weights(
    dataset: &Dataset,
    smoothing: f64,
    spec: &WeightSpec,
    scores: Option<&SubModelScores>,
    submodel: Option<&ModelParams>,
) -> Result<WeightTable> {
    let cbs = || {
        let mut w = build_cbs_weights(dataset, &count_queries(&dataset.train, smoothing), spec.method)?;
        w.provenance.source = SubsamplingSource::Cbs;
        Ok::<_, Error>(w)
    };
    if spec.method == SubsamplingMethod::None || spec.source == SubsamplingSource::Cbs {
        return cbs();
    }
    let scores = scores.ok_or_else(|| {
        Error::Config(format!("{} subsampling needs sub-model scores", spec.source))
    })?;
    if scores.len() != dataset.num_examples() {
        return Err(Error::Data(format!(
            "sub-model scores cover {} examples, training set has {}",
            scores.len(),
            dataset.num_examples()
        )));
    }
    let freqs = match spec.query_mass {
        QueryMass::ObservedAnswers => mbs_frequencies(dataset, &softmax_over_train(scores)),
        QueryMass::AllCandidates => {
            let sub = submodel.ok_or_else(|| {
                Error::Config("the all-candidates query mass needs the sub-model checkpoint".into())
            })?;
            mbs_frequencies_all_candidates(sub, dataset, scores)
        }
    };
    let mut mbs = build_mbs_weights(&freqs, spec.method, spec.alpha)?;
    mbs.provenance.submodel = Some(scores.submodel_id.clone());
    match spec.source {
        SubsamplingSource::Mbs => Ok(mbs),
        SubsamplingSource::Mix => mix_weights(&cbs()?, &mbs, spec.lambda),
        SubsamplingSource::Cbs => unreachable!(),
    }
}

/// One evaluated grid point. `lambda` is `None` for the MBS stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub submodel_id: String,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub valid_mrr: f64,
}

type LedgerKey = (String, u64, Option<u64>);

fn key(submodel_id: &str, alpha: f64, lambda: Option<f64>) -> LedgerKey {
    (submodel_id.to_owned(), alpha.to_bits(), lambda.map(f64::to_bits))
}

/// Append-only record of `submodel_id<TAB>alpha<TAB>lambda<TAB>valid_mrr`
/// (`lambda` is `-` for MBS points).
#[derive(Debug, Default)]
pub struct SelectionLedger {
    entries: Vec<LedgerEntry>,
    index: HashMap<LedgerKey, usize>,
    path: Option<PathBuf>,
}

impl SelectionLedger {
    pub fn in_memory() -> Self {
        SelectionLedger::default()
    }

    /// Opens (or starts) a ledger file; existing entries are loaded.
    pub fn open(path: &Path) -> Result<Self> {
        let mut ledger = SelectionLedger {
            path: Some(path.to_owned()),
            ..Default::default()
        };
        if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (n, line) in text.lines().enumerate() {
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let err = || Error::Parse {
                    path: path.to_owned(),
                    line: n + 1,
                    message: "expected `submodel_id<TAB>alpha<TAB>lambda<TAB>valid_mrr`".into(),
                };
                let f: Vec<&str> = line.split('\t').collect();
                if f.len() != 4 {
                    return Err(err());
                }
                let alpha = f[1].parse().map_err(|_| err())?;
                let lambda = match f[2] {
                    "-" => None,
                    v => Some(v.parse().map_err(|_| err())?),
                };
                let valid_mrr = f[3].parse().map_err(|_| err())?;
                ledger.remember(LedgerEntry {
                    submodel_id: f[0].to_owned(),
                    alpha,
                    lambda,
                    valid_mrr,
                });
            }
        }
        Ok(ledger)
    }

    fn remember(&mut self, e: LedgerEntry) {
        self.index
            .insert(key(&e.submodel_id, e.alpha, e.lambda), self.entries.len());
        self.entries.push(e);
    }

    pub fn get(&self, submodel_id: &str, alpha: f64, lambda: Option<f64>) -> Option<f64> {
        self.index
            .get(&key(submodel_id, alpha, lambda))
            .map(|i| self.entries[*i].valid_mrr)
    }

    pub fn record(&mut self, entry: LedgerEntry) -> Result<()> {
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let lambda = entry.lambda.map_or_else(|| "-".to_owned(), |l| l.to_string());
            writeln!(f, "{}\t{}\t{}\t{}", entry.submodel_id, entry.alpha, lambda, entry.valid_mrr)
                .map_err(|e| Error::io(path, e))?;
        }
        self.remember(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub candidate: usize,
    pub submodel_id: String,
    pub alpha: f64,
    /// `None` when the first stage was skipped (a single candidate and alpha).
    pub mbs_valid_mrr: Option<f64>,
    pub lambda: f64,
    pub mix_valid_mrr: f64,
    /// Grid points actually evaluated (not served from the ledger).
    pub evaluations: usize,
}

/// Evaluation of one grid point: `(scores, alpha, lambda)` to validation
/// MRR, with `lambda = None` meaning MBS and `Some` meaning MIX.
pub type GridEval<'a> = dyn Fn(&SubModelScores, f64, Option<f64>) -> Result<f64> + Sync + 'a;

/// Two-stage search: best `(sub-model, alpha)` under MBS, then best `lambda`
/// under MIX with that pair fixed. The first stage is skipped when there is
/// a single candidate and a single alpha. Ties prefer the smaller `alpha`, then
/// the smaller `lambda`, then the earlier candidate. Points already in the
/// ledger are not re-evaluated. Up to `jobs` points of a stage run
/// concurrently; the ledger is written in grid order.
pub fn select_submodel(
    candidates: &[SubModelScores],
    alpha_grid: &[f64],
    lambda_grid: &[f64],
    ledger: &mut SelectionLedger,
    jobs: usize,
    evaluate: &GridEval<'_>,
) -> Result<Selection> {
    if candidates.is_empty() || alpha_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::Config("sub-model candidates and both grids must be non-empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut evaluations = 0;

    let mut run_stage = |points: Vec<(usize, f64, Option<f64>)>, ledger: &mut SelectionLedger| -> Result<Vec<f64>> {
        let missing: Vec<(usize, f64, Option<f64>)> = points
            .iter()
            .copied()
            .filter(|(c, a, l)| ledger.get(&candidates[*c].submodel_id, *a, *l).is_none())
            .collect();
        let results: Vec<f64> = pool.install(|| {
            missing
                .par_iter()
                .map(|(c, a, l)| evaluate(&candidates[*c], *a, *l))
                .collect::<Result<_>>()
        })?;
        evaluations += missing.len();
        for ((c, a, l), mrr) in missing.iter().zip(results) {
            ledger.record(LedgerEntry {
                submodel_id: candidates[*c].submodel_id.clone(),
                alpha: *a,
                lambda: *l,
                valid_mrr: mrr,
            })?;
        }
        Ok(points
            .iter()
            .map(|(c, a, l)| ledger.get(&candidates[*c].submodel_id, *a, *l).unwrap())
            .collect())
    };

    // with one candidate and one alpha the first stage has nothing to choose
    let (candidate, alpha, mbs_valid_mrr) = if candidates.len() == 1 && alpha_grid.len() == 1 {
        (0, alpha_grid[0], None)
    } else {
        let stage1: Vec<(usize, f64, Option<f64>)> = (0..candidates.len())
            .flat_map(|c| alpha_grid.iter().map(move |a| (c, *a, None)))
            .collect();
        let mrrs = run_stage(stage1.clone(), ledger)?;
        let mut best = 0;
        for i in 1..stage1.len() {
            let (c, a, _) = stage1[i];
            let (bc, ba, _) = stage1[best];
            let better = mrrs[i] > mrrs[best] || (mrrs[i] == mrrs[best] && (a < ba || (a == ba && c < bc)));
            if better {
                best = i;
            }
        }
        (stage1[best].0, stage1[best].1, Some(mrrs[best]))
    };

    let stage2: Vec<(usize, f64, Option<f64>)> = lambda_grid.iter().map(|l| (candidate, alpha, Some(*l))).collect();
    let mrrs = run_stage(stage2.clone(), ledger)?;
    let mut best = 0;
    for i in 1..stage2.len() {
        let l = stage2[i].2.unwrap();
        let bl = stage2[best].2.unwrap();
        if mrrs[i] > mrrs[best] || (mrrs[i] == mrrs[best] && l < bl) {
            best = i;
        }
    }
    Ok(Selection {
        candidate,
        submodel_id: candidates[candidate].submodel_id.clone(),
        alpha,
        mbs_valid_mrr,
        lambda: stage2[best].2.unwrap(),
        mix_valid_mrr: mrrs[best],
        evaluations,
    })
}

/// Alpha grid used for the temperature search.
pub const ALPHA_GRID: [f64; 6] = [2.0, 1.0, 0.5, 0.1, 0.05, 0.01];
/// Mixing-ratio grid.
pub const LAMBDA_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
