//! Per-example positive (`a`) and negative (`b`) weight tables.
//!
//! Given a per-example pair frequency `f_xy` and query frequency `f_x`, the
//! three weighting schemes are
//!
//! | method | `a`           | `b`           |
//! |--------|---------------|---------------|
//! | Base   | `f_xy^-alpha` | `f_xy^-alpha` |
//! | Freq   | `f_xy^-alpha` | `f_x^-alpha`  |
//! | Uniq   | `f_x^-alpha`  | `f_x^-alpha`  |
//!
//! and each column is rescaled to mean 1 over the direction-expanded
//! training set. Count-based tables use counted frequencies with the fixed
//! exponent `1/2`; model-based tables use sub-model frequencies and a
//! temperature `alpha`; mixed tables are convex combinations of the two.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{example_parts, Dataset, Direction, FrequencyTable, QueryKey};
use crate::error::{Error, Result};
use crate::models::{score_batch, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SubsamplingMethod {
    /// `a = b = 1` everywhere.
    #[default]
    None,
    Base,
    Freq,
    Uniq,
}

impl SubsamplingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SubsamplingMethod::None => "none",
            SubsamplingMethod::Base => "base",
            SubsamplingMethod::Freq => "freq",
            SubsamplingMethod::Uniq => "uniq",
        }
    }
}

impl fmt::Display for SubsamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubsamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(SubsamplingMethod::None),
            "base" => Ok(SubsamplingMethod::Base),
            "freq" => Ok(SubsamplingMethod::Freq),
            "uniq" => Ok(SubsamplingMethod::Uniq),
            _ => Err(Error::Config(format!("unknown subsampling method `{s}`"))),
        }
    }
}

/// Where the frequencies behind a weight table come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SubsamplingSource {
    #[default]
    Cbs,
    Mbs,
    Mix,
}

impl SubsamplingSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SubsamplingSource::Cbs => "cbs",
            SubsamplingSource::Mbs => "mbs",
            SubsamplingSource::Mix => "mix",
        }
    }
}

impl fmt::Display for SubsamplingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubsamplingSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cbs" => Ok(SubsamplingSource::Cbs),
            "mbs" => Ok(SubsamplingSource::Mbs),
            "mix" => Ok(SubsamplingSource::Mix),
            _ => Err(Error::Config(format!("unknown subsampling source `{s}`"))),
        }
    }
}

/// How the model-based query frequency sums probability mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QueryMass {
    /// Sum over the answers of the query observed in the training set.
    #[default]
    ObservedAnswers,
    /// Sum over every entity as a candidate answer.
    AllCandidates,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub method: SubsamplingMethod,
    pub source: SubsamplingSource,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub submodel: Option<String>,
}

/// Frozen per-example weights, indexed by direction-expanded example id.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub provenance: Provenance,
}

impl WeightTable {
    pub fn ones(n: usize) -> Self {
        WeightTable {
            a: vec![1.0; n],
            b: vec![1.0; n],
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Writes `example_id<TAB>direction<TAB>a<TAB>b` rows under a `#` header.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let p = &self.provenance;
        let io = |e| Error::io(path, e);
        writeln!(w, "# method={}", p.method).map_err(io)?;
        writeln!(w, "# source={}", p.source).map_err(io)?;
        if let Some(a) = p.alpha {
            writeln!(w, "# alpha={a}").map_err(io)?;
        }
        if let Some(l) = p.lambda {
            writeln!(w, "# lambda={l}").map_err(io)?;
        }
        if let Some(s) = &p.submodel {
            writeln!(w, "# submodel={s}").map_err(io)?;
        }
        for (i, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            let (_, dir) = example_parts(i);
            writeln!(w, "{i}\t{dir}\t{a}\t{b}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let header = parse_header(&text);
        let mut provenance = Provenance::default();
        if let Some(m) = header.get("method") {
            provenance.method = m.parse()?;
        }
        if let Some(s) = header.get("source") {
            provenance.source = s.parse()?;
        }
        provenance.alpha = header.get("alpha").and_then(|v| v.parse().ok());
        provenance.lambda = header.get("lambda").and_then(|v| v.parse().ok());
        provenance.submodel = header.get("submodel").cloned();

        let mut a = Vec::new();
        let mut b = Vec::new();
        for (n, line) in data_lines(&text) {
            let err = |m: &str| Error::Parse {
                path: path.to_owned(),
                line: n,
                message: m.to_owned(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(err("expected 4 tab-separated fields"));
            }
            let id: usize = f[0].parse().map_err(|_| err("bad example id"))?;
            if id != a.len() {
                return Err(err("example ids must be consecutive from 0"));
            }
            let dir = Direction::parse(f[1]).ok_or_else(|| err("direction must be `tail` or `head`"))?;
            if dir != example_parts(id).1 {
                return Err(err("direction does not match example id parity"));
            }
            a.push(f[2].parse().map_err(|_| err("bad weight a"))?);
            b.push(f[3].parse().map_err(|_| err("bad weight b"))?);
        }
        Ok(WeightTable { a, b, provenance })
    }
}

fn parse_header(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .collect()
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Raw score of every direction-expanded training example under a frozen
/// sub-model.
#[derive(Debug, Clone, PartialEq)]
pub struct SubModelScores {
    pub raw: Vec<f64>,
    pub submodel_id: String,
}

impl SubModelScores {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Writes `example_id<TAB>raw_score` rows under a `# submodel=` header.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "# submodel={}", self.submodel_id).map_err(io)?;
        for (i, s) in self.raw.iter().enumerate() {
            writeln!(w, "{i}\t{s}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let submodel_id = parse_header(&text)
            .remove("submodel")
            .unwrap_or_else(|| path.display().to_string());
        let mut raw = Vec::new();
        for (n, line) in data_lines(&text) {
            let err = |m: &str| Error::Parse {
                path: path.to_owned(),
                line: n,
                message: m.to_owned(),
            };
            let (id, s) = line.split_once('\t').ok_or_else(|| err("expected `example_id<TAB>raw_score`"))?;
            let id: usize = id.parse().map_err(|_| err("bad example id"))?;
            if id != raw.len() {
                return Err(err("example ids must be consecutive from 0"));
            }
            let s: f64 = s.parse().map_err(|_| err("bad score"))?;
            if !s.is_finite() {
                return Err(err("score is not finite"));
            }
            raw.push(s);
        }
        Ok(SubModelScores { raw, submodel_id })
    }
}

/// Per-example pair frequency `f_xy` and query frequency `f_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleFrequencies {
    pub pair: Vec<f64>,
    pub query: Vec<f64>,
}

/// Counted frequencies: back-off triple frequency and smoothed query count.
pub fn counted_frequencies(dataset: &Dataset, freq: &FrequencyTable) -> ExampleFrequencies {
    let (pair, query) = dataset
        .examples()
        .map(|(_, t, d)| (freq.triple_frequency(&t), freq.query_frequency(&t.query(d))))
        .unzip();
    ExampleFrequencies { pair, query }
}

fn rescale_to_mean_one(v: &mut [f64]) {
    let n = v.len() as f64;
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x *= n / sum);
}

/// Count-based weights with the `1/sqrt(#)` discount.
pub fn build_cbs_weights(
    dataset: &Dataset,
    freq: &FrequencyTable,
    method: SubsamplingMethod,
) -> Result<WeightTable> {
    let n = dataset.num_examples();
    let mut table = WeightTable::ones(n);
    table.provenance.method = method;
    if method == SubsamplingMethod::None {
        return Ok(table);
    }
    let f = counted_frequencies(dataset, freq);
    if let Some(i) = f.pair.iter().chain(&f.query).position(|x| *x <= 0.0) {
        return Err(Error::Degenerate(format!(
            "zero counted frequency for example {} (smoothing {})",
            i % n.max(1),
            freq.smoothing()
        )));
    }
    let inv_sqrt = |v: &[f64]| v.iter().map(|x| 1.0 / x.sqrt()).collect::<Vec<_>>();
    let (mut a, mut b) = match method {
        SubsamplingMethod::Base => (inv_sqrt(&f.pair), inv_sqrt(&f.pair)),
        SubsamplingMethod::Freq => (inv_sqrt(&f.pair), inv_sqrt(&f.query)),
        SubsamplingMethod::Uniq => (inv_sqrt(&f.query), inv_sqrt(&f.query)),
        SubsamplingMethod::None => unreachable!(),
    };
    rescale_to_mean_one(&mut a);
    rescale_to_mean_one(&mut b);
    table.a = a;
    table.b = b;
    Ok(table)
}

/// Softmax of the sub-model scores over the whole training set.
pub fn softmax_over_train(scores: &SubModelScores) -> Vec<f64> {
    assert!(!scores.raw.is_empty(), "softmax over an empty training set");
    let max = scores.raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = scores.raw.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// Model-based frequencies: `f_xy = |D| p_i` and
/// `f_x = |D| Σ_{i : query(i) = x} p_i`.
pub fn mbs_frequencies(dataset: &Dataset, p: &[f64]) -> ExampleFrequencies {
    let n = dataset.num_examples() as f64;
    let mass = mbs_query_frequencies(dataset, p);
    let pair = p.iter().map(|pi| n * pi).collect();
    let query = dataset.examples().map(|(_, t, d)| mass[&t.query(d)]).collect();
    ExampleFrequencies { pair, query }
}

/// `f_x` per query key for the observed-answers reading.
pub fn mbs_query_frequencies(dataset: &Dataset, p: &[f64]) -> BTreeMap<QueryKey, f64> {
    assert_eq!(p.len(), dataset.num_examples(), "one probability per example");
    let n = dataset.num_examples() as f64;
    let mut mass: BTreeMap<QueryKey, f64> = BTreeMap::new();
    for (i, t, d) in dataset.examples() {
        *mass.entry(t.query(d)).or_insert(0.0) += p[i];
    }
    mass.values_mut().for_each(|m| *m *= n);
    mass
}

/// Model-based frequencies where `f_x` sums the sub-model's (training-set
/// normalised) probability over every entity as the answer of `x`.
pub fn mbs_frequencies_all_candidates(
    submodel: &ModelParams,
    dataset: &Dataset,
    scores: &SubModelScores,
) -> ExampleFrequencies {
    let n = dataset.num_examples() as f64;
    let max = scores.raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.raw.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    let pair = scores.raw.iter().map(|s| n * (s - log_z).exp()).collect();
    let candidates: Vec<u32> = (0..submodel.num_entities as u32).collect();
    let mut cache: BTreeMap<QueryKey, f64> = BTreeMap::new();
    let query = dataset
        .examples()
        .map(|(_, t, d)| {
            let q = t.query(d);
            *cache.entry(q).or_insert_with(|| {
                let s = score_batch(submodel, &q, &candidates);
                n * s.iter().map(|x| (x - log_z).exp()).sum::<f64>()
            })
        })
        .collect();
    ExampleFrequencies { pair, query }
}

/// Weights `∝ f^-alpha`, computed in the log domain and rescaled to mean 1.
fn tempered(f: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if let Some(x) = f.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::Degenerate(format!(
            "model-based frequency {x} is not a positive finite number"
        )));
    }
    let logs: Vec<f64> = f.iter().map(|x| -alpha * x.ln()).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    rescale_to_mean_one(&mut w);
    Ok(w)
}

/// Model-based weights with temperature `alpha`.
pub fn build_mbs_weights(
    freqs: &ExampleFrequencies,
    method: SubsamplingMethod,
    alpha: f64,
) -> Result<WeightTable> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    let n = freqs.pair.len();
    let mut table = WeightTable::ones(n);
    table.provenance = Provenance {
        method,
        source: SubsamplingSource::Mbs,
        alpha: Some(alpha),
        ..Default::default()
    };
    let (a, b) = match method {
        SubsamplingMethod::None => return Ok(table),
        SubsamplingMethod::Base => {
            let w = tempered(&freqs.pair, alpha)?;
            (w.clone(), w)
        }
        SubsamplingMethod::Freq => (tempered(&freqs.pair, alpha)?, tempered(&freqs.query, alpha)?),
        SubsamplingMethod::Uniq => {
            let w = tempered(&freqs.query, alpha)?;
            (w.clone(), w)
        }
    };
    table.a = a;
    table.b = b;
    Ok(table)
}

/// `lambda * mbs + (1 - lambda) * cbs`, elementwise.
pub fn mix_weights(cbs: &WeightTable, mbs: &WeightTable, lambda: f64) -> Result<WeightTable> {
    if cbs.len() != mbs.len() {
        return Err(Error::Data(format!(
            "weight tables cover different example sets ({} vs {})",
            cbs.len(),
            mbs.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let mix = |c: &[f64], m: &[f64]| -> Vec<f64> {
        c.iter()
            .zip(m)
            .map(|(c, m)| lambda * m + (1.0 - lambda) * c)
            .collect()
    };
    Ok(WeightTable {
        a: mix(&cbs.a, &mbs.a),
        b: mix(&cbs.b, &mbs.b),
        provenance: Provenance {
            method: mbs.provenance.method,
            source: SubsamplingSource::Mix,
            alpha: mbs.provenance.alpha,
            lambda: Some(lambda),
            submodel: mbs.provenance.submodel.clone(),
        },
    })
}
