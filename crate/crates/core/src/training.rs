//! Negative sampling, the weighted negative-sampling loss and the sparse
//! SGD / Adam training loop.
//!
//! For a positive example with weights `a`, `b`, score `s` and negatives with
//! scores `s_i` the loss is
//!
//! ```text
//! -[ a log σ(s + γ) + Σ_i w_i b log σ(-s_i - γ) ]
//! ```
//!
//! where `w_i = 1/ν` for uniform negatives, or `softmax(β s_i)` (held
//! constant, no gradient) for self-adversarial negatives.
//!
//! Batching and negative sampling are pure functions of `(seed, step)`, so a
//! run resumed from a checkpoint at step `k` is bitwise identical to an
//! uninterrupted one.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::data::{AnswerIndex, Dataset, Direction, QueryKey, Triple};
use crate::error::{Error, Result};
use crate::models::{score, ModelParams, SparseGrad, FORMAT_VERSION};
use crate::subsampling::WeightTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Negatives per positive.
    pub nu: usize,
    pub batch_size: usize,
    /// Number of batches (optimizer updates).
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Self-adversarial temperature; 0 selects uniform negatives.
    pub adversarial_beta: f64,
    pub seed: u64,
    /// Validation period in steps; 0 disables validation.
    pub valid_every: usize,
    /// Step-decay period; 0 keeps the learning rate constant.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    /// Worker threads for batch gradients. 1 is the reproducible mode.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            nu: 16,
            batch_size: 64,
            steps: 1000,
            learning_rate: 0.01,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            adversarial_beta: 0.0,
            seed: 0,
            valid_every: 0,
            lr_decay_every: 0,
            lr_decay_factor: 0.1,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.nu == 0 {
            return bad("nu must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.adversarial_beta >= 0.0) {
            return bad("adversarial_beta must be non-negative");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if self.optimizer == OptimizerKind::Adam
            && !((0.0..1.0).contains(&self.adam_beta1)
                && (0.0..1.0).contains(&self.adam_beta2)
                && self.adam_epsilon > 0.0)
        {
            return bad("adam betas must lie in [0, 1) and epsilon must be positive");
        }
        if self.lr_decay_every > 0 && !(self.lr_decay_factor > 0.0) {
            return bad("lr_decay_factor must be positive");
        }
        Ok(())
    }

    fn learning_rate_at(&self, step: usize) -> f64 {
        match step.checked_div(self.lr_decay_every) {
            None => self.learning_rate,
            Some(k) => self.learning_rate * self.lr_decay_factor.powi(k as i32),
        }
    }
}

/// One direction-expanded training example with its frozen weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainExample {
    pub triple_index: usize,
    pub triple: Triple,
    pub direction: Direction,
    pub weight_a: f64,
    pub weight_b: f64,
}

impl TrainExample {
    pub fn query(&self) -> QueryKey {
        self.triple.query(self.direction)
    }

    pub fn answer(&self) -> u32 {
        self.triple.answer(self.direction)
    }
}

/// Pairs every example of `dataset` with its row of `weights`.
pub fn training_examples(dataset: &Dataset, weights: &WeightTable) -> Result<Vec<TrainExample>> {
    if weights.len() != dataset.num_examples() {
        return Err(Error::Data(format!(
            "weight table has {} rows, training set has {} examples",
            weights.len(),
            dataset.num_examples()
        )));
    }
    Ok(dataset
        .examples()
        .map(|(i, triple, direction)| TrainExample {
            triple_index: i / 2,
            triple,
            direction,
            weight_a: weights.a[i],
            weight_b: weights.b[i],
        })
        .collect())
}

/// Draws `nu` entities uniformly, rejecting `true_answers` (sorted).
pub fn sample_negatives<R: Rng + ?Sized>(
    query: &QueryKey,
    nu: usize,
    rng: &mut R,
    true_answers: &[u32],
    num_entities: usize,
) -> Result<Vec<u32>> {
    let excluded = true_answers
        .iter()
        .filter(|e| (**e as usize) < num_entities)
        .count();
    if excluded >= num_entities {
        return Err(Error::Degenerate(format!(
            "every entity is a true answer of {query:?}; no negatives exist"
        )));
    }
    let mut out = Vec::with_capacity(nu);
    while out.len() < nu {
        let e = rng.random_range(0..num_entities as u32);
        if true_answers.binary_search(&e).is_err() {
            out.push(e);
        }
    }
    Ok(out)
}

/// `log σ(x)`, stable for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Negative-sample weights: `1/ν`, or `softmax(β s_i)` when `beta > 0`.
pub fn negative_weights(neg_scores: &[f64], beta: f64) -> Vec<f64> {
    let n = neg_scores.len();
    if beta == 0.0 {
        return vec![1.0 / n as f64; n];
    }
    let max = neg_scores.iter().map(|s| beta * s).fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = neg_scores.iter().map(|s| (beta * s - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: SparseGrad,
}

/// Weighted loss of one example against fixed negative weights.
pub fn ns_loss_with_negative_weights(
    params: &ModelParams,
    example: &TrainExample,
    negatives: &[u32],
    neg_weights: &[f64],
) -> Result<LossGrad> {
    let gamma = params.config.gamma;
    let query = example.query();
    let pos = example.triple;
    let s_pos = score(params, &pos);
    let neg_triples: Vec<Triple> = negatives.iter().map(|e| query.with_answer(*e)).collect();
    let s_neg: Vec<f64> = neg_triples.iter().map(|t| score(params, t)).collect();
    if !s_pos.is_finite() || s_neg.iter().any(|s| !s.is_finite()) {
        return Err(Error::Diverged {
            step: 0,
            message: format!("non-finite score for example {:?}", example.triple),
        });
    }
    let (a, b) = (example.weight_a, example.weight_b);
    let mut loss = -a * log_sigmoid(s_pos + gamma);
    let mut grad = SparseGrad::default();
    grad.add_score_grad(params, &pos, -a * sigmoid(-(s_pos + gamma)));
    for ((t, s), w) in neg_triples.iter().zip(&s_neg).zip(neg_weights) {
        loss -= b * w * log_sigmoid(-s - gamma);
        grad.add_score_grad(params, t, b * w * sigmoid(s + gamma));
    }
    Ok(LossGrad { loss, grad })
}

/// Loss and gradient of one example. Self-adversarial weights (when
/// `adversarial_beta > 0`) are computed from the current scores and treated
/// as constants.
pub fn ns_loss(
    params: &ModelParams,
    example: &TrainExample,
    negatives: &[u32],
    adversarial_beta: f64,
) -> Result<LossGrad> {
    assert!(!negatives.is_empty(), "at least one negative is required");
    let query = example.query();
    let neg_scores: Vec<f64> = negatives
        .iter()
        .map(|e| score(params, &query.with_answer(*e)))
        .collect();
    let w = negative_weights(&neg_scores, adversarial_beta);
    ns_loss_with_negative_weights(params, example, negatives, &w)
}

/// Mean loss and mean gradient over a batch, accumulated in batch order.
pub fn batch_loss(
    params: &ModelParams,
    batch: &[(TrainExample, Vec<u32>)],
    adversarial_beta: f64,
) -> Result<LossGrad> {
    let mut total = LossGrad {
        loss: 0.0,
        grad: SparseGrad::default(),
    };
    for (ex, neg) in batch {
        let lg = ns_loss(params, ex, neg, adversarial_beta)?;
        total.loss += lg.loss;
        total.grad.add(&lg.grad, 1.0);
    }
    let inv = 1.0 / batch.len() as f64;
    total.loss *= inv;
    total.grad.scale(inv);
    Ok(total)
}

fn parallel_batch_loss(
    params: &ModelParams,
    batch: &[(TrainExample, Vec<u32>)],
    adversarial_beta: f64,
    pool: &rayon::ThreadPool,
) -> Result<LossGrad> {
    let parts: Vec<LossGrad> = pool.install(|| {
        batch
            .par_iter()
            .map(|(ex, neg)| ns_loss(params, ex, neg, adversarial_beta))
            .collect::<Result<_>>()
    })?;
    let mut total = LossGrad {
        loss: 0.0,
        grad: SparseGrad::default(),
    };
    for lg in &parts {
        total.loss += lg.loss;
        total.grad.add(&lg.grad, 1.0);
    }
    let inv = 1.0 / batch.len() as f64;
    total.loss *= inv;
    total.grad.scale(inv);
    Ok(total)
}

/// First and second moments for Adam; empty for SGD.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub entity_m: Vec<f64>,
    pub entity_v: Vec<f64>,
    pub relation_m: Vec<f64>,
    pub relation_v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: &ModelParams) -> Self {
        let (ne, nr) = match kind {
            OptimizerKind::Sgd => (0, 0),
            OptimizerKind::Adam => (params.entity.len(), params.relation.len()),
        };
        OptimizerState {
            kind,
            entity_m: vec![0.0; ne],
            entity_v: vec![0.0; ne],
            relation_m: vec![0.0; nr],
            relation_v: vec![0.0; nr],
        }
    }
}

/// Everything needed to continue a run exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    /// Number of updates already applied.
    pub step: usize,
    pub seed: u64,
}

const TRAIN_MAGIC: &[u8; 8] = b"KGETRAIN";

impl TrainState {
    pub fn new(params: ModelParams, config: &TrainConfig) -> Self {
        let optimizer = OptimizerState::new(config.optimizer, &params);
        TrainState {
            params,
            optimizer,
            step: 0,
            seed: config.seed,
        }
    }

    /// Parameter container followed by optimizer tag, step, seed and moments.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut enc = Encoder::default();
        enc.bytes(TRAIN_MAGIC);
        enc.u32(FORMAT_VERSION);
        self.params.encode(&mut enc);
        enc.u8(match self.optimizer.kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => 1,
        });
        enc.u64(self.step as u64);
        enc.u64(self.seed);
        let o = &self.optimizer;
        for m in [&o.entity_m, &o.entity_v, &o.relation_m, &o.relation_v] {
            enc.u64(m.len() as u64);
            enc.f64s(m);
        }
        let tmp = path.with_extension("partial");
        fs::write(&tmp, enc.buf).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut dec = Decoder::new(&bytes);
        dec.expect_magic(TRAIN_MAGIC)?;
        let version = dec.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported training checkpoint version {version}"
            )));
        }
        let params = ModelParams::decode(&mut dec)?;
        let kind = match dec.u8()? {
            0 => OptimizerKind::Sgd,
            1 => OptimizerKind::Adam,
            t => return Err(Error::Checkpoint(format!("unknown optimizer tag {t}"))),
        };
        let step = dec.u64()? as usize;
        let seed = dec.u64()?;
        let mut mats = Vec::with_capacity(4);
        for _ in 0..4 {
            let n = dec.u64()? as usize;
            mats.push(dec.f64s(n)?);
        }
        dec.finish()?;
        let relation_v = mats.pop().unwrap();
        let relation_m = mats.pop().unwrap();
        let entity_v = mats.pop().unwrap();
        let entity_m = mats.pop().unwrap();
        let expected = match kind {
            OptimizerKind::Sgd => (0, 0),
            OptimizerKind::Adam => (params.entity.len(), params.relation.len()),
        };
        if (entity_m.len(), relation_m.len()) != expected
            || entity_v.len() != entity_m.len()
            || relation_v.len() != relation_m.len()
        {
            return Err(Error::Checkpoint("optimizer state does not match parameter shapes".into()));
        }
        Ok(TrainState {
            params,
            optimizer: OptimizerState {
                kind,
                entity_m,
                entity_v,
                relation_m,
                relation_v,
            },
            step,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub valid_mrr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
    pub notes: Vec<String>,
}

impl TrainLog {
    /// `step<TAB>loss[<TAB>valid_mrr]` per update, notes as `#` lines.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for n in &self.notes {
            writeln!(w, "# {n}").map_err(io)?;
        }
        for r in &self.records {
            match r.valid_mrr {
                Some(m) => writeln!(w, "{}\t{}\t{}", r.step, r.loss, m),
                None => writeln!(w, "{}\t{}", r.step, r.loss),
            }
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

/// Validation hook: receives the 1-based step and the current parameters,
/// returns validation MRR.
pub type EvalCallback<'a> = dyn FnMut(usize, &ModelParams) -> Result<f64> + 'a;

const EPOCH_STREAM: u64 = 1 << 63;

/// Deterministic batch and negative schedule for a training set.
struct Schedule<'a> {
    examples: &'a [TrainExample],
    answers: AnswerIndex,
    num_entities: usize,
    seed: u64,
    epoch: usize,
    order: Vec<usize>,
}

impl<'a> Schedule<'a> {
    fn new(examples: &'a [TrainExample], answers: AnswerIndex, num_entities: usize, seed: u64) -> Self {
        Schedule {
            examples,
            answers,
            num_entities,
            seed,
            epoch: usize::MAX,
            order: Vec::new(),
        }
    }

    fn example_at(&mut self, position: usize) -> TrainExample {
        let n = self.examples.len();
        let epoch = position / n;
        if epoch != self.epoch {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(EPOCH_STREAM | epoch as u64);
            self.order = (0..n).collect();
            self.order.shuffle(&mut rng);
            self.epoch = epoch;
        }
        self.examples[self.order[position % n]]
    }

    /// Batch for the 0-based update `step`.
    fn batch(&mut self, step: usize, batch_size: usize, nu: usize) -> Result<Vec<(TrainExample, Vec<u32>)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step as u64);
        let mut out = Vec::with_capacity(batch_size);
        for k in 0..batch_size {
            let ex = self.example_at(step * batch_size + k);
            let q = ex.query();
            let neg = sample_negatives(&q, nu, &mut rng, self.answers.answers(&q), self.num_entities)?;
            out.push((ex, neg));
        }
        Ok(out)
    }
}

fn apply_update(state: &mut TrainState, grad: &SparseGrad, config: &TrainConfig, lr: f64) {
    let t = (state.step + 1) as i32;
    let d = state.params.config.dim;
    let dr = state.params.config.relation_dim();
    match state.optimizer.kind {
        OptimizerKind::Sgd => {
            for (id, g) in &grad.entity {
                for (p, gi) in state.params.entity_row_mut(*id).iter_mut().zip(g) {
                    *p -= lr * gi;
                }
            }
            for (id, g) in &grad.relation {
                for (p, gi) in state.params.relation_row_mut(*id).iter_mut().zip(g) {
                    *p -= lr * gi;
                }
            }
        }
        OptimizerKind::Adam => {
            let (b1, b2, eps) = (config.adam_beta1, config.adam_beta2, config.adam_epsilon);
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            let adam = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
                for i in 0..g.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            };
            let o = &mut state.optimizer;
            for (id, g) in &grad.entity {
                let r = *id as usize * d..(*id as usize + 1) * d;
                adam(
                    &mut state.params.entity[r.clone()],
                    &mut o.entity_m[r.clone()],
                    &mut o.entity_v[r],
                    g,
                );
            }
            for (id, g) in &grad.relation {
                let r = *id as usize * dr..(*id as usize + 1) * dr;
                adam(
                    &mut state.params.relation[r.clone()],
                    &mut o.relation_m[r.clone()],
                    &mut o.relation_v[r],
                    g,
                );
            }
        }
    }
}

/// Trains `params` for `config.steps` updates from scratch.
pub fn train(
    dataset: &Dataset,
    weights: &WeightTable,
    params: ModelParams,
    config: &TrainConfig,
    eval: Option<&mut EvalCallback<'_>>,
) -> Result<(ModelParams, TrainLog)> {
    let state = TrainState::new(params, config);
    let (state, log) = resume(dataset, weights, state, config, eval)?;
    Ok((state.params, log))
}

/// Continues `state` until `config.steps` updates have been applied in total.
pub fn resume(
    dataset: &Dataset,
    weights: &WeightTable,
    mut state: TrainState,
    config: &TrainConfig,
    mut eval: Option<&mut EvalCallback<'_>>,
) -> Result<(TrainState, TrainLog)> {
    config.validate()?;
    if state.seed != config.seed {
        return Err(Error::Config(format!(
            "checkpoint was trained with seed {}, config has seed {}",
            state.seed, config.seed
        )));
    }
    if state.optimizer.kind != config.optimizer {
        return Err(Error::Config("checkpoint optimizer differs from config".into()));
    }
    if state.params.num_entities != dataset.num_entities()
        || state.params.num_relations != dataset.num_relations()
    {
        return Err(Error::Data("model shape does not match dataset vocabulary".into()));
    }
    let examples = training_examples(dataset, weights)?;
    let mut log = TrainLog::default();
    if examples.is_empty() || state.step >= config.steps {
        return Ok((state, log));
    }
    let pool = if config.workers > 1 {
        log.notes.push(format!(
            "workers={} (multi-worker mode; bitwise reproducibility is only guaranteed with workers=1)",
            config.workers
        ));
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let answers = AnswerIndex::build([dataset.train.as_slice()]);
    let mut schedule = Schedule::new(&examples, answers, dataset.num_entities(), config.seed);

    while state.step < config.steps {
        let step = state.step;
        let batch = schedule.batch(step, config.batch_size, config.nu)?;
        let lg = match &pool {
            Some(p) => parallel_batch_loss(&state.params, &batch, config.adversarial_beta, p),
            None => batch_loss(&state.params, &batch, config.adversarial_beta),
        }
        .map_err(|e| match e {
            Error::Diverged { message, .. } => Error::Diverged { step: step + 1, message },
            other => other,
        })?;
        if !lg.loss.is_finite() || !lg.grad.is_finite() {
            return Err(Error::Diverged {
                step: step + 1,
                message: format!("loss {} or its gradient is not finite", lg.loss),
            });
        }
        apply_update(&mut state, &lg.grad, config, config.learning_rate_at(step));
        state.step += 1;
        let valid_mrr = match eval.as_deref_mut() {
            Some(cb) if config.valid_every > 0 && state.step.is_multiple_of(config.valid_every) => {
                Some(cb(state.step, &state.params)?)
            }
            _ => None,
        };
        log.records.push(LogRecord {
            step: state.step,
            loss: lg.loss,
            valid_mrr,
        });
    }
    if !state.params.is_finite() {
        return Err(Error::Diverged {
            step: state.step,
            message: "parameters are not finite".into(),
        });
    }
    Ok((state, log))
}

/// Mean weighted loss over the whole training set with a fixed negative
/// draw (`seed`), useful for before/after comparisons.
pub fn full_training_loss(
    dataset: &Dataset,
    weights: &WeightTable,
    params: &ModelParams,
    nu: usize,
    adversarial_beta: f64,
    seed: u64,
) -> Result<f64> {
    let examples = training_examples(dataset, weights)?;
    let answers = AnswerIndex::build([dataset.train.as_slice()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for ex in &examples {
        let q = ex.query();
        let neg = sample_negatives(&q, nu, &mut rng, answers.answers(&q), dataset.num_entities())?;
        total += ns_loss(params, ex, &neg, adversarial_beta)?.loss;
    }
    Ok(total / examples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, ModelConfig, ModelKind};

    #[test]
    fn only_candidate_is_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = QueryKey::new(Direction::TailQuery, 0, 0);
        let s = sample_negatives(&q, 20, &mut rng, &[0], 2).unwrap();
        assert!(s.iter().all(|e| *e == 1));
        assert!(matches!(
            sample_negatives(&q, 1, &mut rng, &[0, 1], 2),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let q = QueryKey::new(Direction::HeadQuery, 3, 1);
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            sample_negatives(&q, 50, &mut rng, &[2, 5, 9], 30).unwrap()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn sampling_is_uniform_within_five_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = QueryKey::new(Direction::TailQuery, 0, 0);
        let draws = sample_negatives(&q, 100_000, &mut rng, &[], 100).unwrap();
        let mut counts = [0u32; 100];
        draws.iter().for_each(|e| counts[*e as usize] += 1);
        // binomial(1e5, 0.01): mean 1000, sd sqrt(990)
        let sd = (100_000.0f64 * 0.01 * 0.99).sqrt();
        assert!(counts.iter().all(|c| (*c as f64 - 1000.0).abs() <= 5.0 * sd));
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) + 2f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(800.0) == 0.0);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }

    fn flat_params(kind: ModelKind) -> ModelParams {
        let mut p = init_params(&ModelConfig::new(kind, 4, 0.0), 4, 1, 0).unwrap();
        p.config.gamma = 0.0;
        p.entity.iter_mut().for_each(|x| *x = 0.0);
        p.relation.iter_mut().for_each(|x| *x = 0.0);
        p
    }

    fn example(a: f64, b: f64) -> TrainExample {
        TrainExample {
            triple_index: 0,
            triple: Triple::new(0, 0, 1),
            direction: Direction::TailQuery,
            weight_a: a,
            weight_b: b,
        }
    }

    #[test]
    fn zero_scores_give_two_ln_two() {
        // DistMult with all-zero embeddings scores every triple 0
        let p = flat_params(ModelKind::DistMult);
        for beta in [0.0, 1.0] {
            let l = ns_loss(&p, &example(1.0, 1.0), &[2, 3], beta).unwrap();
            assert!((l.loss - 2.0 * 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_is_linear_in_weights() {
        let p = init_params(&ModelConfig::new(ModelKind::RotatE, 6, 2.0), 5, 2, 3).unwrap();
        let base = ns_loss(&p, &example(0.7, 1.3), &[2, 3, 4], 0.5).unwrap();
        let scaled = ns_loss(&p, &example(2.1, 3.9), &[2, 3, 4], 0.5).unwrap();
        assert!((scaled.loss - 3.0 * base.loss).abs() < 1e-12);
        for (id, row) in &base.grad.entity {
            for (x, y) in row.iter().zip(&scaled.grad.entity[id]) {
                assert!((3.0 * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_of_identical_examples_equals_single() {
        let p = init_params(&ModelConfig::new(ModelKind::TransE, 6, 2.0), 5, 2, 3).unwrap();
        let item = (example(1.2, 0.8), vec![2, 4]);
        let one = ns_loss(&p, &item.0, &item.1, 0.0).unwrap();
        let batch = batch_loss(&p, &[item.clone(), item.clone(), item], 0.0).unwrap();
        assert!((batch.loss - one.loss).abs() < 1e-12);
    }

    #[test]
    fn train_state_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_params(&ModelConfig::new(ModelKind::ComplEx, 4, 1.0), 3, 2, 1).unwrap();
        let mut s = TrainState::new(p, &TrainConfig::default());
        s.step = 17;
        s.optimizer.entity_m[3] = 0.25;
        let path = dir.path().join("c.ckpt");
        s.save(&path).unwrap();
        assert_eq!(TrainState::load(&path).unwrap(), s);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(TrainState::load(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn bad_config_rejected() {
        let c = TrainConfig {
            nu: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            adversarial_beta: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn step_decay() {
        let c = TrainConfig {
            learning_rate: 1.0,
            lr_decay_every: 10,
            lr_decay_factor: 0.5,
            ..Default::default()
        };
        assert_eq!(c.learning_rate_at(9), 1.0);
        assert_eq!(c.learning_rate_at(10), 0.5);
        assert_eq!(c.learning_rate_at(25), 0.25);
    }
}
