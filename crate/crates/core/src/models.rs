//! Embedding storage, the five score functions and their analytic gradients.
//!
//! All scores follow the "higher is more plausible" convention:
//!
//! | kind     | entity row            | relation row                 | score |
//! |----------|-----------------------|------------------------------|-------|
//! | TransE   | `d` reals             | `d` reals                    | `-‖h + r - t‖_p` |
//! | DistMult | `d` reals             | `d` reals                    | `Σ h_i r_i t_i` |
//! | ComplEx  | `d/2` complex (re,im) | `d/2` complex                | `Re Σ h_i r_i conj(t_i)` |
//! | RotatE   | `d/2` complex         | `d/2` phase angles           | `-Σ_i |h_i e^{iθ_i} - t_i|` |
//! | HAKE     | `d/2` modulus, `d/2` phase | modulus, phase, bias (`d/2` each) | see [`ModelKind::Hake`] |
//!
//! Complex numbers are stored as interleaved `(re, im)` pairs. Non-smooth
//! points (L1 terms, zero-length L2 norms) use the `sign(0) = 0` subgradient.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::data::{QueryKey, Triple};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    RotatE,
    ComplEx,
    DistMult,
    /// Modulus part `-‖h_m ∘ (|r_m| + b) - t_m ∘ (1 - b)‖₂` plus phase part
    /// `-w_p Σ |sin((h_p + r_p - t_p) / 2)|`. With `b = 0` the modulus part is
    /// `-‖h_m ∘ |r_m| - t_m‖₂`.
    Hake,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::TransE,
        ModelKind::RotatE,
        ModelKind::ComplEx,
        ModelKind::DistMult,
        ModelKind::Hake,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::RotatE => "rotate",
            ModelKind::ComplEx => "complex",
            ModelKind::DistMult => "distmult",
            ModelKind::Hake => "hake",
        }
    }

    fn tag(self) -> u8 {
        match self {
            ModelKind::TransE => 0,
            ModelKind::RotatE => 1,
            ModelKind::ComplEx => 2,
            ModelKind::DistMult => 3,
            ModelKind::Hake => 4,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        ModelKind::ALL.into_iter().find(|k| k.tag() == tag)
    }

    /// Relation row width for entity width `dim`.
    pub fn relation_dim(self, dim: usize) -> usize {
        match self {
            ModelKind::TransE | ModelKind::DistMult | ModelKind::ComplEx => dim,
            ModelKind::RotatE => dim / 2,
            ModelKind::Hake => 3 * dim / 2,
        }
    }

    fn needs_even_dim(self) -> bool {
        matches!(self, ModelKind::RotatE | ModelKind::ComplEx | ModelKind::Hake)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

/// Shape and hyper-parameters of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Real degrees of freedom per entity.
    pub dim: usize,
    /// Margin added inside the sigmoid of the loss.
    pub gamma: f64,
    /// TransE norm order, 1 or 2.
    pub p_norm: u32,
    /// HAKE phase-term weight.
    pub phase_weight: f64,
    /// Init bound is `(gamma + init_epsilon) / dim`.
    pub init_epsilon: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::TransE,
            dim: 32,
            gamma: 6.0,
            p_norm: 1,
            phase_weight: 0.5,
            init_epsilon: 2.0,
        }
    }
}

impl ModelConfig {
    pub fn new(kind: ModelKind, dim: usize, gamma: f64) -> Self {
        ModelConfig {
            kind,
            dim,
            gamma,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("model dim must be positive".into()));
        }
        if self.kind.needs_even_dim() && !self.dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "{} needs an even dim, got {}",
                self.kind, self.dim
            )));
        }
        if self.kind == ModelKind::TransE && !matches!(self.p_norm, 1 | 2) {
            return Err(Error::Config(format!("p_norm must be 1 or 2, got {}", self.p_norm)));
        }
        if !self.gamma.is_finite() || !self.phase_weight.is_finite() || !self.init_epsilon.is_finite() {
            return Err(Error::Config("model scalars must be finite".into()));
        }
        Ok(())
    }

    pub fn relation_dim(&self) -> usize {
        self.kind.relation_dim(self.dim)
    }

    pub fn init_bound(&self) -> f64 {
        (self.gamma + self.init_epsilon) / self.dim as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub num_entities: usize,
    pub num_relations: usize,
    /// Row-major `num_entities × config.dim`.
    pub entity: Vec<f64>,
    /// Row-major `num_relations × config.relation_dim()`.
    pub relation: Vec<f64>,
}

/// Deterministic uniform initialisation.
pub fn init_params(
    config: &ModelConfig,
    num_entities: usize,
    num_relations: usize,
    seed: u64,
) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = config.init_bound();
    let d = config.dim;
    let dr = config.relation_dim();
    let mut uniform = |lo: f64, hi: f64| rng.random_range(lo..hi);

    let mut entity = Vec::with_capacity(num_entities * d);
    for _ in 0..num_entities {
        for j in 0..d {
            let phase = config.kind == ModelKind::Hake && j >= d / 2;
            entity.push(if phase { uniform(-PI, PI) } else { uniform(-b, b) });
        }
    }
    let mut relation = Vec::with_capacity(num_relations * dr);
    for _ in 0..num_relations {
        for j in 0..dr {
            let phase = match config.kind {
                ModelKind::RotatE => true,
                ModelKind::Hake => (d / 2..d).contains(&j),
                _ => false,
            };
            relation.push(if phase { uniform(-PI, PI) } else { uniform(-b, b) });
        }
    }
    Ok(ModelParams {
        config: config.clone(),
        num_entities,
        num_relations,
        entity,
        relation,
    })
}

/// Gradient of a single score with respect to the three rows it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrad {
    pub head: Vec<f64>,
    pub relation: Vec<f64>,
    pub tail: Vec<f64>,
}

/// Row-sparse gradient over the embedding matrices. Rows are kept in id
/// order so accumulation and application are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGrad {
    pub entity: BTreeMap<u32, Vec<f64>>,
    pub relation: BTreeMap<u32, Vec<f64>>,
}

impl SparseGrad {
    pub fn is_empty(&self) -> bool {
        self.entity.is_empty() && self.relation.is_empty()
    }

    /// Adds `scale * ∂score(triple)/∂θ`.
    pub fn add_score_grad(&mut self, params: &ModelParams, triple: &Triple, scale: f64) {
        if scale == 0.0 {
            return;
        }
        let g = score_gradient(params, triple);
        axpy(self.entity_row(triple.head, params.config.dim), scale, &g.head);
        axpy(self.entity_row(triple.tail, params.config.dim), scale, &g.tail);
        let dr = params.config.relation_dim();
        axpy(self.relation_row(triple.relation, dr), scale, &g.relation);
    }

    pub fn add(&mut self, other: &SparseGrad, scale: f64) {
        for (id, row) in &other.entity {
            axpy(self.entity_row(*id, row.len()), scale, row);
        }
        for (id, row) in &other.relation {
            axpy(self.relation_row(*id, row.len()), scale, row);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for row in self.entity.values_mut().chain(self.relation.values_mut()) {
            row.iter_mut().for_each(|x| *x *= c);
        }
    }

    pub fn entity_row(&mut self, id: u32, dim: usize) -> &mut Vec<f64> {
        self.entity.entry(id).or_insert_with(|| vec![0.0; dim])
    }

    pub fn relation_row(&mut self, id: u32, dim: usize) -> &mut Vec<f64> {
        self.relation.entry(id).or_insert_with(|| vec![0.0; dim])
    }

    pub fn is_finite(&self) -> bool {
        self.entity
            .values()
            .chain(self.relation.values())
            .all(|r| r.iter().all(|x| x.is_finite()))
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn entity_row(&self, id: u32) -> &[f64] {
        let d = self.config.dim;
        &self.entity[id as usize * d..(id as usize + 1) * d]
    }

    pub fn relation_row(&self, id: u32) -> &[f64] {
        let d = self.config.relation_dim();
        &self.relation[id as usize * d..(id as usize + 1) * d]
    }

    pub fn entity_row_mut(&mut self, id: u32) -> &mut [f64] {
        let d = self.config.dim;
        &mut self.entity[id as usize * d..(id as usize + 1) * d]
    }

    pub fn relation_row_mut(&mut self, id: u32) -> &mut [f64] {
        let d = self.config.relation_dim();
        &mut self.relation[id as usize * d..(id as usize + 1) * d]
    }

    pub fn is_finite(&self) -> bool {
        self.entity.iter().chain(&self.relation).all(|x| x.is_finite())
    }

    pub fn score(&self, triple: &Triple) -> f64 {
        score(self, triple)
    }

    pub(crate) fn encode(&self, enc: &mut Encoder) {
        let c = &self.config;
        enc.bytes(PARAMS_MAGIC);
        enc.u32(FORMAT_VERSION);
        enc.u8(c.kind.tag());
        enc.u64(c.dim as u64);
        enc.f64(c.gamma);
        enc.u32(c.p_norm);
        enc.f64(c.phase_weight);
        enc.f64(c.init_epsilon);
        enc.u64(self.num_entities as u64);
        enc.u64(self.num_relations as u64);
        enc.f64s(&self.entity);
        enc.f64s(&self.relation);
    }

    pub(crate) fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        dec.expect_magic(PARAMS_MAGIC)?;
        let version = dec.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let tag = dec.u8()?;
        let kind = ModelKind::from_tag(tag)
            .ok_or_else(|| Error::Checkpoint(format!("unknown model tag {tag}")))?;
        let config = ModelConfig {
            kind,
            dim: dec.u64()? as usize,
            gamma: dec.f64()?,
            p_norm: dec.u32()?,
            phase_weight: dec.f64()?,
            init_epsilon: dec.f64()?,
        };
        config
            .validate()
            .map_err(|e| Error::Checkpoint(format!("invalid header: {e}")))?;
        let num_entities = dec.u64()? as usize;
        let num_relations = dec.u64()? as usize;
        let entity = dec.f64s(num_entities * config.dim)?;
        let relation = dec.f64s(num_relations * config.relation_dim())?;
        Ok(ModelParams {
            config,
            num_entities,
            num_relations,
            entity,
            relation,
        })
    }

    /// Writes the parameter container. Loading it back is bitwise identity.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut enc = Encoder::default();
        self.encode(&mut enc);
        fs::write(path, enc.buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut dec = Decoder::new(&bytes);
        let p = ModelParams::decode(&mut dec)?;
        dec.finish()?;
        Ok(p)
    }
}

const PARAMS_MAGIC: &[u8; 8] = b"KGEPARAM";
pub(crate) const FORMAT_VERSION: u32 = 1;

pub fn score(params: &ModelParams, triple: &Triple) -> f64 {
    score_rows(
        &params.config,
        params.entity_row(triple.head),
        params.relation_row(triple.relation),
        params.entity_row(triple.tail),
    )
}

/// Scores `query` against every candidate answer.
pub fn score_batch(params: &ModelParams, query: &QueryKey, candidates: &[u32]) -> Vec<f64> {
    candidates
        .iter()
        .map(|&c| score(params, &query.with_answer(c)))
        .collect()
}

pub fn score_gradient(params: &ModelParams, triple: &Triple) -> ScoreGrad {
    let c = &params.config;
    let mut g = ScoreGrad {
        head: vec![0.0; c.dim],
        relation: vec![0.0; c.relation_dim()],
        tail: vec![0.0; c.dim],
    };
    grad_rows(
        c,
        params.entity_row(triple.head),
        params.relation_row(triple.relation),
        params.entity_row(triple.tail),
        &mut g,
    );
    g
}

pub(crate) fn score_rows(c: &ModelConfig, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match c.kind {
        ModelKind::TransE => {
            let diffs = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t);
            if c.p_norm == 1 {
                -diffs.map(f64::abs).sum::<f64>()
            } else {
                -diffs.map(|x| x * x).sum::<f64>().sqrt()
            }
        }
        ModelKind::DistMult => h.iter().zip(r).zip(t).map(|((h, r), t)| h * r * t).sum(),
        ModelKind::ComplEx => {
            let mut s = 0.0;
            for k in 0..h.len() / 2 {
                let (a, b) = (h[2 * k], h[2 * k + 1]);
                let (cr, ci) = (r[2 * k], r[2 * k + 1]);
                let (e, f) = (t[2 * k], t[2 * k + 1]);
                s += (a * cr - b * ci) * e + (a * ci + b * cr) * f;
            }
            s
        }
        ModelKind::RotatE => {
            let mut s = 0.0;
            for (k, theta) in r.iter().enumerate() {
                let (cos, sin) = (theta.cos(), theta.sin());
                let (a, b) = (h[2 * k], h[2 * k + 1]);
                let ur = a * cos - b * sin - t[2 * k];
                let ui = a * sin + b * cos - t[2 * k + 1];
                s -= (ur * ur + ui * ui).sqrt();
            }
            s
        }
        ModelKind::Hake => {
            let k = h.len() / 2;
            let mut modulus = 0.0;
            let mut phase = 0.0;
            for i in 0..k {
                let rb = r[2 * k + i];
                let u = h[i] * (r[i].abs() + rb) - t[i] * (1.0 - rb);
                modulus += u * u;
                phase += ((h[k + i] + r[k + i] - t[k + i]) / 2.0).sin().abs();
            }
            -modulus.sqrt() - c.phase_weight * phase
        }
    }
}

fn grad_rows(c: &ModelConfig, h: &[f64], r: &[f64], t: &[f64], g: &mut ScoreGrad) {
    match c.kind {
        ModelKind::TransE => {
            let d: Vec<f64> = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t).collect();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (i, di) in d.iter().enumerate() {
                // ∂s/∂d_i
                let gd = if c.p_norm == 1 {
                    -sign(*di)
                } else if norm > 0.0 {
                    -di / norm
                } else {
                    0.0
                };
                g.head[i] = gd;
                g.relation[i] = gd;
                g.tail[i] = -gd;
            }
        }
        ModelKind::DistMult => {
            for i in 0..h.len() {
                g.head[i] = r[i] * t[i];
                g.relation[i] = h[i] * t[i];
                g.tail[i] = h[i] * r[i];
            }
        }
        ModelKind::ComplEx => {
            for k in 0..h.len() / 2 {
                let (re, im) = (2 * k, 2 * k + 1);
                let (a, b) = (h[re], h[im]);
                let (cr, ci) = (r[re], r[im]);
                let (e, f) = (t[re], t[im]);
                g.head[re] = cr * e + ci * f;
                g.head[im] = -ci * e + cr * f;
                g.relation[re] = a * e + b * f;
                g.relation[im] = -b * e + a * f;
                g.tail[re] = a * cr - b * ci;
                g.tail[im] = a * ci + b * cr;
            }
        }
        ModelKind::RotatE => {
            for (k, theta) in r.iter().enumerate() {
                let (re, im) = (2 * k, 2 * k + 1);
                let (cos, sin) = (theta.cos(), theta.sin());
                let (a, b) = (h[re], h[im]);
                let ur = a * cos - b * sin - t[re];
                let ui = a * sin + b * cos - t[im];
                let m = (ur * ur + ui * ui).sqrt();
                if m == 0.0 {
                    continue;
                }
                // s = -m; ∂s/∂u = -u/m
                let (gr, gi) = (-ur / m, -ui / m);
                g.head[re] = gr * cos + gi * sin;
                g.head[im] = -gr * sin + gi * cos;
                g.tail[re] = -gr;
                g.tail[im] = -gi;
                g.relation[k] = gr * (-a * sin - b * cos) + gi * (a * cos - b * sin);
            }
        }
        ModelKind::Hake => {
            let k = h.len() / 2;
            let mut u = vec![0.0; k];
            for i in 0..k {
                let rb = r[2 * k + i];
                u[i] = h[i] * (r[i].abs() + rb) - t[i] * (1.0 - rb);
            }
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            for i in 0..k {
                let rb = r[2 * k + i];
                let gu = if norm > 0.0 { -u[i] / norm } else { 0.0 };
                g.head[i] = gu * (r[i].abs() + rb);
                g.relation[i] = gu * h[i] * sign(r[i]);
                g.relation[2 * k + i] = gu * (h[i] + t[i]);
                g.tail[i] = -gu * (1.0 - rb);

                let x = (h[k + i] + r[k + i] - t[k + i]) / 2.0;
                let gx = -c.phase_weight * sign(x.sin()) * x.cos() / 2.0;
                g.head[k + i] = gx;
                g.relation[k + i] = gx;
                g.tail[k + i] = -gx;
            }
        }
    }
}
