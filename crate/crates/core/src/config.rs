//! TOML experiment configuration and run directories.
//!
//! ```toml
//! [data]
//! dir = "fb15k-237"      # relative paths resolve against $KGE_DATA_ROOT
//! smoothing = 4.0
//!
//! [model]
//! kind = "rotate"
//! dim = 64
//! gamma = 9.0
//!
//! [train]
//! steps = 5000
//! seed = 1
//!
//! [subsampling]
//! source = "mix"
//! method = "freq"
//! alpha = 0.5
//! lambda = 0.3
//! submodel_scores = "runs/scores.tsv"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelKind};
use crate::subsampling::{QueryMass, SubsamplingMethod, SubsamplingSource};
use crate::submodel::{SubmodelSubsampling, WeightSpec, ALPHA_GRID, LAMBDA_GRID};
use crate::training::TrainConfig;

/// Environment variable holding the root for relative dataset paths.
pub const DATA_ROOT_VAR: &str = "KGE_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: PathBuf,
    /// Additive smoothing of query counts.
    pub smoothing: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: PathBuf::from("data"),
            smoothing: 4.0,
        }
    }
}

impl DataConfig {
    /// `dir` itself if absolute or if `$KGE_DATA_ROOT` is unset.
    pub fn resolved_dir(&self) -> PathBuf {
        match std::env::var_os(DATA_ROOT_VAR) {
            Some(root) if self.dir.is_relative() => PathBuf::from(root).join(&self.dir),
            _ => self.dir.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsamplingConfig {
    pub source: SubsamplingSource,
    pub method: SubsamplingMethod,
    /// MBS temperature.
    pub alpha: f64,
    /// MIX ratio, the weight of the MBS table.
    pub lambda: f64,
    pub query_mass: QueryMass,
    /// Sub-model score file, required for `mbs` and `mix`.
    pub submodel_scores: Option<PathBuf>,
    /// Sub-model checkpoint, required for the all-candidates query mass.
    pub submodel_checkpoint: Option<PathBuf>,
}

impl Default for SubsamplingConfig {
    fn default() -> Self {
        let spec = WeightSpec::default();
        SubsamplingConfig {
            source: spec.source,
            method: spec.method,
            alpha: spec.alpha,
            lambda: spec.lambda,
            query_mass: spec.query_mass,
            submodel_scores: None,
            submodel_checkpoint: None,
        }
    }
}

impl SubsamplingConfig {
    pub fn spec(&self) -> WeightSpec {
        WeightSpec {
            source: self.source,
            method: self.method,
            alpha: self.alpha,
            lambda: self.lambda,
            query_mass: self.query_mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubmodelConfig {
    pub kind: ModelKind,
    pub subsampling: SubmodelSubsampling,
    /// Overrides of the main model shape; unset values are inherited.
    pub dim: Option<usize>,
    pub gamma: Option<f64>,
    /// Overrides of the main training budget.
    pub steps: Option<usize>,
}

impl Default for SubmodelConfig {
    fn default() -> Self {
        SubmodelConfig {
            kind: ModelKind::ComplEx,
            subsampling: SubmodelSubsampling::None,
            dim: None,
            gamma: None,
            steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alpha_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            alpha_grid: ALPHA_GRID.to_vec(),
            lambda_grid: LAMBDA_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Parent of the timestamped run directories.
    pub root: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            root: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub subsampling: SubsamplingConfig,
    pub submodel: SubmodelConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.data.smoothing >= 0.0) {
            return Err(Error::Config("smoothing must be non-negative".into()));
        }
        let s = &self.subsampling;
        if !(s.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if !(0.0..=1.0).contains(&s.lambda) {
            return Err(Error::Config("lambda must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Model and training settings of the sub-model.
    pub fn submodel_settings(&self) -> (ModelConfig, TrainConfig) {
        let mut model = self.model.clone();
        model.kind = self.submodel.kind;
        if let Some(d) = self.submodel.dim {
            model.dim = d;
        }
        if let Some(g) = self.submodel.gamma {
            model.gamma = g;
        }
        let mut train = self.train.clone();
        if let Some(s) = self.submodel.steps {
            train.steps = s;
        }
        (model, train)
    }
}

/// Creates `<root>/<prefix>-<YYYYmmdd-HHMMSS>[-n]`, never reusing a directory.
pub fn create_run_dir(root: &Path, prefix: &str) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S").to_string();
    for n in 0.. {
        let name = if n == 0 {
            format!("{prefix}-{stamp}")
        } else {
            format!("{prefix}-{stamp}-{n}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}
