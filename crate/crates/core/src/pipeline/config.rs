use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::augment::EditSpec;
use crate::directions::SolverConfig;
use crate::hash::sha256_hex;
use crate::quality::DEFAULT_TAU;
use crate::regression::RegressorConfig;
use crate::world::{WorldConfig, WorldParams};

pub const DEFAULT_SEED: u64 = 7;

/// Sizes of the generated splits and of the labelled pool the directions
/// are fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_train: usize,
    pub n_test: usize,
    /// Training faces lack this attribute, test faces have it.
    pub attribute: String,
    pub pool_size: usize,
    /// Probability that a pool label is flipped.
    pub label_flip_rate: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_train: 2000,
            n_test: 400,
            attribute: "beard".into(),
            pool_size: 200,
            label_flip_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSpec {
    pub c: f64,
    pub iterations: usize,
    pub tolerance: f64,
}

impl Default for SvmSpec {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            c: s.c,
            iterations: s.max_iterations,
            tolerance: s.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub tau: f64,
    /// Accepted and rejected pairs shown in the grid.
    pub grid_per_group: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            grid_per_group: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSpec {
    pub timeout_secs: f64,
}

impl Default for BackendSpec {
    fn default() -> Self {
        Self {
            timeout_secs: crate::adapters::DEFAULT_TIMEOUT.as_secs_f64(),
        }
    }
}

/// Everything a run needs. Every section is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Drives every stage; copied into the world, edit and regressor seeds.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub world: WorldParams,
    pub svm: SvmSpec,
    pub edit: EditSpec,
    pub filter: FilterSpec,
    pub regressor: RegressorConfig,
    pub backend: BackendSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: DEFAULT_SEED,
            output_dir: PathBuf::from("out"),
            dataset: DatasetSpec::default(),
            world: WorldParams::default(),
            svm: SvmSpec::default(),
            edit: EditSpec::default(),
            filter: FilterSpec::default(),
            regressor: RegressorConfig::default(),
            backend: BackendSpec::default(),
        };
        cfg.propagate();
        cfg
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub tau: Option<f64>,
    pub attribute: Option<String>,
    pub edits_per_sample: Option<usize>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `o`, propagates the seed and attribute, and validates.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, PipelineError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(t) = o.tau {
            self.filter.tau = t;
        }
        if let Some(a) = &o.attribute {
            self.dataset.attribute = a.clone();
        }
        if let Some(k) = o.edits_per_sample {
            self.edit.edits_per_sample = k;
        }
        self.propagate();
        self.validate()?;
        Ok(self)
    }

    fn propagate(&mut self) {
        self.world.seed = self.seed;
        self.edit.seed = self.seed;
        self.regressor.seed = self.seed;
        self.edit.direction = self.dataset.attribute.clone();
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let world = self.world_config()?;
        if world.attribute_index(&self.dataset.attribute).is_none() {
            return bad(format!(
                "unknown attribute {:?}; the world has {:?}",
                self.dataset.attribute,
                world.attribute_names()
            ));
        }
        let d = &self.dataset;
        if d.n_train == 0 || d.n_test == 0 {
            return bad("n_train and n_test must be positive".into());
        }
        if d.pool_size < 4 {
            return bad(format!("pool_size must be at least 4, got {}", d.pool_size));
        }
        if !(0.0..0.5).contains(&d.label_flip_rate) {
            return bad(format!(
                "label_flip_rate must be in [0, 0.5), got {}",
                d.label_flip_rate
            ));
        }
        if !(self.svm.c > 0.0 && self.svm.c.is_finite()) || !(self.svm.tolerance > 0.0) {
            return bad("svm c and tolerance must be positive".into());
        }
        if self.svm.iterations == 0 {
            return bad("svm iterations must be positive".into());
        }
        self.edit
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.filter.tau >= 0.0) {
            return bad(format!("tau must be >= 0, got {}", self.filter.tau));
        }
        self.regressor
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let r = &self.regressor;
        if r.input_height != world.image_size() || r.input_width != world.image_size() {
            return bad(format!(
                "regressor input {}x{} does not match image size {}",
                r.input_height,
                r.input_width,
                world.image_size()
            ));
        }
        if r.outputs() != world.d_expr() {
            return bad(format!(
                "regressor has {} outputs, the world has {} blendshapes",
                r.outputs(),
                world.d_expr()
            ));
        }
        if !(self.backend.timeout_secs > 0.0 && self.backend.timeout_secs.is_finite()) {
            return bad("backend timeout must be positive".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir is empty".into());
        }
        Ok(())
    }

    pub fn world_config(&self) -> Result<WorldConfig, PipelineError> {
        WorldConfig::new(self.world.clone()).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            c: self.svm.c,
            tolerance: self.svm.tolerance,
            max_iterations: self.svm.iterations,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }
}
