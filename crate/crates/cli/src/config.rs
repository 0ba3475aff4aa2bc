//! TOML experiment configuration. Every unstated hyperparameter has a field
//! here; the fully resolved value is embedded in each output file.

use std::path::{Path, PathBuf};

use bosonkernel::encoder::TrainConfig;
use bosonkernel::fock::hilbert_dim;
use bosonkernel::mesh::tbu_count;
use bosonkernel::svm::{ReadoutMode, SvmParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Ionosphere,
    Spambase,
    Mnist,
    FashionMnist,
}

impl DatasetKind {
    pub fn is_image(self) -> bool {
        matches!(self, Self::Mnist | Self::FashionMnist)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ionosphere => "ionosphere",
            Self::Spambase => "spambase",
            Self::Mnist => "mnist",
            Self::FashionMnist => "fashion-mnist",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: DatasetKind,
    /// CSV file for the UCI datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// IDX image files, concatenated in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<PathBuf>,
    /// Stratified subsample size taken before splitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    /// Defaults to 0.2 for the UCI sets and 1/7 for the image sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
}

impl DatasetConfig {
    pub fn test_fraction(&self) -> f64 {
        self.test_fraction.unwrap_or(if self.name.is_image() { 1.0 / 7.0 } else { 0.2 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitConfig {
    pub modes: usize,
    /// Defaults to `modes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    pub photons: usize,
}

impl CircuitConfig {
    pub fn layers(&self) -> usize {
        self.layers.unwrap_or(self.modes)
    }

    pub fn param_count(&self) -> usize {
        2 * tbu_count(self.modes, self.layers())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub fd_step: f64,
    pub class_balanced: bool,
    /// Record test accuracy after every epoch (one extra kernel fill per epoch).
    pub trace_test_accuracy: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            fd_step: t.fd_step,
            class_balanced: t.class_balanced,
            trace_test_accuracy: false,
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            fd_step: self.fd_step,
            seed,
            class_balanced: self.class_balanced,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSettings {
    pub c_box: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub readout_mode: ReadoutMode,
}

impl Default for SvmSettings {
    fn default() -> Self {
        let p = SvmParams::default();
        Self { c_box: p.c_box, tol: p.tol, max_iter: p.max_iter, readout_mode: ReadoutMode::default() }
    }
}

impl SvmSettings {
    pub fn params(&self, psd_slack: Option<f64>) -> SvmParams {
        SvmParams { c_box: self.c_box, tol: self.tol, max_iter: self.max_iter, psd_slack }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutSettings {
    pub sizes: Vec<usize>,
    pub draws: usize,
}

impl Default for ReadoutSettings {
    fn default() -> Self {
        Self { sizes: vec![1, 2, 4, 8, 16, 32, 64, 128], draws: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineToggles {
    pub linear: bool,
    pub sigmoid: bool,
    pub neural_network: bool,
}

impl Default for BaselineToggles {
    fn default() -> Self {
        Self { linear: true, sigmoid: true, neural_network: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub histograms: bool,
    pub epsilons: Vec<f64>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self { histograms: true, epsilons: vec![0.1, 0.05, 0.01] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// Photon numbers for `sweep-photons`.
    pub photons: Vec<usize>,
    /// `[modes, layers, photons]` triples for `sweep-dimension`.
    pub grid: Vec<[usize; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub circuit: CircuitConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Measurement shots per kernel entry; 0 uses exact probabilities.
    #[serde(default)]
    pub shots: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub svm: SvmSettings,
    #[serde(default)]
    pub readout: ReadoutSettings,
    #[serde(default)]
    pub baselines: BaselineToggles,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

/// PSD slack used for the sigmoid baseline, whose Gram matrix may be indefinite.
pub const SIGMOID_PSD_SLACK: f64 = 1e-2;
pub const QUANTUM_PSD_SLACK: f64 = 1e-8;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    /// Reads a config file; relative dataset and output paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.dataset.path.as_mut() {
            fix(p);
        }
        self.dataset.images.iter_mut().for_each(fix);
        self.dataset.labels.iter_mut().for_each(fix);
        fix(&mut self.out);
        if let Some(p) = self.cache_dir.as_mut() {
            fix(p);
        }
    }

    /// Checks invariants and returns non-fatal warnings.
    pub fn validate(&self) -> CliResult<Vec<String>> {
        let c = &self.circuit;
        if c.modes < 2 {
            return Err(CliError::config("circuit.modes must be at least 2"));
        }
        if c.layers() < 1 {
            return Err(CliError::config("circuit.layers must be at least 1"));
        }
        if c.photons < 1 || c.photons > c.modes {
            return Err(CliError::config(format!("circuit.photons = {} must be in 1..={}", c.photons, c.modes)));
        }
        hilbert_dim(c.modes, c.photons).map_err(|e| CliError::config(e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(CliError::config("seeds must not be empty"));
        }
        let f = self.dataset.test_fraction();
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::config(format!("dataset.test_fraction = {f} must be in (0, 1)")));
        }
        self.train.train_config(0).validate().map_err(|e| CliError::config(e.to_string()))?;
        if !(self.svm.c_box > 0.0) || !(self.svm.tol > 0.0) {
            return Err(CliError::config("svm.c_box and svm.tol must be positive"));
        }
        if self.readout.draws == 0 {
            return Err(CliError::config("readout.draws must be positive"));
        }
        if let Some(e) = self.analysis.epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(CliError::config(format!("analysis.epsilons entry {e} must be in (0, 1)")));
        }
        match self.dataset.name {
            DatasetKind::Ionosphere | DatasetKind::Spambase => {
                if self.dataset.path.is_none() {
                    return Err(CliError::config("dataset.path is required for CSV datasets"));
                }
            }
            DatasetKind::Mnist | DatasetKind::FashionMnist => {
                if self.dataset.images.is_empty() || self.dataset.images.len() != self.dataset.labels.len() {
                    return Err(CliError::config("dataset.images and dataset.labels must be non-empty and paired"));
                }
            }
        }
        for &[m, l, n] in &self.sweep.grid {
            if m < 2 || l < 1 || n < 1 || n > m {
                return Err(CliError::config(format!("sweep.grid entry [{m}, {l}, {n}] is invalid")));
            }
        }
        if let Some(n) = self.sweep.photons.iter().find(|&&n| n < 1 || n > c.modes) {
            return Err(CliError::config(format!("sweep.photons entry {n} must be in 1..={}", c.modes)));
        }
        let mut warnings = Vec::new();
        let d_raw = match self.dataset.name {
            DatasetKind::Ionosphere => bosonkernel::data::IONOSPHERE_FEATURES,
            DatasetKind::Spambase => bosonkernel::data::SPAMBASE_FEATURES,
            _ => bosonkernel::data::IMAGE_SIDE * bosonkernel::data::IMAGE_SIDE,
        };
        if d_raw < c.param_count() {
            warnings.push(format!(
                "encoder expands {d_raw} features to {} phases; it no longer compresses",
                c.param_count()
            ));
        }
        Ok(warnings)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
