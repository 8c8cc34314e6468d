//! Experiment configuration: one file drives every pipeline stage.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EmsError, Result};
use crate::model::StationModel;
use crate::mpc::MpcConfig;
use crate::scenarios::{GeneratorProfile, DEFAULT_EPS_LOG};
use crate::sdp::SdpConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// 500 optimization / 1000 assessment scenarios.
    Desk,
    /// 5000 / 10000.
    Paper,
}

impl Scale {
    pub fn counts(self) -> (usize, usize) {
        match self {
            Scale::Desk => (500, 1000),
            Scale::Paper => (5000, 10000),
        }
    }
}

impl FromStr for Scale {
    type Err = EmsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(EmsError::InvalidArgument(format!("unknown scale `{other}` (desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub optimization_count: usize,
    pub assessment_count: usize,
    pub optimization_seed: u64,
    pub assessment_seed: u64,
    /// Offset inside the log of the braking noise model (kW).
    pub eps_log: f64,
    /// Mean-preserving correction of the log-normal back-transform.
    pub bias_correction: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let (optimization_count, assessment_count) = Scale::Desk.counts();
        Self {
            optimization_count,
            assessment_count,
            optimization_seed: 20_160_101,
            assessment_seed: 20_160_102,
            eps_log: DEFAULT_EPS_LOG,
            bias_correction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub target_mean_pm10: f64,
    pub target_max_pm10: f64,
    /// Upper end of the `β` search.
    pub beta_max: f64,
    /// Increasing `λ` values tried by the scan.
    pub lambdas: Vec<f64>,
    /// Optimization scenarios simulated per scanned `λ`.
    pub scan_scenarios: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            target_mean_pm10: crate::calibrate::TARGET_MEAN_PM10,
            target_max_pm10: crate::calibrate::TARGET_MAX_PM10,
            beta_max: 1.0,
            lambdas: vec![1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1],
            scan_scenarios: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssessmentConfig {
    pub histogram_bins: usize,
}

impl Default for AssessmentConfig {
    fn default() -> Self {
        Self { histogram_bins: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: StationModel,
    pub generator: GeneratorProfile,
    pub scenarios: ScenarioConfig,
    pub sdp: SdpConfig,
    pub mpc: MpcConfig,
    pub calibration: CalibrationConfig,
    pub assessment: AssessmentConfig,
    /// Not part of the config hash.
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// The bundled desk-scale experiment.
    pub fn desk() -> Self {
        Self {
            model: StationModel::default(),
            generator: GeneratorProfile::default(),
            scenarios: ScenarioConfig::default(),
            sdp: SdpConfig::default(),
            // one solve per 20 minutes keeps 1000 closed-loop days in
            // desk-scale time; see the README
            mpc: MpcConfig {
                reoptimization_step: 10,
                horizon: 60,
                ..MpcConfig::default()
            },
            calibration: CalibrationConfig::default(),
            assessment: AssessmentConfig::default(),
            output_dir: PathBuf::from("runs/desk"),
        }
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        let (o, a) = scale.counts();
        self.scenarios.optimization_count = o;
        self.scenarios.assessment_count = a;
        self
    }

    /// Optimization seed `seed`, assessment seed `seed + 1`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenarios.optimization_seed = seed;
        self.scenarios.assessment_seed = seed.wrapping_add(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.generator.validate(self.model.time.day_length)?;
        self.sdp.validate()?;
        self.mpc.validate(self.model.horizon())?;
        let s = &self.scenarios;
        if s.optimization_count == 0 || s.assessment_count == 0 {
            return Err(EmsError::InvalidConfig("scenario counts must be >= 1".into()));
        }
        if s.optimization_seed == s.assessment_seed {
            return Err(EmsError::InvalidConfig("optimization and assessment seeds must differ".into()));
        }
        if !(s.eps_log > 0.0) {
            return Err(EmsError::InvalidConfig("eps_log must be > 0".into()));
        }
        if self.sdp.k_offline > s.optimization_count {
            return Err(EmsError::InvalidConfig("k_offline exceeds the optimization scenario count".into()));
        }
        let c = &self.calibration;
        if c.lambdas.is_empty() || c.lambdas.windows(2).any(|w| !(w[0] < w[1])) || c.lambdas[0] < 0.0 {
            return Err(EmsError::InvalidConfig("calibration lambdas must be nonempty, nonnegative and increasing".into()));
        }
        if c.scan_scenarios == 0 || !(c.beta_max > 0.0) || !(c.target_mean_pm10 > 0.0 && c.target_max_pm10 > c.target_mean_pm10) {
            return Err(EmsError::InvalidConfig("calibration targets, beta_max and scan size must be positive".into()));
        }
        if self.assessment.histogram_bins == 0 {
            return Err(EmsError::InvalidConfig("histogram_bins must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (sorted keys), output directory
    /// excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let value = serde_json::to_value(&c).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    /// Reads TOML (`.toml`) or JSON (anything else).
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| EmsError::Artifact {
            path: path.to_path_buf(),
            reason: format!("cannot read config: {e}"),
        })?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| EmsError::InvalidConfig(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| EmsError::InvalidConfig(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| EmsError::InvalidConfig(e.to_string()))
    }
}
