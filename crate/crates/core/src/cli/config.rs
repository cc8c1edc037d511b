//! Experiment configuration file.
//!
//! A TOML document with one section per component. Unknown keys are
//! rejected, and `format_version` must be one this build understands.
//!
//! ```toml
//! format_version = 1
//! seed = 0
//!
//! [dataset]
//! n_pairs = 5000
//! label_fraction = 0.25
//!
//! [annotator]
//! kind = "biased"
//! accuracy = 0.8
//! sharpness = 0.1
//!
//! [train]
//! estimator = "DeDPO"
//! steps = 2000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::annotators::AnnotatorKind;
use crate::data::WorldSpec;
use crate::diffusion::{DenoiserShape, ScheduleFamily};
use crate::preference::EstimatorKind;
use crate::trainer::{PretrainConfig, TrainConfig};
use crate::verification::{RateConfig, RobustnessConfig, SensitivityConfig, UnbiasednessConfig};

pub const SUPPORTED_FORMAT_VERSIONS: &[u32] = &[1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    /// Root seed. Dataset, annotator, reference and training streams are
    /// separated internally by purpose; verification and sweep seeds are
    /// offsets from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default = "AnnotatorKind::vlm_like")]
    pub annotator: AnnotatorKind,
    /// `id,g_hat` table for the fixed annotator.
    #[serde(default)]
    pub annotator_table: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

/// Four Gaussian modes on the corners of a square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub radius: f64,
    pub mode_std: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            radius: 2.0,
            mode_std: 0.4,
        }
    }
}

impl WorldConfig {
    pub fn build(&self) -> WorldSpec {
        WorldSpec::square(self.radius, self.mode_std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub schedule_steps: usize,
    pub schedule: ScheduleFamily,
    pub hidden: usize,
    pub embed_dim: usize,
    pub pretrain: PretrainConfig,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        let shape = DenoiserShape::default();
        Self {
            schedule_steps: 50,
            schedule: ScheduleFamily::Cosine,
            hidden: shape.hidden,
            embed_dim: shape.embed_dim,
            pretrain: PretrainConfig::default(),
        }
    }
}

impl DiffusionConfig {
    pub fn shape(&self, world: &WorldSpec) -> DenoiserShape {
        DenoiserShape {
            dim: world.dim(),
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            num_conditions: world.num_conditions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_pairs: usize,
    pub label_fraction: f64,
    /// Dataset file to train on. When absent, training generates the dataset
    /// from this section and the root seed.
    pub path: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_pairs: 5000,
            label_fraction: 0.25,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerificationConfig {
    pub identity_instances: usize,
    pub unbiasedness: UnbiasednessConfig,
    pub convexity_bounds: Vec<f64>,
    pub convexity_resolution: usize,
    pub gradient_draws: usize,
    pub gate_thresholds: Vec<f64>,
    /// Bound the logits of a briefly trained policy must respect.
    pub logit_bound: f64,
    pub logit_probe_steps: usize,
    pub rate: RateConfig,
    pub sensitivity: SensitivityConfig,
    pub robustness: RobustnessConfig,
    /// Annotator accuracy at which the robustness ordering is tested.
    pub robustness_accuracy: f64,
    pub robustness_alpha: f64,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            identity_instances: 1000,
            unbiasedness: UnbiasednessConfig::default(),
            convexity_bounds: vec![4.0],
            convexity_resolution: 2001,
            gradient_draws: 5,
            gate_thresholds: vec![0.51, 0.75, 0.95, 1.0],
            logit_bound: 50.0,
            logit_probe_steps: 200,
            rate: RateConfig::default(),
            sensitivity: SensitivityConfig::default(),
            robustness: RobustnessConfig {
                unlabeled_multiples: vec![3, 8, 30],
                accuracies: vec![0.8],
                ..RobustnessConfig::default()
            },
            robustness_accuracy: 0.8,
            robustness_alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub matrix: RobustnessConfig,
    /// Linear-model error curves fitted alongside the matrix.
    pub rate: RateConfig,
    pub rate_estimators: Vec<EstimatorKind>,
    /// Injected annotator error for the rate curves.
    pub rate_error: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            matrix: RobustnessConfig::default(),
            rate: RateConfig::default(),
            rate_estimators: vec![EstimatorKind::FullLabelDpo, EstimatorKind::DeDpo, EstimatorKind::OutcomeRegression],
            rate_error: 0.1,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if !SUPPORTED_FORMAT_VERSIONS.contains(&cfg.format_version) {
            return Err(CliError::Config(format!(
                "format_version {} is not supported (supported: {SUPPORTED_FORMAT_VERSIONS:?})",
                cfg.format_version
            )));
        }
        cfg.train.validate().map_err(|e| CliError::Config(format!("[train]: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// A version-1 configuration with every default.
    pub fn with_defaults() -> Self {
        Self::parse("format_version = 1").expect("defaults are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::parse("format_version = 1").unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.annotator, AnnotatorKind::vlm_like());
        assert_eq!(cfg.dataset.n_pairs, 5000);
    }

    #[test]
    fn sections_parse() {
        let cfg = ExperimentConfig::parse(
            r#"
format_version = 1
seed = 7

[dataset]
n_pairs = 100
label_fraction = 0.5

[annotator]
kind = "flip"
p = 0.2

[train]
estimator = "OR"
steps = 3

[verification.rate]
replicates = 2

[sweep.matrix]
seeds = [0, 1]
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.annotator, AnnotatorKind::Flip { p: 0.2 });
        assert_eq!(cfg.train.estimator, EstimatorKind::OutcomeRegression);
        assert_eq!(cfg.verification.rate.replicates, 2);
        assert_eq!(cfg.sweep.matrix.seeds, vec![0, 1]);
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        let e = ExperimentConfig::parse("format_version = 1\n[train]\nstepz = 3\n").unwrap_err();
        assert!(e.to_string().contains("stepz"), "{e}");
        assert!(ExperimentConfig::parse("format_version = 1\ncolour = 1\n").is_err());
        assert!(ExperimentConfig::parse("format_version = 9\n").is_err());
        assert!(ExperimentConfig::parse("seed = 1\n").is_err());
        assert!(ExperimentConfig::parse("format_version = 1\n[train]\nsteps = 0\n").is_err());
    }

    #[test]
    fn shipped_quick_config_parses() {
        let cfg = ExperimentConfig::parse(include_str!("../../../../configs/quick.toml")).unwrap();
        assert_eq!(cfg.dataset.n_pairs, 2000);
        assert_eq!(cfg.sweep.matrix.accuracies, vec![0.5, 0.8]);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::with_defaults();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }
}
