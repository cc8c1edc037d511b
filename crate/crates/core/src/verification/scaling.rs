//! Convergence-rate experiments on the linear preference model.

use serde::{Deserialize, Serialize};

use super::{Comparison, VerificationResult};
use crate::error::Result;
use crate::preference::EstimatorKind;
use crate::trainer::{fit_rate, fit_residuals, LinearExperiment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    pub sizes: Vec<usize>,
    pub replicates: u64,
    /// Largest admissible log-log slope.
    pub max_slope: f64,
    pub seed: u64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            sizes: vec![250, 500, 1000, 2000, 4000],
            replicates: 20,
            max_slope: -0.7,
            seed: 0,
        }
    }
}

/// Log-log slope of the debiased estimator's squared parameter error
/// against sample size, with a perfect annotator.
pub fn check_rate(cfg: &RateConfig) -> Result<VerificationResult> {
    let exp = LinearExperiment {
        seed: cfg.seed,
        ..LinearExperiment::default()
    };
    let errors = exp.error_curve(EstimatorKind::DeDpo, &cfg.sizes, 0.0, cfg.replicates)?;
    let ns: Vec<f64> = cfg.sizes.iter().map(|&n| n as f64).collect();
    let slope = fit_rate(&ns, &errors)?;
    let curve = cfg
        .sizes
        .iter()
        .zip(&errors)
        .map(|(n, e)| format!("{n}:{e:.3e}"))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(VerificationResult::judged(
        "rate",
        slope,
        cfg.max_slope,
        Comparison::AtMost,
        cfg.sizes.len() * cfg.replicates as usize,
        format!("mean squared error by n: {curve}"),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    pub n: usize,
    pub errors: Vec<f64>,
    pub replicates: u64,
    pub seed: u64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            errors: vec![0.0, 0.05, 0.1, 0.2],
            replicates: 20,
            seed: 0,
        }
    }
}

/// How parameter error grows with injected annotator error at fixed `n`:
/// the debiased estimator's curve is better fit by a quartic in the error
/// than by a line, and outcome regression's by a line. The statistic is the
/// debiased quartic-to-linear residual ratio (below 1 when quartic fits
/// better).
pub fn check_quartic(cfg: &SensitivityConfig) -> Result<VerificationResult> {
    let exp = LinearExperiment {
        seed: cfg.seed,
        ..LinearExperiment::default()
    };
    let target = exp.target_parameter(cfg.n)?;
    let de = exp.sensitivity(EstimatorKind::DeDpo, cfg.n, &cfg.errors, cfg.replicates, &target)?;
    let or = exp.sensitivity(EstimatorKind::OutcomeRegression, cfg.n, &cfg.errors, cfg.replicates, &target)?;
    let (de_lin, de_quart) = fit_residuals(&cfg.errors, &de)?;
    let (or_lin, or_quart) = fit_residuals(&cfg.errors, &or)?;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ");
    Ok(VerificationResult::judged(
        "quartic",
        de_quart / de_lin,
        1.0,
        Comparison::AtMost,
        2 * cfg.errors.len() * cfg.replicates as usize,
        format!(
            "DeDPO errors [{}] residual linear {de_lin:.3e} quartic {de_quart:.3e}; OR errors [{}] residual linear {or_lin:.3e} quartic {or_quart:.3e}",
            fmt(&de),
            fmt(&or)
        ),
    )
    .require(de_quart < de_lin, "DeDPO curve is not better fit by a quartic")
    .require(or_lin < or_quart, "OR curve is not better fit by a line"))
}
