//! Seeded training sweeps over estimators, annotator accuracies and
//! unlabeled-set sizes on the diffusion toy, and the ordering checks run on
//! their win rates.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{Comparison, VerificationResult};
use crate::annotators::{Annotator, DEFAULT_SHARPNESS};
use crate::data::{generate, WorldSpec};
use crate::diffusion::{make_schedule, DenoiserShape, ScheduleFamily};
use crate::error::{invalid, Result};
use crate::preference::EstimatorKind;
use crate::trainer::{cached_reference, train, PretrainConfig, RunReport, TrainConfig, TrainContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    pub seeds: Vec<u64>,
    pub n_labeled: usize,
    /// Unlabeled-set sizes as multiples of `n_labeled`.
    pub unlabeled_multiples: Vec<usize>,
    pub accuracies: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    /// Logistic slope of the biased annotators; `None` gives hard labels.
    pub sharpness: Option<f64>,
    pub schedule_steps: usize,
    pub reference_seed: u64,
    pub pretrain: PretrainConfig,
    /// Template for every run; `estimator` and `seed` are overwritten.
    pub train: TrainConfig,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            seeds: (0..15).collect(),
            n_labeled: 1250,
            unlabeled_multiples: vec![3, 8, 30, 80],
            accuracies: vec![0.5, 0.8, 1.0],
            estimators: vec![EstimatorKind::FullLabelDpo, EstimatorKind::DeDpo, EstimatorKind::OutcomeRegression],
            sharpness: Some(DEFAULT_SHARPNESS),
            schedule_steps: 50,
            reference_seed: 0,
            pretrain: PretrainConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Win rates of one estimator at one setting across all seeds. Full-label
/// cells have no annotator and so no accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub estimator: EstimatorKind,
    pub accuracy: Option<f64>,
    pub unlabeled_multiple: usize,
    pub seeds: Vec<u64>,
    pub win_rates: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub reports: Vec<RunReport>,
}

/// One training run of a sweep: its grid coordinates and either its report
/// or the error that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub estimator: EstimatorKind,
    pub accuracy: Option<f64>,
    pub unlabeled_multiple: usize,
    pub seed: u64,
    pub outcome: std::result::Result<RunReport, String>,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    estimator: EstimatorKind,
    accuracy: Option<f64>,
    multiple: usize,
    seed: u64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Grid cells in output order: by unlabeled multiple, then estimator, then
/// accuracy. Estimators without an annotator get a single cell.
fn grid(cfg: &RobustnessConfig) -> Vec<(EstimatorKind, Option<f64>, usize)> {
    let mut cells = Vec::new();
    for &multiple in &cfg.unlabeled_multiples {
        for &estimator in &cfg.estimators {
            if estimator.uses_annotator() {
                cells.extend(cfg.accuracies.iter().map(|&a| (estimator, Some(a), multiple)));
            } else {
                cells.push((estimator, None, multiple));
            }
        }
    }
    cells
}

/// Train every run of the grid, recording failures instead of stopping.
/// Runs execute on the current rayon pool; results come back in grid order
/// (cell, then seed), so output does not depend on the number of threads.
pub fn run_sweep(cfg: &RobustnessConfig) -> Result<Vec<SweepRun>> {
    if cfg.seeds.is_empty() || cfg.n_labeled < 4 || cfg.estimators.is_empty() {
        return Err(invalid("robustness sweep needs seeds, estimators and at least 4 labeled pairs"));
    }
    let world = Arc::new(WorldSpec::default());
    let schedule = make_schedule(cfg.schedule_steps, ScheduleFamily::Cosine)?;
    let reference = cached_reference(&world, &schedule, DenoiserShape::default(), &cfg.pretrain, cfg.reference_seed)?;
    let ctx = TrainContext {
        world: Arc::clone(&world),
        schedule,
        reference,
    };
    let jobs: Vec<Job> = grid(cfg)
        .into_iter()
        .flat_map(|(estimator, accuracy, multiple)| {
            cfg.seeds.iter().map(move |&seed| Job {
                estimator,
                accuracy,
                multiple,
                seed,
            })
        })
        .collect();
    Ok(jobs
        .par_iter()
        .map(|job| SweepRun {
            estimator: job.estimator,
            accuracy: job.accuracy,
            unlabeled_multiple: job.multiple,
            seed: job.seed,
            outcome: run_job(&ctx, cfg, job).map_err(|e| e.to_string()),
        })
        .collect())
}

/// Train every cell of the grid and summarize win rates per cell. Any failed
/// run fails the whole matrix.
pub fn run_robustness_matrix(cfg: &RobustnessConfig) -> Result<Vec<MatrixCell>> {
    let runs = run_sweep(cfg)?;
    if let Some(bad) = runs.iter().find(|r| r.outcome.is_err()) {
        return Err(invalid(format!(
            "{} run (accuracy {:?}, multiple {}, seed {}) failed: {}",
            bad.estimator,
            bad.accuracy,
            bad.unlabeled_multiple,
            bad.seed,
            bad.outcome.as_ref().err().map_or("", |e| e.as_str())
        )));
    }
    let per = cfg.seeds.len();
    Ok(grid(cfg)
        .into_iter()
        .zip(runs.chunks(per))
        .map(|((estimator, accuracy, unlabeled_multiple), runs)| {
            let reports: Vec<RunReport> = runs.iter().filter_map(|r| r.outcome.clone().ok()).collect();
            let win_rates: Vec<f64> = reports.iter().map(|r| r.win_rate).collect();
            let (mean, sd) = mean_sd(&win_rates);
            MatrixCell {
                estimator,
                accuracy,
                unlabeled_multiple,
                seeds: cfg.seeds.clone(),
                win_rates,
                mean,
                sd,
                reports,
            }
        })
        .collect())
}

fn run_job(ctx: &TrainContext, cfg: &RobustnessConfig, job: &Job) -> Result<RunReport> {
    let n = cfg.n_labeled * (1 + job.multiple);
    let fraction = if job.estimator == EstimatorKind::FullLabelDpo {
        1.0
    } else {
        cfg.n_labeled as f64 / n as f64
    };
    // Both splits of one seed hold the same pairs; only the labels differ.
    let data = generate(&ctx.world, n, fraction, job.seed)?;
    let annotator = match job.accuracy {
        Some(a) => Some(Annotator::biased(Arc::clone(&ctx.world), a, cfg.sharpness, job.seed)?),
        None => None,
    };
    let config = TrainConfig {
        estimator: job.estimator,
        seed: job.seed,
        ..cfg.train.clone()
    };
    let out = train(ctx, (*ctx.reference).clone(), &data, annotator.as_ref(), &config)?;
    Ok(out.report)
}

/// One-sided p-value for `mean(a - b) > 0` from a paired t-test.
pub fn paired_one_sided_p(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("paired test needs two equal-length samples of size at least 2"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_sd(&d);
    if sd == 0.0 {
        return Ok(if mean > 0.0 { 0.0 } else { 1.0 });
    }
    let t = mean / (sd / (d.len() as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (d.len() - 1) as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(1.0 - dist.cdf(t))
}

fn find<'a>(cells: &'a [MatrixCell], estimator: EstimatorKind, accuracy: Option<f64>, multiple: usize) -> Result<&'a MatrixCell> {
    cells
        .iter()
        .find(|c| {
            c.estimator == estimator
                && c.unlabeled_multiple == multiple
                && match (c.accuracy, accuracy) {
                    (Some(x), Some(y)) => (x - y).abs() < 1e-12,
                    (None, _) => true,
                    _ => false,
                }
        })
        .ok_or_else(|| invalid(format!("sweep has no {estimator} cell at accuracy {accuracy:?}, multiple {multiple}")))
}

/// Debiased training beats outcome regression (paired one-sided test at
/// `alpha`) and stays within one pooled standard deviation of full-label
/// training. The statistic is `|full - DeDPO| / pooled sd`.
pub fn check_robustness(cells: &[MatrixCell], accuracy: f64, multiple: usize, alpha: f64) -> Result<VerificationResult> {
    let full = find(cells, EstimatorKind::FullLabelDpo, None, multiple)?;
    let de = find(cells, EstimatorKind::DeDpo, Some(accuracy), multiple)?;
    let or = find(cells, EstimatorKind::OutcomeRegression, Some(accuracy), multiple)?;
    let p = paired_one_sided_p(&de.win_rates, &or.win_rates)?;
    let pooled = ((full.sd.powi(2) + de.sd.powi(2)) / 2.0).sqrt();
    let gap = (full.mean - de.mean).abs() / pooled;
    Ok(VerificationResult::judged(
        "robustness",
        gap,
        1.0,
        Comparison::AtMost,
        de.win_rates.len(),
        format!(
            "accuracy {accuracy}: full {:.4} +- {:.4}, DeDPO {:.4} +- {:.4}, OR {:.4} +- {:.4}; DeDPO > OR paired p = {p:.3e}",
            full.mean, full.sd, de.mean, de.sd, or.mean, or.sd
        ),
    )
    .require(de.mean >= or.mean && p < alpha, "DeDPO did not beat OR at the required significance"))
}

/// Across unlabeled-set sizes, the spread of the debiased estimator's mean
/// win rate is no larger than outcome regression's. The statistic is the
/// difference of ranges.
pub fn check_unlabeled_scaling(cells: &[MatrixCell], accuracy: f64, multiples: &[usize]) -> Result<VerificationResult> {
    if multiples.len() < 2 {
        return Err(invalid("need at least two unlabeled-set sizes"));
    }
    let range = |kind| -> Result<(f64, Vec<f64>)> {
        let means = multiples
            .iter()
            .map(|&m| find(cells, kind, Some(accuracy), m).map(|c| c.mean))
            .collect::<Result<Vec<_>>>()?;
        let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok((hi - lo, means))
    };
    let (de_range, de_means) = range(EstimatorKind::DeDpo)?;
    let (or_range, or_means) = range(EstimatorKind::OutcomeRegression)?;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    Ok(VerificationResult::judged(
        "unlabeled_scaling",
        de_range - or_range,
        0.0,
        Comparison::AtMost,
        multiples.len(),
        format!(
            "multiples {multiples:?}: DeDPO means [{}] range {de_range:.4}; OR means [{}] range {or_range:.4}",
            fmt(&de_means),
            fmt(&or_means)
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_test_matches_a_hand_computation() {
        // d = [0.1, 0.2, 0.3]: mean 0.2, sd 0.1, t = 0.2 / (0.1 / sqrt 3) = 3.4641.
        // One-sided upper tail of Student t with 2 dof: 0.5 (1 - t / sqrt(t^2 + 2)).
        let p = paired_one_sided_p(&[1.1, 1.2, 1.3], &[1.0, 1.0, 1.0]).unwrap();
        let t: f64 = 12f64.sqrt();
        let expected = 0.5 * (1.0 - t / (t * t + 2.0).sqrt());
        assert!((p - expected).abs() < 1e-10, "{p} vs {expected}");
        assert_eq!(paired_one_sided_p(&[1.0, 2.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(paired_one_sided_p(&[1.0], &[0.0]).is_err());
    }

    fn cell(estimator: EstimatorKind, accuracy: Option<f64>, multiple: usize, win_rates: Vec<f64>) -> MatrixCell {
        let (mean, sd) = mean_sd(&win_rates);
        MatrixCell {
            estimator,
            accuracy,
            unlabeled_multiple: multiple,
            seeds: (0..win_rates.len() as u64).collect(),
            win_rates,
            mean,
            sd,
            reports: Vec::new(),
        }
    }

    #[test]
    fn robustness_ordering_on_synthetic_cells() {
        let cells = vec![
            cell(EstimatorKind::FullLabelDpo, None, 3, vec![0.90, 0.92, 0.91, 0.93]),
            cell(EstimatorKind::DeDpo, Some(0.8), 3, vec![0.89, 0.92, 0.90, 0.92]),
            cell(EstimatorKind::OutcomeRegression, Some(0.8), 3, vec![0.80, 0.81, 0.79, 0.82]),
        ];
        let r = check_robustness(&cells, 0.8, 3, 0.05).unwrap();
        assert!(r.passed, "{r:?}");
        let swapped = vec![cells[0].clone(), cell(EstimatorKind::DeDpo, Some(0.8), 3, cells[2].win_rates.clone()), cell(EstimatorKind::OutcomeRegression, Some(0.8), 3, cells[1].win_rates.clone())];
        assert!(!check_robustness(&swapped, 0.8, 3, 0.05).unwrap().passed);
        assert!(check_robustness(&cells, 0.5, 3, 0.05).is_err());
    }

    #[test]
    fn scaling_compares_ranges() {
        let cells = vec![
            cell(EstimatorKind::DeDpo, Some(0.8), 3, vec![0.90, 0.90]),
            cell(EstimatorKind::DeDpo, Some(0.8), 8, vec![0.88, 0.88]),
            cell(EstimatorKind::OutcomeRegression, Some(0.8), 3, vec![0.80, 0.80]),
            cell(EstimatorKind::OutcomeRegression, Some(0.8), 8, vec![0.75, 0.75]),
        ];
        let r = check_unlabeled_scaling(&cells, 0.8, &[3, 8]).unwrap();
        assert!(r.passed);
        assert!((r.statistic - (0.02 - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn tiny_sweep_is_deterministic_and_ordered() {
        let cfg = RobustnessConfig {
            seeds: vec![0, 1],
            n_labeled: 20,
            unlabeled_multiples: vec![3],
            accuracies: vec![0.8],
            schedule_steps: 10,
            pretrain: PretrainConfig { steps: 20, batch_size: 16, ..Default::default() },
            train: TrainConfig { steps: 5, batch_size: 8, eval_prompts: 4, ..Default::default() },
            ..Default::default()
        };
        let a = run_robustness_matrix(&cfg).unwrap();
        let b = run_robustness_matrix(&cfg).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[0].estimator, EstimatorKind::FullLabelDpo);
        assert_eq!(a[0].accuracy, None);
        assert_eq!(a[1].accuracy, Some(0.8));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.win_rates, y.win_rates);
            let traces = |c: &MatrixCell| c.reports.iter().map(|r| r.loss_trace.clone()).collect::<Vec<_>>();
            assert_eq!(traces(x), traces(y));
        }
        assert_eq!(a[1].reports[0].n_l, 20);
        assert_eq!(a[1].reports[0].n_u, 60);
        assert_eq!(a[0].reports[0].n_l, 80);
    }
}
