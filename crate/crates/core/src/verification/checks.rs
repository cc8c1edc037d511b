//! Algebraic and Monte Carlo checks of the estimators themselves.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gradcheck::{check_gradient, probe_coordinates};
use super::{Comparison, VerificationResult};
use crate::annotators::{self_training_label, Annotator, Augment};
use crate::data::{generate, WorldSpec};
use crate::diffusion::{make_schedule, DenoiserShape, NoiseSchedule, ScheduleFamily, ToyDenoiser};
use crate::error::{invalid, Result};
use crate::preference::{
    bce_logit, combined_target, draw_for, logit_curvature, loss_dedpo_3term, loss_dedpo_combined, loss_full_dpo,
    loss_labeled_only, loss_or, objective, sigmoid, DeDpoForm, DiffusionDpo, DrawPolicy, EstimatorKind,
    ImportanceWeight, LinearPreference, MarginDraw, Point, PreferenceModel, PreferenceTriplet, PseudoLabel,
};
use crate::rng::{self, purpose};

fn small_schedule() -> NoiseSchedule {
    make_schedule(20, ScheduleFamily::Cosine).expect("valid schedule")
}

/// Policy and reference drawn independently, so margins are far from zero.
fn random_diffusion_model(shape: DenoiserShape, beta: f64, seed: u64) -> DiffusionDpo {
    let reference = ToyDenoiser::new(shape, &mut rng::stream(seed, purpose::INIT, 1));
    let policy = ToyDenoiser::new(shape, &mut rng::stream(seed, purpose::INIT, 2));
    DiffusionDpo::new(policy, Arc::new(reference), small_schedule(), beta)
}

/// Reference plus a Gaussian perturbation of the given scale.
fn perturbed_model(perturbation: f64, beta: f64, seed: u64) -> DiffusionDpo {
    let shape = DenoiserShape::default();
    let reference = Arc::new(ToyDenoiser::new(shape, &mut rng::stream(seed, purpose::INIT, 1)));
    let mut policy = (*reference).clone();
    if perturbation > 0.0 {
        let noise = rng::normal_vec(&mut rng::stream(seed, purpose::INIT, 3), policy.num_params());
        for (p, n) in policy.params_mut().iter_mut().zip(noise) {
            *p += perturbation * n;
        }
    }
    DiffusionDpo::new(policy, reference, small_schedule(), beta)
}

/// A model whose logits were computed once per triplet id. Used to evaluate
/// many estimator variants on the same pool without recomputing margins.
struct FrozenLogits {
    logits: HashMap<u64, f64>,
    none: Vec<f64>,
}

impl FrozenLogits {
    fn capture<M: PreferenceModel>(model: &M, pool: &[PreferenceTriplet], seed: u64) -> Self {
        let logits = pool.iter().map(|t| (t.id, model.logit(t, &draw_for(model, t, seed, 0)))).collect();
        Self { logits, none: Vec::new() }
    }
}

impl PreferenceModel for FrozenLogits {
    type Draw = ();
    type Tape = ();

    fn num_params(&self) -> usize {
        0
    }
    fn params(&self) -> &[f64] {
        &self.none
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.none
    }
    fn draw<R: Rng + ?Sized>(&self, _: &PreferenceTriplet, _: &mut R) {}
    fn logit_taped(&self, t: &PreferenceTriplet, _: &(), _: &mut ()) -> f64 {
        self.logits[&t.id]
    }
    fn backprop(&self, _: &PreferenceTriplet, _: &(), _: &(), _: f64, _: &mut [f64]) {}
}

fn as_points<D: Clone>(v: &[(PreferenceTriplet, D, PseudoLabel)]) -> Vec<Point<'_, D>> {
    v.iter()
        .map(|(t, d, p)| Point {
            triplet: t,
            draw: d.clone(),
            pseudo: *p,
        })
        .collect()
}

fn self_training_points<'a>(
    model: &DiffusionDpo,
    triplets: &'a [PreferenceTriplet],
    tau: f64,
    augment: Augment,
    seed: u64,
) -> Result<Vec<Point<'a, MarginDraw>>> {
    triplets
        .iter()
        .map(|t| {
            let draw = draw_for(model, t, seed, 0);
            let pseudo = self_training_label(model, t, &draw, tau, augment, seed, 0)?;
            Ok(Point { triplet: t, draw, pseudo })
        })
        .collect()
}

enum AnyModel {
    Linear(LinearPreference),
    Diffusion(Box<DiffusionDpo>),
}

struct IdentityInstance {
    labeled: Vec<PreferenceTriplet>,
    unlabeled: Vec<PreferenceTriplet>,
    g_hat: Vec<f64>,
    weight: ImportanceWeight,
    per_point_ratio: Vec<f64>,
}

fn identity_instance(r: &mut impl Rng, n: usize, n_l: usize, ratio: Option<f64>) -> IdentityInstance {
    let hard = r.random_bool(0.3);
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    let mut g_hat = Vec::new();
    for i in 0..n {
        let x0 = vec![r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
        let x1 = vec![r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
        let c = r.random_range(0..4);
        g_hat.push(if hard { f64::from(u8::from(r.random_bool(0.5))) } else { r.random_range(0.0..=1.0) });
        let z = (i < n_l).then(|| u8::from(r.random_bool(0.5)));
        let t = PreferenceTriplet::new(i as u64, c, x0, x1, z).expect("distinct members");
        if z.is_some() {
            labeled.push(t);
        } else {
            unlabeled.push(t);
        }
    }
    let counts = n as f64 / n_l as f64;
    let (weight, per_point_ratio) = match (ratio, r.random_range(0..3)) {
        (Some(q), _) => (ImportanceWeight::Global(q), vec![q; n]),
        (None, 0) => (ImportanceWeight::FromCounts, vec![counts; n]),
        (None, 1) => {
            let q = 10f64.powf(r.random_range(0.0..4.0));
            (ImportanceWeight::Global(q), vec![q; n])
        }
        _ => {
            let per: Vec<f64> = (0..n).map(|_| 10f64.powf(r.random_range(0.0..4.0))).collect();
            let table = per.clone();
            let f = ImportanceWeight::Function(Arc::new(move |t: &PreferenceTriplet| table[t.id as usize]));
            (f, per)
        }
    };
    IdentityInstance {
        labeled,
        unlabeled,
        g_hat,
        weight,
        per_point_ratio,
    }
}

/// Relative difference between the two debiased forms on one instance,
/// measured against the larger of the loss and the mean absolute per-point
/// combined term.
fn identity_gap<M: PreferenceModel>(model: &M, inst: &IdentityInstance, seed: u64) -> Result<f64> {
    let mk = |ts: &[PreferenceTriplet]| -> Vec<(PreferenceTriplet, M::Draw, PseudoLabel)> {
        ts.iter()
            .map(|t| (t.clone(), draw_for(model, t, seed, 0), PseudoLabel::new(inst.g_hat[t.id as usize])))
            .collect()
    };
    let (lab, unl) = (mk(&inst.labeled), mk(&inst.unlabeled));
    let (pl, pu) = (as_points(&lab), as_points(&unl));
    let three = objective(EstimatorKind::DeDpo, DeDpoForm::ThreeTerm, model, &pl, &pu, &inst.weight, None)?;
    let combined = objective(EstimatorKind::DeDpo, DeDpoForm::Combined, model, &pl, &pu, &inst.weight, None)?;
    let n = (pl.len() + pu.len()) as f64;
    let scale: f64 = pl
        .iter()
        .chain(&pu)
        .map(|p| {
            let ratio = inst.per_point_ratio[p.triplet.id as usize];
            let a = model.logit(p.triplet, &p.draw);
            bce_logit(a, combined_target(p.triplet, p.pseudo.value, ratio)).abs()
        })
        .sum::<f64>()
        / n;
    let denom = scale.max(combined.abs());
    Ok(if denom == 0.0 { (three - combined).abs() } else { (three - combined).abs() / denom })
}

fn identity_model(r: &mut impl Rng, i: usize, seed: u64) -> AnyModel {
    let beta = 10f64.powf(r.random_range(-2.0..1.0));
    if i % 2 == 0 {
        let theta = (0..2).map(|_| beta * r.random_range(-3.0..3.0)).collect();
        AnyModel::Linear(LinearPreference { theta })
    } else {
        let shape = DenoiserShape {
            hidden: 16,
            ..DenoiserShape::default()
        };
        AnyModel::Diffusion(Box::new(random_diffusion_model(shape, beta, rng::derive(seed, i as u64))))
    }
}

/// The three-term debiased loss and the single combined-target loss agree
/// on random models, splits, annotators and importance weights, including a
/// stress instance with ratio 1e6.
pub fn check_combined_target_identity(n_instances: usize, seed: u64) -> Result<VerificationResult> {
    if n_instances < 100 {
        return Err(invalid(format!("need at least 100 instances, got {n_instances}")));
    }
    let mut worst: f64 = 0.0;
    for i in 0..n_instances {
        let mut r = rng::stream(seed, purpose::RESAMPLE, i as u64);
        let model = identity_model(&mut r, i, seed);
        let n = r.random_range(2..=40);
        let n_l = r.random_range(1..=n);
        let inst = identity_instance(&mut r, n, n_l, None);
        let gap = match &model {
            AnyModel::Linear(m) => identity_gap(m, &inst, seed)?,
            AnyModel::Diffusion(m) => identity_gap(m.as_ref(), &inst, seed)?,
        };
        worst = worst.max(gap);
    }
    let mut r = rng::stream(seed, purpose::RESAMPLE, u64::MAX);
    let stress_model = random_diffusion_model(DenoiserShape::default(), 1.0, seed);
    let stress = identity_gap(&stress_model, &identity_instance(&mut r, 40, 10, Some(1e6)), seed)?;
    Ok(VerificationResult::judged(
        "combined_target_identity",
        worst,
        1e-10,
        Comparison::AtMost,
        n_instances,
        format!("max relative gap {worst:e}; ratio 1e6 stress gap {stress:e} (limit 1e-8)"),
    )
    .require(stress <= 1e-8, "ratio 1e6 stress instance exceeded 1e-8"))
}

/// Settings for the split-resampling unbiasedness experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnbiasednessConfig {
    pub accuracies: Vec<f64>,
    pub n_resamples: usize,
    pub pool_size: usize,
    pub label_fraction: f64,
    /// Scale of the Gaussian offset of the policy from the reference; 0
    /// evaluates at the reference itself.
    pub perturbation: f64,
    pub beta: f64,
    /// Stop after this many standard errors.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for UnbiasednessConfig {
    fn default() -> Self {
        Self {
            accuracies: vec![0.5, 0.8, 1.0],
            n_resamples: 2000,
            pool_size: 400,
            label_fraction: 0.25,
            perturbation: 0.05,
            beta: 1.0,
            tolerance: 3.0,
            seed: 0,
        }
    }
}

/// Monte Carlo summary at one annotator accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessRow {
    pub accuracy: f64,
    pub full_loss: f64,
    pub dedpo_mean: f64,
    pub dedpo_stderr: f64,
    /// `|mean - full| / stderr`.
    pub dedpo_statistic: f64,
    pub or_mean: f64,
    pub or_stderr: f64,
    pub or_statistic: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Distance in standard errors; an exactly reproduced mean with no spread
/// (for example a perfect annotator under outcome regression) scores 0.
fn standardized(diff: f64, stderr: f64, scale: f64) -> f64 {
    let exact = 1e-12 * scale.max(1.0);
    if stderr <= exact {
        if diff.abs() <= exact {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff.abs() / stderr
    }
}

/// Resample labeled subsets of one fully labeled pool and compare the
/// debiased and outcome-regression losses with the full-label loss.
/// Outcome regression is pooled as `(sum of labeled terms + sum of imputed
/// terms) / N` so both estimators target the same quantity.
pub fn unbiasedness_table(cfg: &UnbiasednessConfig) -> Result<Vec<UnbiasednessRow>> {
    if cfg.n_resamples < 500 {
        return Err(invalid(format!("need at least 500 resamples, got {}", cfg.n_resamples)));
    }
    let world = Arc::new(WorldSpec::default());
    let pool = generate(&world, cfg.pool_size, 1.0, cfg.seed)?;
    let model = perturbed_model(cfg.perturbation, cfg.beta, cfg.seed);
    let draw_seed = rng::derive(cfg.seed, purpose::DRAW);
    let frozen = FrozenLogits::capture(&model, &pool.triplets, draw_seed);
    let full = loss_full_dpo(&frozen, &pool.triplets, draw_seed)?;
    let n_l = crate::data::labeled_count(cfg.pool_size, cfg.label_fraction);
    let n = cfg.pool_size as f64;

    cfg.accuracies
        .iter()
        .map(|&accuracy| {
            let ann = Annotator::biased(Arc::clone(&world), accuracy, None, cfg.seed)?;
            let mut dedpo = Vec::with_capacity(cfg.n_resamples);
            let mut or = Vec::with_capacity(cfg.n_resamples);
            for k in 0..cfg.n_resamples {
                let split = pool.resplit(&world, n_l, rng::derive(rng::derive(cfg.seed, purpose::RESAMPLE), k as u64))?;
                let (lab, unl) = split.partition();
                dedpo.push(loss_dedpo_combined(&frozen, &lab, &unl, &ann, draw_seed)?);
                let lab_mean = loss_labeled_only(&frozen, &lab, draw_seed)?;
                let unl_mean = loss_or(&frozen, &lab, &unl, &ann, draw_seed)? - lab_mean;
                or.push((lab.len() as f64 * lab_mean + unl.len() as f64 * unl_mean) / n);
            }
            let (dm, ds) = mean_stderr(&dedpo);
            let (om, os) = mean_stderr(&or);
            Ok(UnbiasednessRow {
                accuracy,
                full_loss: full,
                dedpo_mean: dm,
                dedpo_stderr: ds,
                dedpo_statistic: standardized(dm - full, ds, full),
                or_mean: om,
                or_stderr: os,
                or_statistic: standardized(om - full, os, full),
            })
        })
        .collect()
}

/// Passes when the debiased loss is within `tolerance` standard errors of
/// the full-label loss at every accuracy and outcome regression is outside
/// that band at accuracy 0.5 (when 0.5 is in the grid).
pub fn check_unbiasedness(cfg: &UnbiasednessConfig) -> Result<VerificationResult> {
    let rows = unbiasedness_table(cfg)?;
    let worst = rows.iter().map(|r| r.dedpo_statistic).fold(0.0, f64::max);
    let detail = rows
        .iter()
        .map(|r| {
            format!(
                "acc {:.2}: full {:.6}, DeDPO {:.6} ({:.2} se), OR {:.6} ({:.2} se)",
                r.accuracy, r.full_loss, r.dedpo_mean, r.dedpo_statistic, r.or_mean, r.or_statistic
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    let or_biased = rows
        .iter()
        .filter(|r| (r.accuracy - 0.5).abs() < 1e-12)
        .all(|r| r.or_statistic > cfg.tolerance);
    Ok(
        VerificationResult::judged("unbiasedness", worst, cfg.tolerance, Comparison::AtMost, cfg.n_resamples, detail)
            .require(or_biased, "outcome regression was not detectably biased at accuracy 0.5"),
    )
}

/// Five-point central second difference.
fn second_derivative(f: impl Fn(f64) -> f64, a: f64, h: f64) -> f64 {
    (-f(a + 2.0 * h) + 16.0 * f(a + h) - 30.0 * f(a) + 16.0 * f(a - h) - f(a - 2.0 * h)) / (12.0 * h * h)
}

/// Curvature floor of the logit-space cross-entropy: on `[-M, M]` the
/// numeric second derivative never drops below `sigmoid(M)(1 - sigmoid(M))`
/// for targets in `[0, 2]`. The statistic is the worst excess over the floor.
pub fn check_strong_convexity(bounds: &[f64], resolution: usize) -> Result<VerificationResult> {
    if bounds.is_empty() || bounds.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(invalid("logit bounds must be positive and finite"));
    }
    if resolution < 2 {
        return Err(invalid("need at least 2 grid points"));
    }
    let targets: Vec<f64> = (0..=8).map(|k| k as f64 * 0.25).collect();
    let mut worst = f64::INFINITY;
    let mut target_spread: f64 = 0.0;
    let mut trials = 0;
    for &m in bounds {
        let floor = sigmoid(m) * (1.0 - sigmoid(m));
        for i in 0..resolution {
            let a = -m + 2.0 * m * i as f64 / (resolution - 1) as f64;
            let curv: Vec<f64> = targets
                .iter()
                .map(|&w| second_derivative(|x| bce_logit(x, w), a, 1e-2))
                .collect();
            let (lo, hi) = curv.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &c| (l.min(c), h.max(c)));
            target_spread = target_spread.max(hi - lo);
            worst = worst.min(lo - floor);
            trials += curv.len();
        }
    }
    let at_zero = logit_curvature(0.0);
    Ok(VerificationResult::judged(
        "strong_convexity",
        worst,
        -1e-9,
        Comparison::AtLeast,
        trials,
        format!("curvature at logit 0: {at_zero}; max spread across targets {target_spread:e}"),
    )
    .require(at_zero == 0.25, "curvature at logit 0 is not exactly 1/4"))
}

/// Largest absolute logit over `triplets` with one draw per triplet. The
/// detail reports the curvature floor for a bound 10% above the observed
/// maximum.
pub fn check_bounded_logits<M: PreferenceModel>(
    model: &M,
    triplets: &[PreferenceTriplet],
    bound: f64,
    seed: u64,
) -> Result<VerificationResult> {
    if triplets.is_empty() {
        return Err(crate::Error::EmptyBatch);
    }
    let max = triplets
        .iter()
        .map(|t| model.logit(t, &draw_for(model, t, seed, 0)).abs())
        .fold(0.0, f64::max);
    let suggested = 1.1 * max;
    Ok(VerificationResult::judged(
        "bounded_logits",
        max,
        bound,
        Comparison::AtMost,
        triplets.len(),
        format!(
            "empirical bound {max:.6}; with M = {suggested:.6} the curvature floor is {:.6e}",
            logit_curvature(suggested)
        ),
    ))
}

/// Analytic gradients of every estimator on the diffusion model against
/// central differences, over `draws` random parameter draws each.
pub fn check_gradients(draws: usize, seed: u64) -> Result<VerificationResult> {
    if draws == 0 {
        return Err(invalid("need at least one parameter draw"));
    }
    let world = WorldSpec::default();
    let shape = DenoiserShape {
        hidden: 16,
        ..DenoiserShape::default()
    };
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for kind in EstimatorKind::ALL {
        let mut kind_worst: f64 = 0.0;
        for d in 0..draws {
            let s = rng::derive(rng::derive(seed, kind as u64), d as u64);
            let mut model = random_diffusion_model(shape, 0.5, s);
            let frac = if kind == EstimatorKind::FullLabelDpo { 1.0 } else { 0.5 };
            let data = generate(&world, 12, frac, s)?;
            let (lab, unl) = data.partition();
            let unl = if kind == EstimatorKind::FullLabelDpo || kind == EstimatorKind::LabeledOnlyDpo { Vec::new() } else { unl };
            let mut r = rng::stream(s, purpose::INIT, 4);
            let mk = |ts: &[PreferenceTriplet], r: &mut rand_chacha::ChaCha8Rng| -> Vec<(PreferenceTriplet, _, PseudoLabel)> {
                ts.iter()
                    .map(|t| {
                        let pseudo = if kind.uses_annotator() {
                            PseudoLabel::new(r.random_range(0.0..=1.0))
                        } else {
                            PseudoLabel::unused()
                        };
                        (t.clone(), draw_for(&model, t, s, 0), pseudo)
                    })
                    .collect()
            };
            let (vl, vu) = (mk(&lab, &mut r), mk(&unl, &mut r));
            let eval = |m: &DiffusionDpo, grad: Option<&mut [f64]>| -> Result<f64> {
                objective(kind, DeDpoForm::Combined, m, &as_points(&vl), &as_points(&vu), &ImportanceWeight::FromCounts, grad)
            };
            let mut grad = vec![0.0; model.num_params()];
            eval(&model, Some(&mut grad))?;
            let params = model.params().to_vec();
            let coords = probe_coordinates(params.len(), 40, s);
            let gc = check_gradient(&params, &grad, 1e-5, &coords, 4, s, 1e-8, |p| {
                model.params_mut().copy_from_slice(p);
                eval(&model, None).unwrap_or(f64::NAN)
            });
            model.params_mut().copy_from_slice(&params);
            kind_worst = kind_worst.max(if gc.max_rel_error.is_nan() { f64::INFINITY } else { gc.max_rel_error });
        }
        detail.push(format!("{kind}: {kind_worst:.2e}"));
        worst = worst.max(kind_worst);
    }
    Ok(VerificationResult::judged(
        "gradients",
        worst,
        1e-4,
        Comparison::AtMost,
        draws * EstimatorKind::ALL.len(),
        detail.join(", "),
    ))
}

/// With the snapshot equal to the reference, every implicit probability is
/// exactly 1/2, so no pseudo-label passes any threshold above 1/2 and the
/// self-training terms contribute exactly nothing.
pub fn check_self_training_gate(taus: &[f64], seed: u64) -> Result<VerificationResult> {
    let world = WorldSpec::default();
    let model = perturbed_model(0.0, 1.0, seed);
    let data = generate(&world, 40, 0.4, seed)?;
    let (lab, unl) = data.partition();
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    for &tau in taus {
        for augment in [Augment::None, Augment::ThreeTimesteps] {
            let pl = self_training_points(&model, &lab, tau, augment, seed)?;
            let pu = self_training_points(&model, &unl, tau, augment, seed)?;
            let gated: f64 = pl
                .iter()
                .chain(&pu)
                .map(|p| p.pseudo.weight * bce_logit(model.logit(p.triplet, &p.draw), p.pseudo.value).abs())
                .sum();
            let w = ImportanceWeight::FromCounts;
            let or = objective(EstimatorKind::OutcomeRegression, DeDpoForm::Combined, &model, &pl, &pu, &w, None)?;
            let labeled_only = objective(EstimatorKind::LabeledOnlyDpo, DeDpoForm::Combined, &model, &pl, &[], &w, None)?;
            worst = worst.max(gated).max((or - labeled_only).abs());
            trials += pl.len() + pu.len();
        }
    }
    Ok(VerificationResult::judged(
        "self_training_gate",
        worst,
        0.0,
        Comparison::AbsAtMost,
        trials,
        format!("thresholds {taus:?}, with and without augmentation"),
    ))
}

/// Degenerate cases: a perfect annotator makes the debiased loss the pooled
/// pseudo-label loss, and an empty unlabeled set makes it labeled-only DPO.
pub fn check_reductions(seed: u64) -> Result<VerificationResult> {
    let world = Arc::new(WorldSpec::default());
    let model = random_diffusion_model(DenoiserShape::default(), 1.0, seed);
    let oracle = Annotator::oracle(Arc::clone(&world));
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    for k in 0..10u64 {
        let s = rng::derive(seed, k);
        let data = generate(&world, 60, 0.25, s)?;
        let (lab, unl) = data.partition();
        let all_labeled = data.resplit(&world, data.len(), s)?;
        let pooled = loss_full_dpo(&model, &all_labeled.triplets, s)?;
        let combined = loss_dedpo_combined(&model, &lab, &unl, &oracle, s)?;
        let three = loss_dedpo_3term(&model, &lab, &unl, &oracle, s, DrawPolicy::Shared)?;
        let only = loss_labeled_only(&model, &lab, s)?;
        let no_unl_combined = loss_dedpo_combined(&model, &lab, &[], &oracle, s)?;
        let no_unl_three = loss_dedpo_3term(&model, &lab, &[], &oracle, s, DrawPolicy::Shared)?;
        worst = worst
            .max(rel(combined, pooled))
            .max(rel(three, pooled))
            .max(rel(no_unl_combined, only))
            .max(rel(no_unl_three, only));
        trials += 1;
    }
    Ok(VerificationResult::judged(
        "reductions",
        worst,
        1e-12,
        Comparison::AtMost,
        trials,
        "perfect annotator vs pooled pseudo-label loss; no unlabeled data vs labeled-only loss",
    ))
}
