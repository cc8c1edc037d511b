//! Loss estimators over labeled and unlabeled triplets.
//!
//! Every estimator is a weighted sum of BCE terms on per-triplet logits. The
//! core routine [`objective`] evaluates one logit per point and reuses it in
//! every term that mentions the point, which makes the three-term and
//! combined-target forms of the debiased loss agree to rounding error.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::PreferenceModel;
use super::triplet::PreferenceTriplet;
use super::{bce_logit, sigmoid};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, purpose};

/// Which loss trains the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "FullLabelDPO", alias = "full")]
    FullLabelDpo,
    #[serde(rename = "LabeledOnlyDPO", alias = "labeled_only")]
    LabeledOnlyDpo,
    #[serde(rename = "OR", alias = "outcome_regression")]
    OutcomeRegression,
    #[serde(rename = "DeDPO", alias = "dedpo")]
    DeDpo,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::FullLabelDpo,
        EstimatorKind::LabeledOnlyDpo,
        EstimatorKind::OutcomeRegression,
        EstimatorKind::DeDpo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::FullLabelDpo => "FullLabelDPO",
            EstimatorKind::LabeledOnlyDpo => "LabeledOnlyDPO",
            EstimatorKind::OutcomeRegression => "OR",
            EstimatorKind::DeDpo => "DeDPO",
        }
    }

    /// Whether the estimator reads annotator outputs.
    pub fn uses_annotator(self) -> bool {
        matches!(self, EstimatorKind::OutcomeRegression | EstimatorKind::DeDpo)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type WeightFn = Arc<dyn Fn(&PreferenceTriplet) -> f64 + Send + Sync>;

/// Importance weight applied to labeled-point corrections.
#[derive(Clone, Default)]
pub enum ImportanceWeight {
    /// `(n_l + n_u) / n_l` from the counts of the evaluated sets.
    #[default]
    FromCounts,
    /// A fixed ratio, typically the population ratio used on minibatches.
    Global(f64),
    /// An instance-dependent weight `gamma(y)`.
    Function(WeightFn),
}

impl fmt::Debug for ImportanceWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImportanceWeight::FromCounts => f.write_str("FromCounts"),
            ImportanceWeight::Global(r) => write!(f, "Global({r})"),
            ImportanceWeight::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Estimator choice with its temperature and importance weight.
#[derive(Debug, Clone)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub beta: f64,
    pub weight: ImportanceWeight,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!("beta must be positive, got {beta}")));
        }
        Ok(Self {
            kind,
            beta,
            weight: ImportanceWeight::FromCounts,
        })
    }

    pub fn with_weight_fn(mut self, f: WeightFn) -> Self {
        self.weight = ImportanceWeight::Function(f);
        self
    }
}

/// Cheap, possibly wrong source of preference probabilities.
pub trait Annotate {
    fn annotate(&self, triplet: &PreferenceTriplet) -> Result<f64>;
}

impl<F: Fn(&PreferenceTriplet) -> f64> Annotate for F {
    fn annotate(&self, triplet: &PreferenceTriplet) -> Result<f64> {
        Ok(self(triplet))
    }
}

/// An annotator output with its confidence gate (0 or 1 for self-training,
/// always 1 otherwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabel {
    pub value: f64,
    pub weight: f64,
}

impl PseudoLabel {
    pub fn new(value: f64) -> Self {
        Self { value, weight: 1.0 }
    }

    /// Placeholder for points whose pseudo-label is never read.
    pub fn unused() -> Self {
        Self {
            value: f64::NAN,
            weight: 0.0,
        }
    }
}

/// A triplet with the draw that noises it and its pseudo-label.
#[derive(Debug, Clone)]
pub struct Point<'a, D> {
    pub triplet: &'a PreferenceTriplet,
    pub draw: D,
    pub pseudo: PseudoLabel,
}

/// Which algebraic form of the debiased loss to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeDpoForm {
    ThreeTerm,
    #[default]
    Combined,
}

/// How noise draws relate across the terms of the three-term loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawPolicy {
    /// One draw per triplet reused by every term.
    #[default]
    Shared,
    /// A separate draw per term.
    Independent,
}

/// Pseudo target with the importance-weighted correction applied on labeled
/// points: `g_hat` if unlabeled, `g_hat + ratio * (z - g_hat)` if labeled.
/// The result is deliberately not clamped.
pub fn combined_target(triplet: &PreferenceTriplet, g_hat: f64, ratio: f64) -> f64 {
    match triplet.z {
        Some(z) => g_hat + ratio * (f64::from(z) - g_hat),
        None => g_hat,
    }
}

/// Draw for one triplet, derived from `(seed, term, triplet id)`.
pub fn draw_for<M: PreferenceModel>(model: &M, triplet: &PreferenceTriplet, seed: u64, term: u64) -> M::Draw {
    let seed = if term == 0 { seed } else { rng::derive(seed, purpose::TERM + (term << 8)) };
    model.draw(triplet, &mut rng::stream(seed, purpose::DRAW, triplet.id))
}

fn check_pseudo(p: &Point<'_, impl Sized>) -> Result<()> {
    let v = p.pseudo.value;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::AnnotationOutOfRange { id: p.triplet.id, value: v });
    }
    if !(0.0..=1.0).contains(&p.pseudo.weight) {
        return Err(invalid(format!("confidence weight {} for triplet {}", p.pseudo.weight, p.triplet.id)));
    }
    Ok(())
}

fn label_of(p: &Point<'_, impl Sized>) -> Result<f64> {
    p.triplet.label()
}

/// Evaluate an estimator on explicit points, optionally accumulating the
/// gradient of the returned loss into `grad` (which is overwritten).
///
/// For [`EstimatorKind::FullLabelDpo`] both slices are pooled and every
/// point must be labeled. For the other kinds `labeled` must carry labels
/// and must be nonempty.
pub fn objective<M: PreferenceModel>(
    kind: EstimatorKind,
    form: DeDpoForm,
    model: &M,
    labeled: &[Point<'_, M::Draw>],
    unlabeled: &[Point<'_, M::Draw>],
    weight: &ImportanceWeight,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    let n_l = labeled.len();
    let n_u = unlabeled.len();
    let n = n_l + n_u;
    if n == 0 || (kind != EstimatorKind::FullLabelDpo && n_l == 0) {
        return Err(Error::EmptyBatch);
    }
    if kind == EstimatorKind::FullLabelDpo {
        if let Some(p) = unlabeled.iter().find(|p| !p.triplet.is_labeled()) {
            return Err(Error::MissingLabel { id: p.triplet.id });
        }
    }
    let z: Vec<f64> = labeled.iter().map(label_of).collect::<Result<_>>()?;
    match kind {
        EstimatorKind::OutcomeRegression => unlabeled.iter().try_for_each(check_pseudo)?,
        EstimatorKind::DeDpo => labeled.iter().chain(unlabeled).try_for_each(check_pseudo)?,
        _ => {}
    }

    let want_grad = grad.is_some();
    let mut tapes_l: Vec<M::Tape> = Vec::new();
    let mut tapes_u: Vec<M::Tape> = Vec::new();
    let logits = |pts: &[Point<'_, M::Draw>], tapes: &mut Vec<M::Tape>, skip: bool| -> Vec<f64> {
        if skip {
            return Vec::new();
        }
        pts.iter()
            .map(|p| {
                if want_grad {
                    let mut tape = M::Tape::default();
                    let a = model.logit_taped(p.triplet, &p.draw, &mut tape);
                    tapes.push(tape);
                    a
                } else {
                    model.logit(p.triplet, &p.draw)
                }
            })
            .collect()
    };
    let skip_u = matches!(kind, EstimatorKind::LabeledOnlyDpo);
    let a_l = logits(labeled, &mut tapes_l, false);
    let a_u = logits(unlabeled, &mut tapes_u, skip_u);

    let nf = n as f64;
    let ratio_of = |t: &PreferenceTriplet| -> f64 {
        match weight {
            ImportanceWeight::FromCounts => nf / n_l as f64,
            ImportanceWeight::Global(r) => *r,
            ImportanceWeight::Function(f) => f(t),
        }
    };

    // dL/d logit per point
    let mut c_l = vec![0.0; n_l];
    let mut c_u = vec![0.0; a_u.len()];
    let loss = match kind {
        EstimatorKind::FullLabelDpo => {
            let mut s = 0.0;
            for (i, &a) in a_l.iter().enumerate() {
                s += bce_logit(a, z[i]);
                c_l[i] = (sigmoid(a) - z[i]) / nf;
            }
            for (j, &a) in a_u.iter().enumerate() {
                let zu = unlabeled[j].triplet.label()?;
                s += bce_logit(a, zu);
                c_u[j] = (sigmoid(a) - zu) / nf;
            }
            s / nf
        }
        EstimatorKind::LabeledOnlyDpo => {
            let nl = n_l as f64;
            let mut s = 0.0;
            for (i, &a) in a_l.iter().enumerate() {
                s += bce_logit(a, z[i]);
                c_l[i] = (sigmoid(a) - z[i]) / nl;
            }
            s / nl
        }
        EstimatorKind::OutcomeRegression => {
            let nl = n_l as f64;
            let mut sl = 0.0;
            for (i, &a) in a_l.iter().enumerate() {
                sl += bce_logit(a, z[i]);
                c_l[i] = (sigmoid(a) - z[i]) / nl;
            }
            let mut su = 0.0;
            if n_u > 0 {
                let nu = n_u as f64;
                for (j, &a) in a_u.iter().enumerate() {
                    let p = unlabeled[j].pseudo;
                    su += p.weight * bce_logit(a, p.value);
                    c_u[j] = p.weight * (sigmoid(a) - p.value) / nu;
                }
                su /= nu;
            }
            sl / nl + su
        }
        EstimatorKind::DeDpo => match form {
            DeDpoForm::ThreeTerm => {
                let literal = matches!(weight, ImportanceWeight::FromCounts);
                let mut s1 = 0.0;
                for (i, &a) in a_l.iter().enumerate() {
                    let p = labeled[i].pseudo;
                    s1 += p.weight * bce_logit(a, p.value);
                    c_l[i] = p.weight * (sigmoid(a) - p.value) / nf;
                }
                for (j, &a) in a_u.iter().enumerate() {
                    let p = unlabeled[j].pseudo;
                    s1 += p.weight * bce_logit(a, p.value);
                    c_u[j] = p.weight * (sigmoid(a) - p.value) / nf;
                }
                let mut s2 = 0.0;
                for (i, &a) in a_l.iter().enumerate() {
                    let p = labeled[i].pseudo;
                    let k = if literal { 1.0 / n_l as f64 } else { ratio_of(labeled[i].triplet) / nf };
                    let diff = bce_logit(a, z[i]) - p.weight * bce_logit(a, p.value);
                    s2 += if literal { diff } else { k * nf * diff };
                    c_l[i] += k * ((sigmoid(a) - z[i]) - p.weight * (sigmoid(a) - p.value));
                }
                if literal {
                    s1 / nf + s2 / n_l as f64
                } else {
                    s1 / nf + s2 / nf
                }
            }
            DeDpoForm::Combined => {
                let mut s = 0.0;
                for (i, &a) in a_l.iter().enumerate() {
                    let p = labeled[i].pseudo;
                    let ratio = ratio_of(labeled[i].triplet);
                    let w = combined_target(labeled[i].triplet, p.value, ratio);
                    let sg = sigmoid(a);
                    let mut term = p.weight * bce_logit(a, w);
                    let mut dc = p.weight * (sg - w);
                    if p.weight != 1.0 {
                        term += (1.0 - p.weight) * ratio * bce_logit(a, z[i]);
                        dc += (1.0 - p.weight) * ratio * (sg - z[i]);
                    }
                    s += term;
                    c_l[i] = dc / nf;
                }
                for (j, &a) in a_u.iter().enumerate() {
                    let p = unlabeled[j].pseudo;
                    s += p.weight * bce_logit(a, p.value);
                    c_u[j] = p.weight * (sigmoid(a) - p.value) / nf;
                }
                s / nf
            }
        },
    };

    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
        for (i, p) in labeled.iter().enumerate() {
            if c_l[i] != 0.0 {
                model.backprop(p.triplet, &p.draw, &tapes_l[i], c_l[i], g);
            }
        }
        for (j, c) in c_u.iter().enumerate() {
            if *c != 0.0 {
                model.backprop(unlabeled[j].triplet, &unlabeled[j].draw, &tapes_u[j], *c, g);
            }
        }
    }
    Ok(loss)
}

fn points<'a, M: PreferenceModel>(
    model: &M,
    triplets: &'a [PreferenceTriplet],
    annotator: Option<&dyn Annotate>,
    seed: u64,
    term: u64,
) -> Result<Vec<Point<'a, M::Draw>>> {
    triplets
        .iter()
        .map(|t| {
            let pseudo = match annotator {
                Some(a) => PseudoLabel::new(a.annotate(t)?),
                None => PseudoLabel::unused(),
            };
            Ok(Point {
                triplet: t,
                draw: draw_for(model, t, seed, term),
                pseudo,
            })
        })
        .collect()
}

/// Mean BCE against the human labels with one fresh draw per triplet.
pub fn loss_full_dpo<M: PreferenceModel>(model: &M, batch: &[PreferenceTriplet], seed: u64) -> Result<f64> {
    let pts = points(model, batch, None, seed, 0)?;
    objective(EstimatorKind::FullLabelDpo, DeDpoForm::Combined, model, &pts, &[], &ImportanceWeight::FromCounts, None)
}

/// Full-label loss restricted to the labeled set.
pub fn loss_labeled_only<M: PreferenceModel>(model: &M, labeled: &[PreferenceTriplet], seed: u64) -> Result<f64> {
    let pts = points(model, labeled, None, seed, 0)?;
    objective(EstimatorKind::LabeledOnlyDpo, DeDpoForm::Combined, model, &pts, &[], &ImportanceWeight::FromCounts, None)
}

/// Outcome-regression loss: labeled mean plus imputed unlabeled mean.
pub fn loss_or<M: PreferenceModel>(
    model: &M,
    labeled: &[PreferenceTriplet],
    unlabeled: &[PreferenceTriplet],
    annotator: &dyn Annotate,
    seed: u64,
) -> Result<f64> {
    let pl = points(model, labeled, None, seed, 0)?;
    let pu = points(model, unlabeled, Some(annotator), seed, 0)?;
    objective(EstimatorKind::OutcomeRegression, DeDpoForm::Combined, model, &pl, &pu, &ImportanceWeight::FromCounts, None)
}

/// Debiased loss as pooled pseudo-label mean plus labeled correction.
pub fn loss_dedpo_3term<M: PreferenceModel>(
    model: &M,
    labeled: &[PreferenceTriplet],
    unlabeled: &[PreferenceTriplet],
    annotator: &dyn Annotate,
    seed: u64,
    draws: DrawPolicy,
) -> Result<f64> {
    let pl = points(model, labeled, Some(annotator), seed, 0)?;
    let pu = points(model, unlabeled, Some(annotator), seed, 0)?;
    match draws {
        DrawPolicy::Shared => {
            objective(EstimatorKind::DeDpo, DeDpoForm::ThreeTerm, model, &pl, &pu, &ImportanceWeight::FromCounts, None)
        }
        DrawPolicy::Independent => {
            if pl.is_empty() {
                return Err(Error::EmptyBatch);
            }
            pl.iter().chain(&pu).try_for_each(check_pseudo)?;
            let n = (pl.len() + pu.len()) as f64;
            let pooled: f64 = pl
                .iter()
                .chain(&pu)
                .map(|p| bce_logit(model.logit(p.triplet, &p.draw), p.pseudo.value))
                .sum::<f64>()
                / n;
            let mut corr = 0.0;
            for p in &pl {
                let d1 = draw_for(model, p.triplet, seed, 1);
                let d2 = draw_for(model, p.triplet, seed, 2);
                corr += bce_logit(model.logit(p.triplet, &d1), p.triplet.label()?)
                    - bce_logit(model.logit(p.triplet, &d2), p.pseudo.value);
            }
            Ok(pooled + corr / pl.len() as f64)
        }
    }
}

/// Debiased loss as a single pooled mean against combined targets.
pub fn loss_dedpo_combined<M: PreferenceModel>(
    model: &M,
    labeled: &[PreferenceTriplet],
    unlabeled: &[PreferenceTriplet],
    annotator: &dyn Annotate,
    seed: u64,
) -> Result<f64> {
    let pl = points(model, labeled, Some(annotator), seed, 0)?;
    let pu = points(model, unlabeled, Some(annotator), seed, 0)?;
    objective(EstimatorKind::DeDpo, DeDpoForm::Combined, model, &pl, &pu, &ImportanceWeight::FromCounts, None)
}

/// Mean absolute per-point term of the combined-target loss.
///
/// Rounding error in either form of the debiased loss scales with this
/// quantity rather than with the loss itself, which may be close to zero
/// after cancellation, so it is the natural denominator when comparing them.
pub fn dedpo_term_scale<M: PreferenceModel>(
    model: &M,
    labeled: &[PreferenceTriplet],
    unlabeled: &[PreferenceTriplet],
    annotator: &dyn Annotate,
    seed: u64,
) -> Result<f64> {
    let n = labeled.len() + unlabeled.len();
    if labeled.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let ratio = n as f64 / labeled.len() as f64;
    let mut s = 0.0;
    for t in labeled.iter().chain(unlabeled) {
        let g_hat = annotator.annotate(t)?;
        let a = model.logit(t, &draw_for(model, t, seed, 0));
        s += bce_logit(a, combined_target(t, g_hat, ratio)).abs();
    }
    Ok(s / n as f64)
}
