//! Synthetic preference sources: exact oracle, random flips, a
//! systematically biased labeler calibrated to a target agreement, fixed
//! lookup tables, and self-training from a frozen policy snapshot.

mod self_training;
mod table;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{generate_with_offset, WorldSpec};
use crate::error::{invalid, Error, Result};
use crate::preference::{sigmoid, Annotate, PreferenceTriplet};
use crate::rng::{self, purpose};

pub use self_training::{self_training_label, Augment, DEFAULT_TAU};
pub use table::{read_fixed_table, write_fixed_table};

/// First triplet id of annotator calibration sets.
pub const CALIBRATION_ID_BASE: u64 = 1 << 41;
/// First triplet id of held-out evaluation sets.
pub const HELDOUT_ID_BASE: u64 = 1 << 40;
/// Logistic slope used by the preset biased annotators; at the scale of the
/// default world the most confident pairs get probabilities near 0.95.
pub const DEFAULT_SHARPNESS: f64 = 0.1;
/// Pairs drawn to calibrate a biased annotator.
pub const CALIBRATION_PAIRS: usize = 10_000;

/// Descriptive annotator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnnotatorKind {
    Oracle,
    Flip {
        p: f64,
    },
    /// Agreement target in `[0, 1]`. Without `sharpness` the labels are hard;
    /// with it, `g_hat = sigmoid(sharpness * (m + b h))`.
    Biased {
        accuracy: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sharpness: Option<f64>,
    },
    /// Pseudo-labels from a frozen policy snapshot, kept only when the
    /// snapshot's confidence `|G - 0.5|` reaches `tau - 0.5`.
    SelfTraining {
        #[serde(default = "self_training::default_tau")]
        tau: f64,
        #[serde(default)]
        augment: Augment,
    },
    Fixed,
}

impl AnnotatorKind {
    /// Roughly the agreement of a capable vision-language labeler.
    pub fn vlm_like() -> Self {
        AnnotatorKind::Biased {
            accuracy: 0.8,
            sharpness: Some(DEFAULT_SHARPNESS),
        }
    }

    /// A labeler that agrees with humans about half the time.
    pub fn clip_like() -> Self {
        AnnotatorKind::Biased {
            accuracy: 0.5,
            sharpness: Some(DEFAULT_SHARPNESS),
        }
    }

    pub fn label(&self) -> String {
        match self {
            AnnotatorKind::Oracle => "oracle".into(),
            AnnotatorKind::Flip { p } => format!("flip{p}"),
            AnnotatorKind::Biased { accuracy, .. } => format!("biased{accuracy}"),
            AnnotatorKind::SelfTraining { .. } => "self_training".into(),
            AnnotatorKind::Fixed => "fixed".into(),
        }
    }
}

/// A frozen map from triplets to pseudo-preference probabilities.
///
/// Outputs depend only on the triplet and the construction arguments, so
/// repeated queries agree. Self-training annotators carry only their
/// configuration here; their labels come from [`self_training_label`].
#[derive(Debug, Clone)]
pub struct Annotator {
    kind: AnnotatorKind,
    seed: u64,
    world: Option<Arc<WorldSpec>>,
    bias: f64,
    table: Option<Arc<HashMap<u64, f64>>>,
    calibration_ids: BTreeSet<u64>,
}

impl Annotator {
    fn base(kind: AnnotatorKind, seed: u64, world: Option<Arc<WorldSpec>>) -> Self {
        Self {
            kind,
            seed,
            world,
            bias: 0.0,
            table: None,
            calibration_ids: BTreeSet::new(),
        }
    }

    pub fn oracle(world: Arc<WorldSpec>) -> Self {
        Self::base(AnnotatorKind::Oracle, 0, Some(world))
    }

    pub fn flip(world: Arc<WorldSpec>, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("flip probability {p} outside [0, 1]")));
        }
        Ok(Self::base(AnnotatorKind::Flip { p }, seed, Some(world)))
    }

    /// Biased labeler whose bias strength is bisected on a fresh calibration
    /// set until its agreement with the true preference matches `accuracy`.
    pub fn biased(world: Arc<WorldSpec>, accuracy: f64, sharpness: Option<f64>, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(invalid(format!("target accuracy {accuracy} outside [0, 1]")));
        }
        if let Some(s) = sharpness {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid(format!("sharpness must be positive, got {s}")));
            }
        }
        let cal = generate_with_offset(
            &world,
            CALIBRATION_PAIRS,
            1.0,
            rng::derive(seed, purpose::CALIBRATION),
            CALIBRATION_ID_BASE,
        )?;
        let feats: Vec<(f64, f64, bool)> = cal
            .triplets
            .iter()
            .map(|t| {
                let m = world.squared_margin(t.c, &t.x0, &t.x1);
                let h = world.decoy_margin(t.c, &t.x0, &t.x1);
                (m, h, t.z == Some(1))
            })
            .collect();
        let agreement = |b: f64| {
            let hits = feats.iter().filter(|(m, h, z)| (m + b * h > 0.0) == *z).count();
            hits as f64 / feats.len() as f64
        };
        let bias = calibrate_bias(accuracy, agreement)?;
        let mut a = Self::base(AnnotatorKind::Biased { accuracy, sharpness }, seed, Some(world));
        a.bias = bias;
        a.calibration_ids = cal.ids().collect();
        Ok(a)
    }

    pub fn fixed(table: HashMap<u64, f64>) -> Result<Self> {
        if let Some((&id, &value)) = table.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::AnnotationOutOfRange { id, value });
        }
        let mut a = Self::base(AnnotatorKind::Fixed, 0, None);
        a.table = Some(Arc::new(table));
        Ok(a)
    }

    pub fn self_training(tau: f64, augment: Augment) -> Result<Self> {
        self_training::check_tau(tau)?;
        Ok(Self::base(AnnotatorKind::SelfTraining { tau, augment }, 0, None))
    }

    /// Build from a descriptive kind. Fixed tables must be loaded separately.
    pub fn from_kind(kind: &AnnotatorKind, world: Arc<WorldSpec>, seed: u64) -> Result<Self> {
        match kind {
            AnnotatorKind::Oracle => Ok(Self::oracle(world)),
            AnnotatorKind::Flip { p } => Self::flip(world, *p, seed),
            AnnotatorKind::Biased { accuracy, sharpness } => Self::biased(world, *accuracy, *sharpness, seed),
            AnnotatorKind::SelfTraining { tau, augment } => Self::self_training(*tau, *augment),
            AnnotatorKind::Fixed => Err(invalid("a fixed annotator needs a table")),
        }
    }

    /// Declare the ids this annotator was fitted on.
    pub fn with_calibration_ids(mut self, ids: impl IntoIterator<Item = u64>) -> Self {
        self.calibration_ids.extend(ids);
        self
    }

    pub fn kind(&self) -> &AnnotatorKind {
        &self.kind
    }

    /// Calibrated bias strength (zero for unbiased kinds).
    pub fn bias_strength(&self) -> f64 {
        self.bias
    }

    pub fn calibration_ids(&self) -> &BTreeSet<u64> {
        &self.calibration_ids
    }

    /// Number of `ids` that were also used to fit this annotator.
    pub fn overlap(&self, ids: impl IntoIterator<Item = u64>) -> usize {
        ids.into_iter().filter(|i| self.calibration_ids.contains(i)).count()
    }

    /// `(tau, augment)` for self-training annotators.
    pub fn self_training_params(&self) -> Option<(f64, Augment)> {
        match self.kind {
            AnnotatorKind::SelfTraining { tau, augment } => Some((tau, augment)),
            _ => None,
        }
    }

    fn world(&self) -> Result<&WorldSpec> {
        self.world.as_deref().ok_or_else(|| invalid("annotator has no ground-truth world"))
    }

    fn truth(&self, t: &PreferenceTriplet) -> Result<u8> {
        match t.z {
            Some(z) => Ok(z),
            None => self.world()?.true_preference(t.c, &t.x0, &t.x1),
        }
    }
}

impl Annotate for Annotator {
    fn annotate(&self, t: &PreferenceTriplet) -> Result<f64> {
        match &self.kind {
            AnnotatorKind::Oracle => Ok(f64::from(self.truth(t)?)),
            AnnotatorKind::Flip { p } => {
                let z = self.truth(t)?;
                let flip = rng::stream(self.seed, purpose::FLIP, t.id).random_bool(*p);
                Ok(f64::from(if flip { 1 - z } else { z }))
            }
            AnnotatorKind::Biased { sharpness, .. } => {
                let w = self.world()?;
                let score = w.squared_margin(t.c, &t.x0, &t.x1) + self.bias * w.decoy_margin(t.c, &t.x0, &t.x1);
                Ok(match sharpness {
                    Some(s) => sigmoid(s * score),
                    None => f64::from(u8::from(score > 0.0)),
                })
            }
            AnnotatorKind::Fixed => self
                .table
                .as_ref()
                .and_then(|m| m.get(&t.id).copied())
                .ok_or(Error::UnknownTriplet(t.id)),
            AnnotatorKind::SelfTraining { .. } => Err(invalid("self-training labels come from a policy snapshot")),
        }
    }
}

/// Bisection for the smallest bias strength whose agreement drops to
/// `target`. `agreement` must be non-increasing in the bias with
/// `agreement(0) = 1`.
fn calibrate_bias(target: f64, agreement: impl Fn(f64) -> f64) -> Result<f64> {
    if agreement(0.0) <= target {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while agreement(hi) > target {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(invalid(format!("agreement {target} is not reachable by biasing")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if agreement(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever side lands closer to the target.
    Ok(if (agreement(lo) - target).abs() < (agreement(hi) - target).abs() { lo } else { hi })
}

/// Agreement of an annotator with human labels on a held-out set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorReport {
    pub agreement_rate: f64,
    pub n_evaluated: usize,
    /// `confusion[z][round(g_hat)]`
    pub confusion: [[u64; 2]; 2],
}

/// Compare `round(g_hat)` with `z` on every held-out triplet.
pub fn evaluate_annotator(annotator: &dyn Annotate, heldout: &[PreferenceTriplet]) -> Result<AnnotatorReport> {
    if heldout.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut confusion = [[0u64; 2]; 2];
    for t in heldout {
        let z = t.z.ok_or(Error::MissingLabel { id: t.id })?;
        let g = annotator.annotate(t)?;
        let pred = usize::from(g > 0.5);
        confusion[z as usize][pred] += 1;
    }
    let hits = confusion[0][0] + confusion[1][1];
    Ok(AnnotatorReport {
        agreement_rate: hits as f64 / heldout.len() as f64,
        n_evaluated: heldout.len(),
        confusion,
    })
}

/// As [`evaluate_annotator`], refusing held-out sets that overlap the
/// annotator's calibration data.
pub fn evaluate_heldout(annotator: &Annotator, heldout: &[PreferenceTriplet]) -> Result<AnnotatorReport> {
    let shared = annotator.overlap(heldout.iter().map(|t| t.id));
    if shared > 0 {
        return Err(invalid(format!("{shared} held-out triplets were used to calibrate the annotator")));
    }
    evaluate_annotator(annotator, heldout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_with_offset;

    fn world() -> Arc<WorldSpec> {
        Arc::new(WorldSpec::default())
    }

    fn heldout(n: usize, seed: u64) -> Vec<PreferenceTriplet> {
        generate_with_offset(&world(), n, 1.0, seed, HELDOUT_ID_BASE).unwrap().triplets
    }

    #[test]
    fn oracle_returns_labels() {
        let h = heldout(500, 1);
        let a = Annotator::oracle(world());
        for t in &h {
            assert_eq!(a.annotate(t).unwrap(), f64::from(t.z.unwrap()));
            let u = t.clone().with_label(None);
            assert_eq!(a.annotate(&u).unwrap(), f64::from(t.z.unwrap()));
        }
        assert_eq!(evaluate_annotator(&a, &h).unwrap().agreement_rate, 1.0);
    }

    #[test]
    fn flip_rate_matches_probability() {
        let h = heldout(10_000, 2);
        for (p, tol) in [(0.2, 0.012), (0.5, 0.015)] {
            let a = Annotator::flip(world(), p, 7).unwrap();
            let r = evaluate_annotator(&a, &h).unwrap();
            assert!((r.agreement_rate - (1.0 - p)).abs() <= tol, "{p}: {}", r.agreement_rate);
            let c = r.confusion;
            assert_eq!(c[0][0] + c[0][1] + c[1][0] + c[1][1], 10_000);
        }
    }

    #[test]
    fn outputs_are_frozen() {
        let h = heldout(50, 3);
        let f = Annotator::flip(world(), 0.3, 4).unwrap();
        let b = Annotator::biased(world(), 0.8, Some(2.0), 4).unwrap();
        for t in &h {
            assert_eq!(f.annotate(t).unwrap(), f.annotate(t).unwrap());
            assert_eq!(b.annotate(t).unwrap(), b.annotate(t).unwrap());
        }
    }

    #[test]
    fn biased_hits_targets_on_heldout() {
        let h = heldout(10_000, 5);
        for target in [0.8, 0.5] {
            let a = Annotator::biased(world(), target, None, 11).unwrap();
            let r = evaluate_heldout(&a, &h).unwrap();
            assert!((r.agreement_rate - target).abs() <= 0.02, "{target}: {}", r.agreement_rate);
            assert!(a.bias_strength() > 0.0);
        }
        let exact = Annotator::biased(world(), 1.0, None, 11).unwrap();
        assert_eq!(exact.bias_strength(), 0.0);
        for t in &h {
            assert_eq!(exact.annotate(t).unwrap(), f64::from(t.z.unwrap()));
        }
    }

    #[test]
    fn calibration_overlap_is_detected() {
        let a = Annotator::biased(world(), 0.8, None, 11).unwrap();
        assert_eq!(a.calibration_ids().len(), CALIBRATION_PAIRS);
        let cal = generate_with_offset(&world(), 20, 1.0, 0, CALIBRATION_ID_BASE).unwrap();
        assert_eq!(a.overlap(cal.ids()), 20);
        assert!(evaluate_heldout(&a, &cal.triplets).is_err());
        assert_eq!(a.overlap(0..1000), 0);
    }

    #[test]
    fn fixed_table_lookup() {
        let a = Annotator::fixed(HashMap::from([(3, 0.25), (9, 1.0)])).unwrap();
        let t = PreferenceTriplet::new(3, 0, vec![0.0, 0.0], vec![1.0, 1.0], None).unwrap();
        assert_eq!(a.annotate(&t).unwrap(), 0.25);
        let unknown = PreferenceTriplet::new(4, 0, vec![0.0, 0.0], vec![1.0, 1.0], None).unwrap();
        assert!(matches!(a.annotate(&unknown), Err(Error::UnknownTriplet(4))));
        assert!(Annotator::fixed(HashMap::from([(1, 1.5)])).is_err());
    }

    #[test]
    fn empty_or_unlabeled_heldout_is_rejected() {
        let a = Annotator::oracle(world());
        assert!(matches!(evaluate_annotator(&a, &[]), Err(Error::EmptyBatch)));
        let t = PreferenceTriplet::new(0, 0, vec![0.0, 0.0], vec![1.0, 1.0], None).unwrap();
        assert!(evaluate_annotator(&a, &[t]).is_err());
    }

    #[test]
    fn bisection_on_a_known_curve() {
        let b = calibrate_bias(0.75, |b| 1.0 / (1.0 + b)).unwrap();
        assert!((b - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(calibrate_bias(1.0, |_| 1.0).unwrap(), 0.0);
        assert!(calibrate_bias(0.1, |_| 0.6).is_err());
    }

    #[test]
    fn kind_round_trips_through_toml() {
        let st = AnnotatorKind::SelfTraining {
            tau: DEFAULT_TAU,
            augment: Augment::None,
        };
        for k in [AnnotatorKind::Oracle, AnnotatorKind::Flip { p: 0.2 }, AnnotatorKind::vlm_like(), st.clone()] {
            let s = toml::to_string(&k).unwrap();
            assert_eq!(toml::from_str::<AnnotatorKind>(&s).unwrap(), k);
        }
        assert_eq!(toml::from_str::<AnnotatorKind>("kind = \"self_training\"").unwrap(), st);
        assert!(toml::from_str::<AnnotatorKind>("kind = \"flip\"\np = 0.2\nextra = 1").is_err());
    }
}
