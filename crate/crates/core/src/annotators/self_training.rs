use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::preference::{g_theta, PreferenceModel, PreferenceTriplet, PseudoLabel};
use crate::rng::{self, purpose};

/// Confidence threshold used when none is configured.
pub const DEFAULT_TAU: f64 = 0.95;

pub(crate) fn default_tau() -> f64 {
    DEFAULT_TAU
}

/// Which noisy views feed the confidence gate and the pseudo-label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augment {
    /// Gate, label and training loss all use the training draw.
    #[default]
    None,
    /// Gate and label each use their own fresh timestep and noise.
    ThreeTimesteps,
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.5 && tau <= 1.0) {
        return Err(invalid(format!("self-training threshold must be in (0.5, 1], got {tau}")));
    }
    Ok(())
}

/// Pseudo-label from a frozen snapshot.
///
/// The gate view is `shared_draw` when `augment` is `None`, otherwise a fresh
/// draw keyed by `(seed, counter, triplet id)`. The weight is 0 when
/// `|G - 0.5| < tau - 0.5` on the gate view. Otherwise it is 1 and the label is
/// `round(G)` on the label view.
pub fn self_training_label<M: PreferenceModel>(
    snapshot: &M,
    triplet: &PreferenceTriplet,
    shared_draw: &M::Draw,
    tau: f64,
    augment: Augment,
    seed: u64,
    counter: u64,
) -> Result<PseudoLabel> {
    check_tau(tau)?;
    let view = |tag: u64| -> M::Draw {
        let s = rng::derive(rng::derive(seed, tag), counter);
        snapshot.draw(triplet, &mut rng::stream(s, tag, triplet.id))
    };
    let g_gate = match augment {
        Augment::None => g_theta(snapshot, triplet, shared_draw),
        Augment::ThreeTimesteps => g_theta(snapshot, triplet, &view(purpose::DRAW_AUG1)),
    };
    if (g_gate - 0.5).abs() < tau - 0.5 {
        return Ok(PseudoLabel { value: 0.5, weight: 0.0 });
    }
    let g_label = match augment {
        Augment::None => g_gate,
        Augment::ThreeTimesteps => g_theta(snapshot, triplet, &view(purpose::DRAW_AUG3)),
    };
    Ok(PseudoLabel {
        value: g_label.round(),
        weight: 1.0,
    })
}
