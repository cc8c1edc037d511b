//! Preference margin, its binary-classification reading, and the loss
//! estimators built on it (full-label, labeled-only, outcome regression and
//! the debiased estimator with its combined-target form).

pub mod estimators;
pub mod model;
pub mod triplet;

pub use estimators::{
    combined_target, dedpo_term_scale, draw_for, loss_dedpo_3term, loss_dedpo_combined, loss_full_dpo, loss_labeled_only, loss_or,
    objective, Annotate, DeDpoForm, DrawPolicy, EstimatorKind, EstimatorSpec, ImportanceWeight, Point, PseudoLabel,
    WeightFn,
};
pub use model::{dpo_margin, DiffusionDpo, LinearPreference, MarginDraw, MarginSample, PreferenceModel};
pub use triplet::PreferenceTriplet;

use crate::error::{invalid, Result};

/// Lower clamp applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Predicted probability that `x1` is preferred, given a logit.
pub fn g_from_logit(logit: f64) -> f64 {
    clamp_prob(sigmoid(logit))
}

/// `G_theta(y)` for one triplet and draw.
pub fn g_theta<M: PreferenceModel>(model: &M, triplet: &PreferenceTriplet, draw: &M::Draw) -> f64 {
    g_from_logit(model.logit(triplet, draw))
}

/// Binary cross-entropy `-b ln a - (1 - b) ln(1 - a)`.
///
/// The target `b` may be any real number; the loss is affine in it.
pub fn bce(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return Err(invalid(format!("probability {a} is not inside (0, 1)")));
    }
    Ok(bce_unchecked(a, b))
}

pub(crate) fn bce_unchecked(a: f64, b: f64) -> f64 {
    -b * a.ln() - (1.0 - b) * (1.0 - a).ln()
}

/// `ln sigmoid(x)` without cancellation.
pub fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// BCE evaluated on a logit. Both log-probabilities are floored at
/// `ln PROB_FLOOR`, matching the probability clamp.
pub fn bce_logit(logit: f64, target: f64) -> f64 {
    let floor = PROB_FLOOR.ln();
    let lp = ln_sigmoid(logit).max(floor);
    let lq = ln_sigmoid(-logit).max(floor);
    -target * lp - (1.0 - target) * lq
}

/// Second derivative of `bce(sigmoid(a), w)` in `a`; it does not depend on `w`.
pub fn logit_curvature(a: f64) -> f64 {
    let s = sigmoid(a);
    s * (1.0 - s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability_costs_ln2() {
        assert!((bce(0.5, 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        for w in [-3.0, 0.0, 0.2, 1.0, 7.0] {
            assert!((bce(0.5, w).unwrap() - std::f64::consts::LN_2).abs() < 1e-14);
        }
    }

    #[test]
    fn out_of_range_target() {
        let want = -1.6 * 0.8f64.ln() + 0.6 * 0.2f64.ln();
        assert!((bce(0.8, 1.6).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_probability() {
        for a in [0.0, 1.0, -0.1, 1.2, f64::NAN] {
            assert!(bce(a, 1.0).is_err());
        }
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert_eq!(g_from_logit(1e6), 1.0 - PROB_FLOOR);
        assert_eq!(g_from_logit(-1e6), PROB_FLOOR);
        assert_eq!(logit_curvature(0.0), 0.25);
    }

    #[test]
    fn logit_bce_agrees_with_probability_bce() {
        for a in [-5.0, -3.0, -0.1, 0.0, 0.4, 5.0] {
            for w in [-1.0, 0.0, 0.3, 1.0, 2.5] {
                let direct = bce(sigmoid(a), w).unwrap();
                assert!((bce_logit(a, w) - direct).abs() < 1e-9 * (1.0 + direct.abs()), "{a} {w}");
            }
        }
        // softplus(20) for a confident wrong prediction
        let sp = 20.0 + (-20f64).exp().ln_1p();
        assert!((bce_logit(20.0, 0.0) - sp).abs() < 1e-14);
        assert!((bce_logit(1e4, 0.0) + PROB_FLOOR.ln()).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn bce_is_affine_in_target(a in 0.001f64..0.999, b1 in -5.0f64..5.0, b2 in -5.0f64..5.0, t in 0.0f64..1.0) {
            let mixed = bce(a, t * b1 + (1.0 - t) * b2).unwrap();
            let split = t * bce(a, b1).unwrap() + (1.0 - t) * bce(a, b2).unwrap();
            proptest::prop_assert!((mixed - split).abs() <= 1e-12 * (1.0 + split.abs()));
        }

        #[test]
        fn sigmoid_reflects(x in -40.0f64..40.0) {
            proptest::prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
