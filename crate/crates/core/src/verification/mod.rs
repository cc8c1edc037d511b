//! Executable checks of the estimator theory: the three-term/combined
//! identity, unbiasedness over random splits, curvature of the logit loss,
//! gradient correctness, degenerate reductions, the self-training gate, rate
//! experiments on a linear model, and the robustness experiments on the
//! diffusion toy.
//!
//! Every check is deterministic given its seed and returns a
//! [`VerificationResult`].

pub mod checks;
pub mod gradcheck;
pub mod robustness;
pub mod scaling;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use checks::{
    check_bounded_logits, check_gradients, check_combined_target_identity, check_reductions, check_self_training_gate,
    check_strong_convexity, check_unbiasedness, unbiasedness_table, UnbiasednessConfig, UnbiasednessRow,
};
pub use gradcheck::{check_gradient, probe_coordinates, GradCheck};
pub use robustness::{
    check_robustness, check_unlabeled_scaling, paired_one_sided_p, run_robustness_matrix, run_sweep, MatrixCell,
    RobustnessConfig, SweepRun,
};
pub use scaling::{check_quartic, check_rate, RateConfig, SensitivityConfig};

/// Outcome of one check. `statistic` is compared against `tolerance` in the
/// direction given by `comparison`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub check_name: String,
    pub passed: bool,
    pub statistic: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub n_trials: usize,
    pub detail: String,
}

/// How a statistic is judged against its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|statistic| <= tolerance`
    AbsAtMost,
    /// `statistic <= tolerance`
    AtMost,
    /// `statistic >= tolerance`
    AtLeast,
}

impl Comparison {
    pub fn holds(self, statistic: f64, tolerance: f64) -> bool {
        match self {
            Comparison::AbsAtMost => statistic.abs() <= tolerance,
            Comparison::AtMost => statistic <= tolerance,
            Comparison::AtLeast => statistic >= tolerance,
        }
    }
}

impl VerificationResult {
    /// Build a result whose pass flag follows from the statistic alone.
    pub fn judged(
        name: &str,
        statistic: f64,
        tolerance: f64,
        comparison: Comparison,
        n_trials: usize,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            check_name: name.to_string(),
            passed: comparison.holds(statistic, tolerance),
            statistic,
            tolerance,
            comparison,
            n_trials,
            detail: detail.into(),
        }
    }

    /// Fail the result (keeping its statistic) when an extra condition does
    /// not hold, noting why.
    pub fn require(mut self, condition: bool, why: &str) -> Self {
        if !condition {
            self.passed = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str(why);
        }
        self
    }
}

/// Write the `check,passed,statistic,tolerance` summary table.
pub fn write_summary_csv<W: Write>(mut w: W, results: &[VerificationResult]) -> Result<()> {
    writeln!(w, "check,passed,statistic,tolerance")?;
    for r in results {
        writeln!(w, "{},{},{:e},{:e}", r.check_name, r.passed, r.statistic, r.tolerance)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flag_follows_the_comparison() {
        assert!(VerificationResult::judged("a", -0.5, 1.0, Comparison::AbsAtMost, 1, "").passed);
        assert!(!VerificationResult::judged("a", -1.5, 1.0, Comparison::AbsAtMost, 1, "").passed);
        assert!(VerificationResult::judged("b", -0.8, -0.7, Comparison::AtMost, 1, "").passed);
        assert!(!VerificationResult::judged("c", -1e-8, -1e-9, Comparison::AtLeast, 1, "").passed);
        let r = VerificationResult::judged("d", 0.0, 1.0, Comparison::AtMost, 1, "").require(false, "extra");
        assert!(!r.passed);
        assert_eq!(r.detail, "extra");
    }

    #[test]
    fn summary_csv_layout() {
        let rs = vec![VerificationResult::judged("prop2", 1e-13, 1e-10, Comparison::AtMost, 1000, "")];
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &rs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "check,passed,statistic,tolerance\nprop2,true,1e-13,1e-10\n");
    }
}
