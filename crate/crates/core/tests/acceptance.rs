//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run alone with `cargo test --release --test acceptance`. The two training
//! matrices dominate the runtime (about 105 diffusion training runs).

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dedpo::preference::EstimatorKind;
use dedpo::verification::{
    check_gradients, check_combined_target_identity, check_quartic, check_rate, check_reductions, check_robustness,
    check_self_training_gate, check_strong_convexity, check_unbiasedness, check_unlabeled_scaling,
    run_robustness_matrix, MatrixCell, RateConfig, RobustnessConfig, SensitivityConfig, UnbiasednessConfig,
    VerificationResult,
};

use common::{run, snapshot, write_config, TINY};

const SEED: u64 = 0;

struct Line {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn from_results(id: usize, name: &'static str, results: &[&VerificationResult], elapsed: Duration, limit: Option<Duration>) -> Line {
    let mut passed = results.iter().all(|r| r.passed);
    let mut detail = results
        .iter()
        .map(|r| format!("{} = {:.4e} vs {:.1e} ({})", r.check_name, r.statistic, r.tolerance, r.detail))
        .collect::<Vec<_>>()
        .join(" | ");
    detail.push_str(&format!(" | {:.1} s", elapsed.as_secs_f64()));
    if let Some(limit) = limit {
        if elapsed > limit {
            passed = false;
            detail.push_str(&format!(" exceeds the {} s budget", limit.as_secs()));
        }
    }
    Line { id, name, passed, detail }
}

fn failed(id: usize, name: &'static str, e: impl std::fmt::Display) -> Line {
    Line {
        id,
        name,
        passed: false,
        detail: format!("error: {e}"),
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn single(
    id: usize,
    name: &'static str,
    limit: Option<Duration>,
    f: impl FnOnce() -> dedpo::Result<VerificationResult>,
) -> Line {
    match timed(f) {
        (Ok(r), t) => from_results(id, name, &[&r], t, limit),
        (Err(e), _) => failed(id, name, e),
    }
}

/// Training runs behind the robustness and scaling criteria: every
/// estimator at 1250/3750, plus the two annotator-based estimators at
/// 8x and 30x unlabeled data.
fn matrices() -> dedpo::Result<(Vec<MatrixCell>, Duration)> {
    let base = RobustnessConfig {
        seeds: (0..15).collect(),
        n_labeled: 1250,
        accuracies: vec![0.8],
        ..RobustnessConfig::default()
    };
    let ((primary, extra), t) = timed(|| {
        let primary = run_robustness_matrix(&RobustnessConfig {
            unlabeled_multiples: vec![3],
            estimators: vec![EstimatorKind::FullLabelDpo, EstimatorKind::DeDpo, EstimatorKind::OutcomeRegression],
            ..base.clone()
        });
        let extra = run_robustness_matrix(&RobustnessConfig {
            unlabeled_multiples: vec![8, 30],
            estimators: vec![EstimatorKind::DeDpo, EstimatorKind::OutcomeRegression],
            ..base.clone()
        });
        (primary, extra)
    });
    let mut cells = primary?;
    cells.extend(extra?);
    Ok((cells, t))
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = write_config(dir.path(), TINY);
    let commands: [&[&str]; 4] = [
        &["generate"],
        &["train"],
        &["verify", "--check", "prop2,convexity,reductions,self_training"],
        &["sweep", "--jobs", "2"],
    ];
    let mut compared = 0;
    for args in commands {
        let a = dir.path().join(format!("{}-a", args[0]));
        let b = dir.path().join(format!("{}-b", args[0]));
        for out in [&a, &b] {
            let o = run(args, &cfg, out);
            if !o.status.success() {
                return Err(format!("{args:?} exited with {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
            }
        }
        let (sa, sb) = (snapshot(&a), snapshot(&b));
        if sa != sb {
            let differing: Vec<&str> = sa
                .iter()
                .zip(&sb)
                .filter(|(x, y)| x != y)
                .map(|(x, _)| x.0.as_str())
                .collect();
            return Err(format!("{} differs between reruns: {differing:?}", args[0]));
        }
        compared += sa.len();
    }
    let trace = fs::read_to_string(dir.path().join("train-a/trace.csv")).map_err(|e| e.to_string())?;
    Ok(format!("{compared} output files byte-identical across reruns of 4 commands ({} trace rows)", trace.lines().count() - 1))
}

fn main() -> ExitCode {
    let mut lines = Vec::new();

    lines.push(single(1, "combined-target identity", Some(Duration::from_secs(30)), || {
        check_combined_target_identity(1000, SEED)
    }));
    lines.push(single(2, "unbiasedness", Some(Duration::from_secs(180)), || {
        check_unbiasedness(&UnbiasednessConfig {
            accuracies: vec![0.5, 0.8, 1.0],
            n_resamples: 2000,
            pool_size: 400,
            label_fraction: 0.25,
            seed: SEED,
            ..UnbiasednessConfig::default()
        })
    }));
    lines.push(single(3, "degenerate reductions", None, || check_reductions(SEED)));
    lines.push(single(4, "strong convexity", None, || check_strong_convexity(&[4.0], 2001)));
    lines.push(single(5, "gradient checks", None, || check_gradients(5, SEED)));

    match matrices() {
        Ok((cells, t)) => {
            match check_robustness(&cells, 0.8, 3, 0.05) {
                Ok(r) => lines.push(from_results(6, "robustness ordering", &[&r], t, Some(Duration::from_secs(1200)))),
                Err(e) => lines.push(failed(6, "robustness ordering", e)),
            }
            match check_unlabeled_scaling(&cells, 0.8, &[3, 8, 30]) {
                Ok(r) => lines.push(from_results(7, "unlabeled-size stability", &[&r], t, None)),
                Err(e) => lines.push(failed(7, "unlabeled-size stability", e)),
            }
        }
        Err(e) => {
            lines.push(failed(6, "robustness ordering", &e));
            lines.push(failed(7, "unlabeled-size stability", &e));
        }
    }

    let (rate, t) = timed(|| (check_rate(&RateConfig::default()), check_quartic(&SensitivityConfig::default())));
    lines.push(match rate {
        (Ok(a), Ok(b)) => from_results(8, "linear-model rates", &[&a, &b], t, None),
        (Err(e), _) | (_, Err(e)) => failed(8, "linear-model rates", e),
    });

    let (det, t) = timed(determinism);
    lines.push(match det {
        Ok(detail) => Line {
            id: 9,
            name: "determinism",
            passed: true,
            detail: format!("{detail} | {:.1} s", t.as_secs_f64()),
        },
        Err(e) => failed(9, "determinism", e),
    });

    lines.push(single(10, "self-training gate", None, || {
        check_self_training_gate(&[0.51, 0.6, 0.75, 0.9, 0.99, 1.0], SEED)
    }));

    println!();
    for l in &lines {
        println!("{} criterion {:>2} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.id, l.name, l.detail);
    }
    let n_failed = lines.iter().filter(|l| !l.passed).count();
    println!("\nacceptance: {} of {} criteria passed", lines.len() - n_failed, lines.len());
    if n_failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
