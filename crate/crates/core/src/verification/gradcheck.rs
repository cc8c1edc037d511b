//! Finite-difference gradient checks.

use rand::seq::index;

use crate::rng::{self, purpose};

/// Pick up to `count` distinct parameter indices, always including the first
/// and last, in increasing order.
pub fn probe_coordinates(num_params: usize, count: usize, seed: u64) -> Vec<usize> {
    if num_params == 0 {
        return Vec::new();
    }
    if count >= num_params {
        return (0..num_params).collect();
    }
    let mut r = rng::stream(seed, purpose::INIT, 0x9c);
    let mut idx = index::sample(&mut r, num_params, count).into_vec();
    idx.push(0);
    idx.push(num_params - 1);
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// Result of comparing an analytic gradient to central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `|fd - analytic| / max(|fd|, |analytic|, floor)` over probe vectors.
    pub max_rel_error: f64,
    pub probes: usize,
}

/// Compare `grad` against central differences of `f` along coordinate
/// probes and a few random directions. Errors are measured on the vector of
/// probed entries, with the relative denominator floored at `floor`.
pub fn check_gradient<F>(params: &[f64], grad: &[f64], step: f64, coords: &[usize], directions: usize, seed: u64, floor: f64, mut f: F) -> GradCheck
where
    F: FnMut(&[f64]) -> f64,
{
    let mut p = params.to_vec();
    let mut fd = Vec::with_capacity(coords.len());
    let mut an = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = p[i];
        p[i] = orig + step;
        let up = f(&p);
        p[i] = orig - step;
        let down = f(&p);
        p[i] = orig;
        fd.push((up - down) / (2.0 * step));
        an.push(grad[i]);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = fd.iter().zip(&an).map(|(a, b)| a - b).collect();
    let mut worst = norm(&diff) / norm(&fd).max(norm(&an)).max(floor);

    let mut r = rng::stream(seed, purpose::INIT, 0x9d);
    for _ in 0..directions {
        let dir = rng::normal_vec(&mut r, params.len());
        let len = norm(&dir);
        let dir: Vec<f64> = dir.iter().map(|v| v / len).collect();
        let shifted = |s: f64| -> Vec<f64> { params.iter().zip(&dir).map(|(x, d)| x + s * d).collect() };
        let fdd = (f(&shifted(step)) - f(&shifted(-step))) / (2.0 * step);
        let and: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let rel = (fdd - and).abs() / fdd.abs().max(and.abs()).max(floor);
        worst = worst.max(rel);
    }
    GradCheck {
        max_rel_error: worst,
        probes: coords.len() + directions,
    }
}
