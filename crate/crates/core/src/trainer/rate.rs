//! Convergence experiments on the linear Bradley-Terry model.
//!
//! Each fit is the exact minimizer of an estimator's empirical loss, found
//! by Newton's method. The loss is convex in the parameters for any real
//! targets, so no learning-rate tuning is involved.

use std::sync::Arc;

use crate::data::LinearWorld;
use crate::error::{invalid, Error, Result};
use crate::preference::{
    objective, sigmoid, DeDpoForm, EstimatorKind, ImportanceWeight, LinearPreference, Point, PreferenceModel,
    PreferenceTriplet, PseudoLabel,
};
use crate::rng;

/// Least-squares slope of `ln error` against `ln n`.
pub fn fit_rate(ns: &[f64], errors: &[f64]) -> Result<f64> {
    if ns.len() != errors.len() {
        return Err(Error::DimensionMismatch {
            expected: ns.len(),
            got: errors.len(),
        });
    }
    if ns.len() < 4 {
        return Err(invalid(format!("need at least 4 points to fit a rate, got {}", ns.len())));
    }
    if ns.iter().chain(errors).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("sizes and errors must be positive"));
    }
    let xs: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("sizes must not all be equal"));
    }
    Ok(sxy / sxx)
}

/// Residual sums of squares of `y ~ a + b x` and `y ~ a + b x^4`.
pub fn fit_residuals(eps: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if eps.len() != y.len() || eps.len() < 3 {
        return Err(invalid("need at least 3 matching points"));
    }
    let ssr = |f: &dyn Fn(f64) -> f64| -> f64 {
        let xs: Vec<f64> = eps.iter().map(|e| f(*e)).collect();
        let k = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / k;
        let my = y.iter().sum::<f64>() / k;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = xs.iter().zip(y).map(|(x, v)| (x - mx) * (v - my)).sum();
        let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let a = my - b * mx;
        xs.iter().zip(y).map(|(x, v)| (v - a - b * x).powi(2)).sum()
    };
    Ok((ssr(&|e| e), ssr(&|e| e.powi(4))))
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        if a[piv][col].abs() < 1e-300 {
            return Err(invalid("singular Hessian"));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// Minimize an estimator's loss for the linear model by Newton's method.
/// The Hessian is formed from central differences of the exact gradient.
pub fn fit_linear(
    kind: EstimatorKind,
    labeled: &[Point<'_, ()>],
    unlabeled: &[Point<'_, ()>],
    weight: &ImportanceWeight,
) -> Result<Vec<f64>> {
    let dim = labeled.first().map(|p| p.triplet.dim()).ok_or(Error::EmptyBatch)?;
    let mut model = LinearPreference::zeros(dim);
    let grad_at = |theta: &[f64]| -> Result<Vec<f64>> {
        let m = LinearPreference { theta: theta.to_vec() };
        let mut g = vec![0.0; dim];
        objective(kind, DeDpoForm::Combined, &m, labeled, unlabeled, weight, Some(&mut g))?;
        Ok(g)
    };
    for _ in 0..100 {
        let g = grad_at(&model.theta)?;
        let h = 1e-5;
        let mut hess = vec![vec![0.0; dim]; dim];
        for j in 0..dim {
            let mut up = model.theta.clone();
            up[j] += h;
            let mut dn = model.theta.clone();
            dn[j] -= h;
            let (gu, gd) = (grad_at(&up)?, grad_at(&dn)?);
            for i in 0..dim {
                hess[i][j] = (gu[i] - gd[i]) / (2.0 * h);
            }
        }
        for i in 0..dim {
            for j in 0..i {
                let s = 0.5 * (hess[i][j] + hess[j][i]);
                hess[i][j] = s;
                hess[j][i] = s;
            }
        }
        let step = solve(hess, g)?;
        let norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
        model.params_mut().iter_mut().zip(&step).for_each(|(p, s)| *p -= s);
        if !model.theta.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step: 0,
                detail: "Newton iterate diverged".into(),
            });
        }
        if norm < 1e-12 * (1.0 + model.theta.iter().map(|v| v.abs()).sum::<f64>()) {
            break;
        }
    }
    Ok(model.theta)
}

fn points(ts: &[PreferenceTriplet], pseudo: impl Fn(&PreferenceTriplet) -> PseudoLabel) -> Vec<Point<'_, ()>> {
    ts.iter()
        .map(|t| Point {
            triplet: t,
            draw: (),
            pseudo: pseudo(t),
        })
        .collect()
}

pub fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Settings for rate and error-sensitivity experiments on [`LinearWorld`].
#[derive(Debug, Clone)]
pub struct LinearExperiment {
    pub world: LinearWorld,
    pub label_fraction: f64,
    /// Size of the fully labeled sample defining the target parameter, as a
    /// multiple of the largest `n` studied.
    pub target_multiple: usize,
    /// Scale of the systematic logit distortion per unit of injected error.
    pub distortion: f64,
    pub seed: u64,
}

impl Default for LinearExperiment {
    fn default() -> Self {
        Self {
            world: LinearWorld::default(),
            label_fraction: 0.25,
            target_multiple: 100,
            distortion: 15.0,
            seed: 0,
        }
    }
}

/// Direction of the systematic annotator distortion.
fn distortion_direction(t: &PreferenceTriplet) -> f64 {
    let phi0 = t.x1[0] - t.x0[0];
    let phi1 = t.x1[1] - t.x0[1];
    (phi0 + phi1).tanh()
}

impl LinearExperiment {
    /// Full-label empirical risk minimizer on `target_multiple * n_max` pairs.
    pub fn target_parameter(&self, n_max: usize) -> Result<Vec<f64>> {
        let n = self.target_multiple * n_max;
        let (triplets, _) = self.world.generate_labeled(n, rng::derive(self.seed, 0x7a26_e7)).map_err(|e| invalid(e.to_string()))?;
        let pts = points(&triplets, |_| PseudoLabel::unused());
        fit_linear(EstimatorKind::FullLabelDpo, &pts, &[], &ImportanceWeight::FromCounts)
    }

    /// Annotator output with injected error `eps`: the true logit shifted by
    /// `eps * distortion * tanh(phi_0 + phi_1)`.
    pub fn annotate(&self, t: &PreferenceTriplet, eps: f64) -> f64 {
        sigmoid(self.world.logit(t) + eps * self.distortion * distortion_direction(t))
    }

    /// Importance weight misestimated at a matching rate: the population
    /// ratio scaled by `1 + eps * distortion / 2 * sign(direction)`.
    pub fn weight(&self, n: usize, n_l: usize, eps: f64) -> ImportanceWeight {
        let base = n as f64 / n_l as f64;
        if eps == 0.0 {
            return ImportanceWeight::FromCounts;
        }
        let k = eps * self.distortion / 2.0;
        ImportanceWeight::Function(Arc::new(move |t: &PreferenceTriplet| {
            base * (1.0 + k * distortion_direction(t).signum())
        }))
    }

    /// Fit one estimator on a fresh sample of `n` pairs and return
    /// `|theta_hat - target|^2`.
    pub fn run(&self, kind: EstimatorKind, n: usize, eps: f64, replicate: u64, target: &[f64]) -> Result<f64> {
        let seed = rng::derive(rng::derive(self.seed, n as u64), replicate);
        let data = self.world.generate(n, self.label_fraction, seed)?;
        let (lab, unl) = data.partition();
        let annotate = |t: &PreferenceTriplet| PseudoLabel::new(self.annotate(t, eps));
        let (pl, pu) = (points(&lab, annotate), points(&unl, annotate));
        let weight = match kind {
            EstimatorKind::DeDpo => self.weight(n, lab.len(), eps),
            _ => ImportanceWeight::FromCounts,
        };
        let theta = match kind {
            EstimatorKind::FullLabelDpo => {
                let all: Vec<PreferenceTriplet> = self.world.generate_labeled(n, seed)?.0;
                fit_linear(kind, &points(&all, |_| PseudoLabel::unused()), &[], &weight)?
            }
            _ => fit_linear(kind, &pl, &pu, &weight)?,
        };
        Ok(squared_error(&theta, target))
    }

    /// Mean squared parameter error over `replicates` samples for each `n`.
    pub fn error_curve(&self, kind: EstimatorKind, ns: &[usize], eps: f64, replicates: u64) -> Result<Vec<f64>> {
        let n_max = *ns.iter().max().ok_or_else(|| invalid("empty size grid"))?;
        let target = self.target_parameter(n_max)?;
        ns.iter()
            .map(|&n| {
                let total: f64 = (0..replicates).map(|r| self.run(kind, n, eps, r, &target)).sum::<Result<f64>>()?;
                Ok(total / replicates as f64)
            })
            .collect()
    }

    /// Mean squared parameter error at fixed `n` for each injected error.
    pub fn sensitivity(&self, kind: EstimatorKind, n: usize, eps_grid: &[f64], replicates: u64, target: &[f64]) -> Result<Vec<f64>> {
        eps_grid
            .iter()
            .map(|&eps| {
                let total: f64 = (0..replicates).map(|r| self.run(kind, n, eps, r, target)).sum::<Result<f64>>()?;
                Ok(total / replicates as f64)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let ns = [250.0, 500.0, 1000.0, 2000.0, 4000.0];
        let inv: Vec<f64> = ns.iter().map(|n| 3.7 / n).collect();
        assert!((fit_rate(&ns, &inv).unwrap() + 1.0).abs() < 1e-9);
        assert!(fit_rate(&ns, &[0.2; 5]).unwrap().abs() < 1e-12);
        assert!(fit_rate(&ns[..3], &inv[..3]).is_err());
        assert!(fit_rate(&ns, &[1.0, 0.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn residuals_pick_the_generating_shape() {
        let e = [0.0, 0.05, 0.1, 0.2];
        let lin: Vec<f64> = e.iter().map(|x| 1.0 + 2.0 * x).collect();
        let (l, q) = fit_residuals(&e, &lin).unwrap();
        assert!(l < 1e-20 && q > l);
        let quart: Vec<f64> = e.iter().map(|x| 1.0 + 50.0 * x.powi(4)).collect();
        let (l, q) = fit_residuals(&e, &quart).unwrap();
        assert!(q < 1e-20 && l > q);
    }

    #[test]
    fn newton_solves_a_logistic_regression() {
        let world = LinearWorld::default();
        let (ts, _) = world.generate_labeled(3000, 5).unwrap();
        let pts = points(&ts, |_| PseudoLabel::unused());
        let theta = fit_linear(EstimatorKind::FullLabelDpo, &pts, &[], &ImportanceWeight::FromCounts).unwrap();
        let m = LinearPreference { theta: theta.clone() };
        let mut g = vec![0.0; 3];
        objective(EstimatorKind::FullLabelDpo, DeDpoForm::Combined, &m, &pts, &[], &ImportanceWeight::FromCounts, Some(&mut g)).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10), "{g:?}");
        assert!(squared_error(&theta, &world.theta) < 0.02, "{theta:?}");
    }

    #[test]
    fn perfect_soft_annotator_matches_truth() {
        let x = LinearExperiment::default();
        let t = PreferenceTriplet::new(0, 0, vec![0.1, 0.2, 0.3], vec![-0.4, 0.5, 1.0], None).unwrap();
        assert_eq!(x.annotate(&t, 0.0), x.world.probability(&t));
        assert!(matches!(x.weight(100, 25, 0.0), ImportanceWeight::FromCounts));
    }
}
