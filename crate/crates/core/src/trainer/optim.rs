use serde::{Deserialize, Serialize};

/// First-order update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    #[serde(alias = "adam")]
    AdaptiveMoments,
}

/// Optimizer state for one parameter vector.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd,
    Adam(Adam),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, num_params: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::AdaptiveMoments => Optimizer::Adam(Adam::new(num_params)),
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam(a) => a.step(params, grad, lr),
        }
    }
}

/// Adam with bias correction and no weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Linear warmup over `warmup` steps, constant afterwards.
pub fn warmup_lr(base: f64, step: usize, warmup: usize) -> f64 {
    if warmup == 0 || step >= warmup {
        base
    } else {
        base * (step + 1) as f64 / warmup as f64
    }
}

/// Piecewise-constant schedule: linear warmup, then the base rate multiplied
/// by `factor` once for every milestone (a fraction of `total` steps) already
/// passed.
pub fn piecewise_lr(base: f64, step: usize, total: usize, warmup: usize, milestones: &[f64], factor: f64) -> f64 {
    let progress = step as f64 / total.max(1) as f64;
    let passed = milestones.iter().filter(|&&m| progress >= m).count();
    warmup_lr(base, step, warmup) * factor.powi(passed as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_drops_at_milestones() {
        let ms = [0.5, 0.75];
        assert_eq!(piecewise_lr(1.0, 0, 100, 4, &ms, 0.1), 0.25);
        assert_eq!(piecewise_lr(1.0, 49, 100, 4, &ms, 0.1), 1.0);
        assert!((piecewise_lr(1.0, 50, 100, 4, &ms, 0.1) - 0.1).abs() < 1e-15);
        assert!((piecewise_lr(1.0, 99, 100, 4, &ms, 0.1) - 0.01).abs() < 1e-15);
        assert_eq!(piecewise_lr(1.0, 99, 100, 4, &[], 0.1), 1.0);
    }

    #[test]
    fn first_adam_step_has_size_lr() {
        let mut a = Adam::new(2);
        let mut p = vec![1.0, -1.0];
        a.step(&mut p, &[0.3, -5.0], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut o = Optimizer::new(OptimizerKind::AdaptiveMoments, 2);
        let mut p = vec![3.0, -2.0];
        for _ in 0..5000 {
            let g = vec![2.0 * (p[0] - 1.0), 4.0 * (p[1] + 0.5)];
            o.step(&mut p, &g, 0.01);
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn sgd_and_warmup() {
        let mut o = Optimizer::new(OptimizerKind::Sgd, 1);
        let mut p = vec![1.0];
        o.step(&mut p, &[2.0], 0.25);
        assert_eq!(p, vec![0.5]);
        assert_eq!(warmup_lr(1.0, 0, 10), 0.1);
        assert_eq!(warmup_lr(1.0, 9, 10), 1.0);
        assert_eq!(warmup_lr(1.0, 50, 10), 1.0);
        assert_eq!(warmup_lr(2.0, 0, 0), 2.0);
    }
}
