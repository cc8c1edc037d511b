//! A small conditional noise-prediction network with hand-written
//! reverse-mode gradients.
//!
//! Architecture: `[x_t, t/T, embed(c)] -> tanh(64) -> tanh(64) -> eps_hat`.
//! The condition embedding table has one extra row, the null condition,
//! which serves as the unconditional branch for guidance.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that predicts the noise in `x_t`. `cond = None` selects the
/// unconditional branch.
pub trait NoisePredictor {
    fn dim(&self) -> usize;
    fn predict(&self, x: &[f64], t_norm: f64, cond: Option<usize>) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserShape {
    pub dim: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Number of real conditions; the null condition is stored after them.
    pub num_conditions: usize,
}

impl Default for DenoiserShape {
    fn default() -> Self {
        Self {
            dim: 2,
            hidden: 64,
            embed_dim: 8,
            num_conditions: 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    embed: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    total: usize,
}

impl DenoiserShape {
    fn input_width(&self) -> usize {
        self.dim + 1 + self.embed_dim
    }

    fn layout(&self) -> Layout {
        let h = self.hidden;
        let embed = 0;
        let w1 = embed + (self.num_conditions + 1) * self.embed_dim;
        let b1 = w1 + h * self.input_width();
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + self.dim * h;
        let total = b3 + self.dim;
        Layout {
            embed,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            total,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total
    }

    pub fn null_condition(&self) -> usize {
        self.num_conditions
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
    cond_row: usize,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    shape: DenoiserShape,
    params: Vec<f64>,
}

impl ToyDenoiser {
    pub fn new<R: Rng + ?Sized>(shape: DenoiserShape, rng: &mut R) -> Self {
        let lay = shape.layout();
        let mut params = vec![0.0; lay.total];
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for p in &mut params[lay.embed..lay.w1] {
            *p = unit.sample(rng);
        }
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        let s1 = fan(shape.input_width());
        for p in &mut params[lay.w1..lay.b1] {
            *p = s1 * unit.sample(rng);
        }
        let s2 = fan(shape.hidden);
        for p in &mut params[lay.w2..lay.b2] {
            *p = s2 * unit.sample(rng);
        }
        for p in &mut params[lay.w3..lay.b3] {
            *p = s2 * unit.sample(rng);
        }
        Self { shape, params }
    }

    pub fn from_params(shape: DenoiserShape, params: Vec<f64>) -> Result<Self> {
        let expected = shape.num_params();
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> DenoiserShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Zero the output layer so the network predicts 0 everywhere.
    pub fn zero_output(&mut self) {
        let lay = self.shape.layout();
        self.params[lay.w3..lay.total].iter_mut().for_each(|p| *p = 0.0);
    }

    fn cond_row(&self, cond: Option<usize>) -> usize {
        match cond {
            Some(c) => {
                assert!(
                    c < self.shape.num_conditions,
                    "condition {c} out of range ({} conditions)",
                    self.shape.num_conditions
                );
                c
            }
            None => self.shape.null_condition(),
        }
    }

    pub fn forward(&self, x: &[f64], t_norm: f64, cond: Option<usize>, tape: &mut Tape) {
        let sh = self.shape;
        let lay = sh.layout();
        let p = &self.params;
        debug_assert_eq!(x.len(), sh.dim);
        let row = self.cond_row(cond);
        tape.cond_row = row;

        tape.input.clear();
        tape.input.extend_from_slice(x);
        tape.input.push(t_norm);
        let e = lay.embed + row * sh.embed_dim;
        tape.input.extend_from_slice(&p[e..e + sh.embed_dim]);

        let width = sh.input_width();
        tape.h1.clear();
        for (j, w) in p[lay.w1..lay.b1].chunks_exact(width).enumerate() {
            let z: f64 = w.iter().zip(&tape.input).map(|(a, b)| a * b).sum::<f64>() + p[lay.b1 + j];
            tape.h1.push(z.tanh());
        }
        tape.h2.clear();
        for (j, w) in p[lay.w2..lay.b2].chunks_exact(sh.hidden).enumerate() {
            let z: f64 = w.iter().zip(&tape.h1).map(|(a, b)| a * b).sum::<f64>() + p[lay.b2 + j];
            tape.h2.push(z.tanh());
        }
        tape.out.clear();
        for (k, w) in p[lay.w3..lay.b3].chunks_exact(sh.hidden).enumerate() {
            let z: f64 = w.iter().zip(&tape.h2).map(|(a, b)| a * b).sum::<f64>() + p[lay.b3 + k];
            tape.out.push(z);
        }
    }

    /// Accumulate `d(loss)/d(params)` into `grad`, given `grad_out = d(loss)/d(output)`
    /// for the forward pass recorded in `tape`.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64], grad: &mut [f64]) {
        let sh = self.shape;
        let lay = sh.layout();
        let p = &self.params;
        let h = sh.hidden;
        debug_assert_eq!(grad.len(), lay.total);

        let mut g2 = vec![0.0; h];
        for (k, &go) in grad_out.iter().enumerate() {
            grad[lay.b3 + k] += go;
            let w = &p[lay.w3 + k * h..lay.w3 + (k + 1) * h];
            let gw = &mut grad[lay.w3 + k * h..lay.w3 + (k + 1) * h];
            for j in 0..h {
                gw[j] += go * tape.h2[j];
                g2[j] += go * w[j];
            }
        }
        // through tanh
        for (g, a) in g2.iter_mut().zip(&tape.h2) {
            *g *= 1.0 - a * a;
        }
        let mut g1 = vec![0.0; h];
        for (j, &gz) in g2.iter().enumerate() {
            grad[lay.b2 + j] += gz;
            let w = &p[lay.w2 + j * h..lay.w2 + (j + 1) * h];
            let gw = &mut grad[lay.w2 + j * h..lay.w2 + (j + 1) * h];
            for i in 0..h {
                gw[i] += gz * tape.h1[i];
                g1[i] += gz * w[i];
            }
        }
        for (g, a) in g1.iter_mut().zip(&tape.h1) {
            *g *= 1.0 - a * a;
        }
        let width = sh.input_width();
        let emb_offset = sh.dim + 1;
        let e = lay.embed + tape.cond_row * sh.embed_dim;
        for (j, &gz) in g1.iter().enumerate() {
            grad[lay.b1 + j] += gz;
            let base = lay.w1 + j * width;
            for i in 0..width {
                grad[base + i] += gz * tape.input[i];
            }
            for k in 0..sh.embed_dim {
                grad[e + k] += gz * p[base + emb_offset + k];
            }
        }
    }
}

impl NoisePredictor for ToyDenoiser {
    fn dim(&self) -> usize {
        self.shape.dim
    }

    fn predict(&self, x: &[f64], t_norm: f64, cond: Option<usize>) -> Vec<f64> {
        let mut tape = Tape::default();
        self.forward(x, t_norm, cond, &mut tape);
        tape.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn small() -> DenoiserShape {
        DenoiserShape {
            dim: 2,
            hidden: 6,
            embed_dim: 3,
            num_conditions: 2,
        }
    }

    #[test]
    fn output_dimension_matches_input() {
        for dim in [1, 2, 3] {
            let shape = DenoiserShape { dim, ..small() };
            let net = ToyDenoiser::new(shape, &mut rng::stream(1, 0, 0));
            assert_eq!(net.predict(&vec![0.3; dim], 0.5, Some(1)).len(), dim);
            assert_eq!(net.predict(&vec![0.3; dim], 0.5, None).len(), dim);
        }
    }

    #[test]
    fn zero_output_predicts_zero() {
        let mut net = ToyDenoiser::new(small(), &mut rng::stream(2, 0, 0));
        net.zero_output();
        assert_eq!(net.predict(&[1.0, -2.0], 0.3, Some(0)), vec![0.0, 0.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let shape = small();
        let net = ToyDenoiser::new(shape, &mut rng::stream(3, 0, 0));
        let x = [0.4, -1.1];
        let weights = [0.7, -1.3];
        // scalar objective: weights . output
        let objective = |n: &ToyDenoiser, cond| {
            let out = n.predict(&x, 0.35, cond);
            out.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
        };
        for cond in [Some(1), None] {
            let mut tape = Tape::default();
            net.forward(&x, 0.35, cond, &mut tape);
            let mut grad = vec![0.0; net.num_params()];
            net.backward(&tape, &weights, &mut grad);
            let h = 1e-6;
            for i in 0..net.num_params() {
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                let fd = (objective(&plus, cond) - objective(&minus, cond)) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-7, "param {i}: fd {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn from_params_checks_length() {
        assert!(ToyDenoiser::from_params(small(), vec![0.0; 3]).is_err());
        let n = small().num_params();
        assert!(ToyDenoiser::from_params(small(), vec![0.0; n]).is_ok());
    }
}
