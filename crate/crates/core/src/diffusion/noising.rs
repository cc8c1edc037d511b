use rand::Rng;

use super::denoiser::{NoisePredictor, Tape, ToyDenoiser};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

/// A noised point `x = alpha_t x0 + sigma_t eps` together with its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub x: Vec<f64>,
    pub x0: Vec<f64>,
    pub t: usize,
    pub eps: Vec<f64>,
}

impl LatentSample {
    pub fn new(x: Vec<f64>, x0: Vec<f64>, t: usize, eps: Vec<f64>, sched: &NoiseSchedule) -> Result<Self> {
        sched.check_t(t)?;
        if x0.len() != x.len() || eps.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: x0.len().max(eps.len()),
            });
        }
        let (a, s) = (sched.alpha(t), sched.sigma(t));
        let consistent = x
            .iter()
            .zip(x0.iter().zip(&eps))
            .all(|(xi, (x0i, ei))| xi.to_bits() == (a * x0i + s * ei).to_bits());
        if !consistent {
            return Err(crate::error::invalid("latent does not match alpha_t x0 + sigma_t eps"));
        }
        Ok(Self { x, x0, t, eps })
    }
}

pub(crate) fn noise_point(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Vec<f64> {
    let (a, s) = (sched.alpha(t), sched.sigma(t));
    x0.iter().zip(eps).map(|(x, e)| a * x + s * e).collect()
}

pub fn forward_noise(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<LatentSample> {
    sched.check_t(t)?;
    if eps.len() != x0.len() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            got: eps.len(),
        });
    }
    let x = noise_point(x0, t, eps, sched);
    LatentSample::new(x, x0.to_vec(), t, eps.to_vec(), sched)
}

struct NoiseDraw {
    t: usize,
    eps: Vec<f64>,
    drop_condition: bool,
}

fn draw(seed: u64, index: usize, dim: usize, sched: &NoiseSchedule, cond_dropout: f64) -> NoiseDraw {
    let mut r = rng::stream(seed, purpose::PRETRAIN, index as u64);
    let t = r.random_range(1..=sched.num_steps());
    let eps = rng::normal_vec(&mut r, dim);
    let u: f64 = r.random();
    NoiseDraw {
        t,
        eps,
        drop_condition: u < cond_dropout,
    }
}

/// Mean of `||eps_hat - eps||^2` over the batch, with `t ~ U{1..T}` and
/// `eps ~ N(0, I)` drawn per element from `seed`.
pub fn denoising_loss<P: NoisePredictor>(
    model: &P,
    batch: &[(Vec<f64>, usize)],
    sched: &NoiseSchedule,
    seed: u64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let dim = model.dim();
    let mut total = 0.0;
    for (i, (x0, c)) in batch.iter().enumerate() {
        let d = draw(seed, i, dim, sched, 0.0);
        let xt = noise_point(x0, d.t, &d.eps, sched);
        let pred = model.predict(&xt, sched.normalized(d.t), Some(*c));
        total += pred.iter().zip(&d.eps).map(|(p, e)| (p - e) * (p - e)).sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// Denoising loss and its gradient. With `cond_dropout > 0` a fraction of
/// the batch is routed through the null condition, which trains the
/// unconditional branch used by guidance.
pub fn denoising_loss_grad(
    model: &ToyDenoiser,
    batch: &[(Vec<f64>, usize)],
    sched: &NoiseSchedule,
    seed: u64,
    cond_dropout: f64,
    grad: &mut [f64],
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    let dim = model.shape().dim;
    let n = batch.len() as f64;
    let mut tape = Tape::default();
    let mut total = 0.0;
    let mut grad_out = vec![0.0; dim];
    for (i, (x0, c)) in batch.iter().enumerate() {
        let d = draw(seed, i, dim, sched, cond_dropout);
        let xt = noise_point(x0, d.t, &d.eps, sched);
        let cond = if d.drop_condition { None } else { Some(*c) };
        model.forward(&xt, sched.normalized(d.t), cond, &mut tape);
        for (k, (p, e)) in tape.output().iter().zip(&d.eps).enumerate() {
            total += (p - e) * (p - e);
            grad_out[k] = 2.0 * (p - e) / n;
        }
        model.backward(&tape, &grad_out, grad);
    }
    Ok(total / n)
}
