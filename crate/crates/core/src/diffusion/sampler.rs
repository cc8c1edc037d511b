use super::denoiser::NoisePredictor;
use super::schedule::NoiseSchedule;
use crate::rng::{self, purpose};

/// Classifier-free guidance: `eps_u + gamma (eps_c - eps_u)`.
///
/// `gamma = 1` returns the conditional prediction and `gamma = 0` the
/// unconditional one, bit for bit. Negative `gamma` is allowed and pushes
/// away from the condition.
pub fn cfg_predict<P: NoisePredictor>(model: &P, x: &[f64], t_norm: f64, cond: usize, gamma: f64) -> Vec<f64> {
    if gamma == 1.0 {
        return model.predict(x, t_norm, Some(cond));
    }
    let uncond = model.predict(x, t_norm, None);
    if gamma == 0.0 {
        return uncond;
    }
    let cond_pred = model.predict(x, t_norm, Some(cond));
    uncond
        .iter()
        .zip(&cond_pred)
        .map(|(u, c)| u + gamma * (c - u))
        .collect()
}

/// Bound on the predicted clean point during sampling.
pub const X0_CLIP: f64 = 6.0;

/// Ancestral sampler for the reverse chain `x_T -> x_0`.
///
/// `x_T` carries no information about `x_0` when `alpha_T = 0`, so the chain
/// starts at `x_{T-1} = sigma_{T-1} z` and drops the `alpha_{T-1} x_0` term.
/// Each step forms `x0_hat = (x_t - sigma_t eps_hat) / alpha_t`, clips it
/// to `[-X0_CLIP, X0_CLIP]`, and samples the Gaussian posterior
/// `q(x_{t-1} | x_t, x0_hat)`.
pub fn sample<P: NoisePredictor>(model: &P, cond: usize, sched: &NoiseSchedule, gamma: f64, seed: u64) -> Vec<f64> {
    let dim = model.dim();
    let mut r = rng::stream(seed, purpose::SAMPLE, 0);
    let top = sched.num_steps() - 1;
    let mut x: Vec<f64> = rng::normal_vec(&mut r, dim)
        .into_iter()
        .map(|z| sched.sigma(top) * z)
        .collect();
    for t in (1..=top).rev() {
        let s = t - 1;
        let eps_hat = cfg_predict(model, &x, sched.normalized(t), cond, gamma);
        let (a_t, s_t) = (sched.alpha(t), sched.sigma(t));
        let (a_s, s_s) = (sched.alpha(s), sched.sigma(s));
        let a_ts = a_t / a_s;
        let var_ts = (s_t * s_t - a_ts * a_ts * s_s * s_s).max(0.0);
        let coef_x = a_ts * s_s * s_s / (s_t * s_t);
        let coef_x0 = a_s * var_ts / (s_t * s_t);
        let std = (var_ts * s_s * s_s / (s_t * s_t)).sqrt();
        let z = rng::normal_vec(&mut r, dim);
        for k in 0..dim {
            let x0_hat = ((x[k] - s_t * eps_hat[k]) / a_t).clamp(-X0_CLIP, X0_CLIP);
            x[k] = coef_x * x[k] + coef_x0 * x0_hat + std * z[k];
        }
    }
    x
}
