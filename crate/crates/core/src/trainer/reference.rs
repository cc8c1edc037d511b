//! Pretraining of the frozen reference denoiser.
//!
//! The reference models the whole mixture: each training point carries a
//! condition drawn independently of the point, so every condition starts
//! out generating all modes and preference training has room to move mass.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerKind};
use crate::data::WorldSpec;
use crate::diffusion::{denoising_loss_grad, DenoiserShape, NoiseSchedule, ToyDenoiser};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of points routed through the null condition.
    pub cond_dropout: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 128,
            learning_rate: 2e-3,
            cond_dropout: 0.1,
        }
    }
}

/// Fit a denoiser to the mixture from a seeded initialization.
pub fn pretrain_reference(
    world: &WorldSpec,
    sched: &NoiseSchedule,
    shape: DenoiserShape,
    config: &PretrainConfig,
    seed: u64,
) -> Result<ToyDenoiser> {
    let mut model = ToyDenoiser::new(shape, &mut rng::stream(seed, purpose::INIT, 0));
    let mut opt = Optimizer::new(OptimizerKind::AdaptiveMoments, model.num_params());
    let mut grad = vec![0.0; model.num_params()];
    for step in 0..config.steps {
        let mut r = rng::stream(seed, purpose::PRETRAIN, step as u64);
        let batch: Vec<(Vec<f64>, usize)> = (0..config.batch_size)
            .map(|_| {
                let x = crate::data::draw_point(world, &mut r);
                (x, r.random_range(0..world.num_conditions()))
            })
            .collect();
        let draw_seed = rng::derive(seed, 0x5000_0000 + step as u64);
        let loss = denoising_loss_grad(&model, &batch, sched, draw_seed, config.cond_dropout, &mut grad)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: "reference pretraining".into(),
            });
        }
        opt.step(model.params_mut(), &grad, config.learning_rate);
    }
    Ok(model)
}

type CacheKey = (u64, u64);

/// Pretrained reference shared across runs in one process, keyed by seed and
/// a fingerprint of the world, schedule, shape and pretraining settings.
pub fn cached_reference(
    world: &WorldSpec,
    sched: &NoiseSchedule,
    shape: DenoiserShape,
    config: &PretrainConfig,
    seed: u64,
) -> Result<Arc<ToyDenoiser>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<ToyDenoiser>>>> = OnceLock::new();
    let fingerprint = serde_json::to_string(&(world, sched, shape, config)).unwrap_or_default();
    let key = (seed, fnv1a(fingerprint.as_bytes()));
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = cache.lock().expect("reference cache poisoned").get(&key) {
        return Ok(Arc::clone(m));
    }
    // Training happens outside the lock; a racing thread may duplicate work
    // but both produce the same parameters.
    let model = Arc::new(pretrain_reference(world, sched, shape, config, seed)?);
    let mut guard = cache.lock().expect("reference cache poisoned");
    Ok(Arc::clone(guard.entry(key).or_insert(model)))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{make_schedule, sample, ScheduleFamily};

    #[test]
    fn pretrained_samples_land_on_modes() {
        let world = WorldSpec::default();
        let sched = make_schedule(50, ScheduleFamily::Cosine).unwrap();
        let cfg = PretrainConfig { steps: 1500, ..Default::default() };
        let m = pretrain_reference(&world, &sched, DenoiserShape::default(), &cfg, 3).unwrap();
        let mut near = 0;
        let mut hits = [0usize; 4];
        for j in 0..400u64 {
            let x = sample(&m, (j % 4) as usize, &sched, 1.0, j);
            let nearest = (0..4)
                .min_by(|&a, &b| {
                    let d = |k: usize| crate::data::world::squared_distance(&x, &world.modes[k].center);
                    d(a).total_cmp(&d(b))
                })
                .unwrap();
            if crate::data::world::squared_distance(&x, &world.modes[nearest].center) < 1.0 {
                near += 1;
                hits[nearest] += 1;
            }
        }
        assert!(near > 320, "only {near}/400 samples near a mode");
        // Conditions are independent of the data, so every mode is generated.
        assert!(hits.iter().all(|&h| h > 40), "{hits:?}");
    }

    #[test]
    fn cache_returns_the_same_model() {
        let world = WorldSpec::default();
        let sched = make_schedule(10, ScheduleFamily::Linear).unwrap();
        let cfg = PretrainConfig { steps: 5, batch_size: 8, ..Default::default() };
        let a = cached_reference(&world, &sched, DenoiserShape::default(), &cfg, 1).unwrap();
        let b = cached_reference(&world, &sched, DenoiserShape::default(), &cfg, 1).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let direct = pretrain_reference(&world, &sched, DenoiserShape::default(), &cfg, 1).unwrap();
        assert_eq!(a.params(), direct.params());
    }
}
