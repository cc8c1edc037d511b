//! Win rate of a policy against the reference under the true preference.

use crate::data::WorldSpec;
use crate::diffusion::{sample, NoiseSchedule, NoisePredictor};
use crate::error::Result;
use crate::rng;

/// Sample one point per evaluation prompt from each model, with independent
/// seeds so that the comparison sees the whole output distribution rather
/// than two deterministic maps of the same noise. Prompt `j` uses condition
/// `j mod num_conditions`. A strictly better policy sample scores 1, an
/// identical pair 0.5, otherwise 0.
pub fn win_rate<P: NoisePredictor, Q: NoisePredictor>(
    policy: &P,
    reference: &Q,
    world: &WorldSpec,
    sched: &NoiseSchedule,
    prompts: usize,
    guidance: f64,
    seed: u64,
) -> Result<f64> {
    if prompts == 0 {
        return Err(crate::error::invalid("need at least one evaluation prompt"));
    }
    let mut score = 0.0;
    for j in 0..prompts {
        let c = j % world.num_conditions();
        let xp = sample(policy, c, sched, guidance, rng::derive(seed, 2 * j as u64));
        let xr = sample(reference, c, sched, guidance, rng::derive(seed, 2 * j as u64 + 1));
        score += if xp == xr {
            0.5
        } else {
            f64::from(world.true_preference(c, &xr, &xp)?)
        };
    }
    Ok(score / prompts as f64)
}
