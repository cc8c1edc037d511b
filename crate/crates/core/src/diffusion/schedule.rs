use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleFamily {
    /// `alpha_t = 1 - t/T`, `sigma_t = t/T`.
    Linear,
    /// `alpha_t = cos(pi t / 2T)`, `sigma_t = sin(pi t / 2T)` (variance preserving).
    Cosine,
}

/// Noising coefficients `(alpha_t, sigma_t)` for `t = 0..=T`.
///
/// `x_t = alpha_t x_0 + sigma_t eps`, with `alpha_0 = sigma_T = 1` and
/// `alpha_T = sigma_0 = 0` enforced exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    num_steps: usize,
    family: ScheduleFamily,
    alphas: Vec<f64>,
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(num_steps: usize, family: ScheduleFamily) -> Result<Self> {
        if num_steps < 2 {
            return Err(invalid(format!("schedule needs T >= 2, got {num_steps}")));
        }
        let steps = num_steps as f64;
        let (mut alphas, mut sigmas): (Vec<f64>, Vec<f64>) = (0..=num_steps)
            .map(|t| {
                let u = t as f64 / steps;
                match family {
                    ScheduleFamily::Linear => (1.0 - u, u),
                    ScheduleFamily::Cosine => {
                        let angle = std::f64::consts::FRAC_PI_2 * u;
                        (angle.cos(), angle.sin())
                    }
                }
            })
            .unzip();
        alphas[0] = 1.0;
        sigmas[0] = 0.0;
        alphas[num_steps] = 0.0;
        sigmas[num_steps] = 1.0;
        Ok(Self {
            num_steps,
            family,
            alphas,
            sigmas,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn family(&self) -> ScheduleFamily {
        self.family
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t]
    }

    /// Timestep normalized to `[0, 1]`, as fed to the denoiser.
    pub fn normalized(&self, t: usize) -> f64 {
        t as f64 / self.num_steps as f64
    }

    pub(crate) fn check_t(&self, t: usize) -> Result<()> {
        if t > self.num_steps {
            return Err(Error::TimestepOutOfRange {
                t,
                max: self.num_steps,
            });
        }
        Ok(())
    }
}

pub fn make_schedule(num_steps: usize, family: ScheduleFamily) -> Result<NoiseSchedule> {
    NoiseSchedule::new(num_steps, family)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_two_steps() {
        let s = make_schedule(2, ScheduleFamily::Linear).unwrap();
        assert_eq!(s.alphas(), &[1.0, 0.5, 0.0]);
        assert_eq!(s.sigmas(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn rejects_short_schedules() {
        assert!(make_schedule(1, ScheduleFamily::Cosine).is_err());
        assert!(make_schedule(0, ScheduleFamily::Linear).is_err());
    }

    #[test]
    fn boundaries_and_monotonicity() {
        for family in [ScheduleFamily::Linear, ScheduleFamily::Cosine] {
            for t in [2, 3, 50, 1000] {
                let s = make_schedule(t, family).unwrap();
                assert_eq!(s.alpha(0), 1.0);
                assert_eq!(s.sigma(0), 0.0);
                assert_eq!(s.alpha(t), 0.0);
                assert_eq!(s.sigma(t), 1.0);
                for i in 0..t {
                    assert!(s.alphas()[i + 1] <= s.alphas()[i], "{family:?} T={t} i={i}");
                    assert!(s.sigmas()[i + 1] >= s.sigmas()[i], "{family:?} T={t} i={i}");
                }
            }
        }
    }
}
