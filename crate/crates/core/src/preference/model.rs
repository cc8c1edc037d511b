use std::sync::Arc;

use rand::Rng;

use super::triplet::PreferenceTriplet;
use crate::diffusion::noising::noise_point;
use crate::diffusion::{NoiseSchedule, Tape, ToyDenoiser};
use crate::rng;

/// A parametric implicit classifier: maps a triplet (and a draw of whatever
/// randomness the model needs) to a logit whose sigmoid is the predicted
/// probability that `x1` is preferred.
pub trait PreferenceModel {
    type Draw: Clone + Send + Sync;
    type Tape: Default;

    fn num_params(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn draw<R: Rng + ?Sized>(&self, triplet: &PreferenceTriplet, rng: &mut R) -> Self::Draw;

    fn logit(&self, triplet: &PreferenceTriplet, draw: &Self::Draw) -> f64 {
        let mut tape = Self::Tape::default();
        self.logit_taped(triplet, draw, &mut tape)
    }

    fn logit_taped(&self, triplet: &PreferenceTriplet, draw: &Self::Draw, tape: &mut Self::Tape) -> f64;

    /// Add `scale * d logit / d params` to `grad`.
    fn backprop(&self, triplet: &PreferenceTriplet, draw: &Self::Draw, tape: &Self::Tape, scale: f64, grad: &mut [f64]);
}

/// Timestep and the two noise draws used to noise `x0` and `x1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginDraw {
    pub t: usize,
    pub eps0: Vec<f64>,
    pub eps1: Vec<f64>,
}

/// A triplet together with the exact draws that noise its members.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginSample {
    pub triplet: PreferenceTriplet,
    pub draw: MarginDraw,
}

fn sq_err(pred: &[f64], eps: &[f64]) -> f64 {
    pred.iter().zip(eps).map(|(p, e)| (e - p) * (e - p)).sum()
}

/// The diffusion preference logit
///
/// `-beta [ (|eps1 - eps_theta(x1_t)|^2 - |eps1 - eps_ref(x1_t)|^2)
///        - (|eps0 - eps_theta(x0_t)|^2 - |eps0 - eps_ref(x0_t)|^2) ]`,
///
/// positive when the policy denoises `x1` better (relative to the
/// reference) than `x0`. Both networks see the condition `c`.
pub fn dpo_margin(
    policy: &ToyDenoiser,
    reference: &ToyDenoiser,
    ms: &MarginSample,
    sched: &NoiseSchedule,
    beta: f64,
) -> f64 {
    let model = DiffusionDpo::new(policy.clone(), Arc::new(reference.clone()), sched.clone(), beta);
    model.logit(&ms.triplet, &ms.draw)
}

/// Trainable denoiser against a frozen reference.
#[derive(Debug, Clone)]
pub struct DiffusionDpo {
    pub policy: ToyDenoiser,
    pub reference: Arc<ToyDenoiser>,
    pub schedule: NoiseSchedule,
    pub beta: f64,
}

#[derive(Debug, Default)]
pub struct DiffusionTape {
    tape0: Tape,
    tape1: Tape,
}

impl DiffusionDpo {
    pub fn new(policy: ToyDenoiser, reference: Arc<ToyDenoiser>, schedule: NoiseSchedule, beta: f64) -> Self {
        assert!(beta > 0.0, "beta must be positive");
        Self {
            policy,
            reference,
            schedule,
            beta,
        }
    }

    /// Starts from a copy of the reference.
    pub fn from_reference(reference: Arc<ToyDenoiser>, schedule: NoiseSchedule, beta: f64) -> Self {
        Self::new((*reference).clone(), reference, schedule, beta)
    }

    pub fn with_policy(&self, policy: ToyDenoiser) -> Self {
        Self {
            policy,
            reference: Arc::clone(&self.reference),
            schedule: self.schedule.clone(),
            beta: self.beta,
        }
    }
}

impl PreferenceModel for DiffusionDpo {
    type Draw = MarginDraw;
    type Tape = DiffusionTape;

    fn num_params(&self) -> usize {
        self.policy.num_params()
    }

    fn params(&self) -> &[f64] {
        self.policy.params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.policy.params_mut()
    }

    fn draw<R: Rng + ?Sized>(&self, triplet: &PreferenceTriplet, r: &mut R) -> MarginDraw {
        let t = r.random_range(1..=self.schedule.num_steps());
        let eps0 = rng::normal_vec(r, triplet.dim());
        let eps1 = rng::normal_vec(r, triplet.dim());
        MarginDraw { t, eps0, eps1 }
    }

    fn logit_taped(&self, tr: &PreferenceTriplet, d: &MarginDraw, tape: &mut DiffusionTape) -> f64 {
        let s = &self.schedule;
        let tn = s.normalized(d.t);
        let x0 = noise_point(&tr.x0, d.t, &d.eps0, s);
        let x1 = noise_point(&tr.x1, d.t, &d.eps1, s);
        let c = Some(tr.c);
        self.policy.forward(&x0, tn, c, &mut tape.tape0);
        self.policy.forward(&x1, tn, c, &mut tape.tape1);
        let mut ref_tape = Tape::default();
        self.reference.forward(&x0, tn, c, &mut ref_tape);
        let ref0 = sq_err(ref_tape.output(), &d.eps0);
        self.reference.forward(&x1, tn, c, &mut ref_tape);
        let ref1 = sq_err(ref_tape.output(), &d.eps1);
        let pol0 = sq_err(tape.tape0.output(), &d.eps0);
        let pol1 = sq_err(tape.tape1.output(), &d.eps1);
        -self.beta * ((pol1 - ref1) - (pol0 - ref0))
    }

    fn backprop(&self, _: &PreferenceTriplet, d: &MarginDraw, tape: &DiffusionTape, scale: f64, grad: &mut [f64]) {
        // d/d out of -beta * (|eps1 - out1|^2 - |eps0 - out0|^2)
        let k = scale * self.beta * 2.0;
        let g1: Vec<f64> = tape.tape1.output().iter().zip(&d.eps1).map(|(o, e)| -k * (o - e)).collect();
        let g0: Vec<f64> = tape.tape0.output().iter().zip(&d.eps0).map(|(o, e)| k * (o - e)).collect();
        self.policy.backward(&tape.tape1, &g1, grad);
        self.policy.backward(&tape.tape0, &g0, grad);
    }
}

/// Linear Bradley-Terry classifier: `logit = theta . (x1 - x0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPreference {
    pub theta: Vec<f64>,
}

impl LinearPreference {
    pub fn zeros(dim: usize) -> Self {
        Self { theta: vec![0.0; dim] }
    }
}

impl PreferenceModel for LinearPreference {
    type Draw = ();
    type Tape = ();

    fn num_params(&self) -> usize {
        self.theta.len()
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn draw<R: Rng + ?Sized>(&self, _: &PreferenceTriplet, _: &mut R) {}

    fn logit_taped(&self, t: &PreferenceTriplet, _: &(), _: &mut ()) -> f64 {
        self.theta
            .iter()
            .zip(t.x0.iter().zip(&t.x1))
            .map(|(w, (a, b))| w * (b - a))
            .sum()
    }

    fn backprop(&self, t: &PreferenceTriplet, _: &(), _: &(), scale: f64, grad: &mut [f64]) {
        for (g, (a, b)) in grad.iter_mut().zip(t.x0.iter().zip(&t.x1)) {
            *g += scale * (b - a);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{make_schedule, DenoiserShape, ScheduleFamily};
    use crate::rng::{self, purpose};

    fn setup(seed: u64) -> (ToyDenoiser, ToyDenoiser, NoiseSchedule, MarginSample) {
        let shape = DenoiserShape::default();
        let policy = ToyDenoiser::new(shape, &mut rng::stream(seed, purpose::INIT, 0));
        let reference = ToyDenoiser::new(shape, &mut rng::stream(seed, purpose::INIT, 1));
        let sched = make_schedule(50, ScheduleFamily::Cosine).unwrap();
        let triplet = PreferenceTriplet::new(0, 1, vec![1.5, -0.5], vec![-2.0, 2.2], Some(1)).unwrap();
        let draw = MarginDraw {
            t: 17,
            eps0: vec![0.3, -1.2],
            eps1: vec![0.8, 0.1],
        };
        (policy, reference, sched, MarginSample { triplet, draw })
    }

    #[test]
    fn identical_parameters_give_zero_margin() {
        let (policy, _, sched, ms) = setup(1);
        assert_eq!(dpo_margin(&policy, &policy, &ms, &sched, 3.0), 0.0);
    }

    #[test]
    fn margin_is_linear_in_beta() {
        let (policy, reference, sched, ms) = setup(2);
        let m1 = dpo_margin(&policy, &reference, &ms, &sched, 1.5);
        let m2 = dpo_margin(&policy, &reference, &ms, &sched, 3.0);
        assert_eq!(m2, 2.0 * m1);
    }

    #[test]
    fn swapping_members_negates_margin() {
        let (policy, reference, sched, ms) = setup(3);
        let swapped = MarginSample {
            triplet: ms.triplet.swapped(),
            draw: MarginDraw {
                t: ms.draw.t,
                eps0: ms.draw.eps1.clone(),
                eps1: ms.draw.eps0.clone(),
            },
        };
        let a = dpo_margin(&policy, &reference, &ms, &sched, 2.0);
        let b = dpo_margin(&policy, &reference, &swapped, &sched, 2.0);
        assert_eq!(a, -b);
    }

    #[test]
    fn one_parameter_linear_denoiser_matches_hand_expansion() {
        // dim 1, hidden 1, embed 1, one condition. Zero every weight except
        // the output bias, so eps_theta(x) = b and eps_ref(x) = b_ref.
        let shape = DenoiserShape {
            dim: 1,
            hidden: 1,
            embed_dim: 1,
            num_conditions: 1,
        };
        let n = shape.num_params();
        let mut p = vec![0.0; n];
        p[n - 1] = 0.4;
        let policy = ToyDenoiser::from_params(shape, p.clone()).unwrap();
        p[n - 1] = -0.1;
        let reference = ToyDenoiser::from_params(shape, p).unwrap();
        let sched = make_schedule(10, ScheduleFamily::Linear).unwrap();
        let ms = MarginSample {
            triplet: PreferenceTriplet::new(0, 0, vec![1.0], vec![2.0], None).unwrap(),
            draw: MarginDraw {
                t: 3,
                eps0: vec![0.5],
                eps1: vec![-1.0],
            },
        };
        // -beta [((-1 - 0.4)^2 - (-1 + 0.1)^2) - ((0.5 - 0.4)^2 - (0.5 + 0.1)^2)]
        // = -2 [(1.96 - 0.81) - (0.01 - 0.36)] = -2 * 1.5 = -3
        let m = dpo_margin(&policy, &reference, &ms, &sched, 2.0);
        assert!((m + 3.0).abs() < 1e-12, "{m}");
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let (policy, reference, sched, ms) = setup(4);
        let model = DiffusionDpo::new(policy, Arc::new(reference), sched, 1.7);
        let mut tape = DiffusionTape::default();
        model.logit_taped(&ms.triplet, &ms.draw, &mut tape);
        let mut grad = vec![0.0; model.num_params()];
        model.backprop(&ms.triplet, &ms.draw, &tape, 1.0, &mut grad);
        let h = 1e-6;
        for i in (0..model.num_params()).step_by(37) {
            let mut p = model.clone();
            p.params_mut()[i] += h;
            let mut m = model.clone();
            m.params_mut()[i] -= h;
            let fd = (p.logit(&ms.triplet, &ms.draw) - m.logit(&ms.triplet, &ms.draw)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }
}
