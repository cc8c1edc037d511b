//! Discrete-time noising, the toy conditional denoiser, guidance and sampling.

pub mod denoiser;
pub mod noising;
pub mod sampler;
pub mod schedule;

pub use denoiser::{DenoiserShape, NoisePredictor, Tape, ToyDenoiser};
pub use noising::{denoising_loss, denoising_loss_grad, forward_noise, LatentSample};
pub use sampler::{cfg_predict, sample};
pub use schedule::{make_schedule, NoiseSchedule, ScheduleFamily};
