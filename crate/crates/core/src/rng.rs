//! Deterministic, splittable random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream keyed by
//! a root seed, a purpose tag and a counter (usually a triplet id or an
//! epoch). Two streams with different keys never share state, so results do
//! not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Purpose tags for derived streams.
pub mod purpose {
    pub const DATA: u64 = 0x01;
    pub const SPLIT: u64 = 0x02;
    pub const INIT: u64 = 0x03;
    pub const DRAW: u64 = 0x04;
    pub const DRAW_AUG1: u64 = 0x05;
    pub const DRAW_AUG3: u64 = 0x06;
    pub const SHUFFLE: u64 = 0x07;
    pub const FLIP: u64 = 0x08;
    pub const SAMPLE: u64 = 0x09;
    pub const PRETRAIN: u64 = 0x0a;
    pub const CALIBRATION: u64 = 0x0b;
    pub const EVAL: u64 = 0x0c;
    pub const RESAMPLE: u64 = 0x0d;
    pub const TERM: u64 = 0x0e;
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a label.
pub fn derive(seed: u64, label: u64) -> u64 {
    mix(seed ^ mix(label.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// A ChaCha stream for `(seed, purpose)` positioned on stream `counter`.
pub fn stream(seed: u64, purpose: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, purpose));
    rng.set_stream(counter);
    rng
}

pub fn normal_vec<R: rand::Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}
