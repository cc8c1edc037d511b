use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub center: Vec<f64>,
    pub std: f64,
}

/// Ground-truth generator: a Gaussian mixture and, per condition, the mode
/// whose neighbourhood is preferred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub modes: Vec<Mode>,
    /// `preferred[c]` is the mode index preferred under condition `c`.
    pub preferred: Vec<usize>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self::square(2.0, 0.4)
    }
}

impl WorldSpec {
    pub fn new(modes: Vec<Mode>, preferred: Vec<usize>) -> Result<Self> {
        if modes.is_empty() || preferred.is_empty() {
            return Err(invalid("world needs at least one mode and one condition"));
        }
        let dim = modes[0].center.len();
        if dim == 0 {
            return Err(invalid("mode centers must be non-empty"));
        }
        for m in &modes {
            if m.center.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.center.len(),
                });
            }
            if !(m.std > 0.0) {
                return Err(invalid(format!("mode std must be positive, got {}", m.std)));
            }
        }
        if let Some(&bad) = preferred.iter().find(|&&p| p >= modes.len()) {
            return Err(invalid(format!("condition maps to missing mode {bad}")));
        }
        Ok(Self { modes, preferred })
    }

    /// Four modes at `(+-r, +-r)` with isotropic `std`; condition `c`
    /// prefers mode `c` (counter-clockwise from the first quadrant).
    pub fn square(r: f64, std: f64) -> Self {
        let centers = [[r, r], [-r, r], [-r, -r], [r, -r]];
        let modes = centers
            .iter()
            .map(|c| Mode {
                center: c.to_vec(),
                std,
            })
            .collect();
        Self {
            modes,
            preferred: vec![0, 1, 2, 3],
        }
    }

    pub fn dim(&self) -> usize {
        self.modes[0].center.len()
    }

    pub fn num_conditions(&self) -> usize {
        self.preferred.len()
    }

    pub fn preferred_center(&self, c: usize) -> &[f64] {
        &self.modes[self.preferred[c]].center
    }

    /// The mode opposite the preferred one (halfway around the mode list),
    /// which systematically biased annotators are drawn towards.
    pub fn decoy_center(&self, c: usize) -> &[f64] {
        let n = self.modes.len();
        let m = (self.preferred[c] + n / 2) % n;
        &self.modes[m].center
    }

    /// `|x0 - decoy|^2 - |x1 - decoy|^2`: positive when `x1` is nearer the decoy.
    pub fn decoy_margin(&self, c: usize, x0: &[f64], x1: &[f64]) -> f64 {
        let d = self.decoy_center(c);
        squared_distance(x0, d) - squared_distance(x1, d)
    }

    /// `|x0 - p|^2 - |x1 - p|^2` for the preferred center `p`. Same sign as
    /// [`WorldSpec::margin`], but smooth at the center.
    pub fn squared_margin(&self, c: usize, x0: &[f64], x1: &[f64]) -> f64 {
        let p = self.preferred_center(c);
        squared_distance(x0, p) - squared_distance(x1, p)
    }

    /// Negative Euclidean distance to the preferred mode center.
    pub fn score(&self, c: usize, x: &[f64]) -> f64 {
        -distance(x, self.preferred_center(c))
    }

    /// `score(x1) - score(x0)`.
    pub fn margin(&self, c: usize, x0: &[f64], x1: &[f64]) -> f64 {
        self.score(c, x1) - self.score(c, x0)
    }

    /// 1 iff `x1` is strictly preferred; equal scores fall back to the
    /// lexicographically smaller point.
    pub fn true_preference(&self, c: usize, x0: &[f64], x1: &[f64]) -> Result<u8> {
        if c >= self.num_conditions() {
            return Err(invalid(format!("unknown condition {c}")));
        }
        if x0 == x1 {
            return Err(Error::DegeneratePair);
        }
        let (s0, s1) = (self.score(c, x0), self.score(c, x1));
        let x1_wins = match s1.partial_cmp(&s0) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Less) => false,
            _ => lexicographic(x1, x0) == Ordering::Less,
        };
        Ok(u8::from(x1_wins))
    }
}

pub fn true_preference(world: &WorldSpec, c: usize, x0: &[f64], x1: &[f64]) -> Result<u8> {
    world.true_preference(c, x0, x1)
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn preferred_center_beats_far_point() {
        let w = WorldSpec::default();
        for c in 0..4 {
            let far = vec![-w.preferred_center(c)[0] * 3.0, 0.7];
            assert_eq!(w.true_preference(c, &far, w.preferred_center(c)).unwrap(), 1);
        }
    }

    #[test]
    fn swap_antisymmetry_and_ties() {
        let w = WorldSpec::default();
        // equidistant from (2, 2): tie broken toward the lexicographically smaller point
        let a = [2.0, 3.0];
        let b = [3.0, 2.0];
        assert_eq!(w.true_preference(0, &a, &b).unwrap(), 0);
        assert_eq!(w.true_preference(0, &b, &a).unwrap(), 1);
        assert!(w.true_preference(0, &a, &a).is_err());
    }

    #[test]
    fn matches_brute_force_distance_rule() {
        let w = WorldSpec::default();
        let mut r = rng::stream(17, 0, 0);
        for _ in 0..1000 {
            let c = r.random_range(0..4);
            let x0 = [r.random_range(-4.0..4.0), r.random_range(-4.0..4.0)];
            let x1 = [r.random_range(-4.0..4.0), r.random_range(-4.0..4.0)];
            let centre: [f64; 2] = [[2.0, 2.0], [-2.0, 2.0], [-2.0, -2.0], [2.0, -2.0]][c];
            let d0 = ((x0[0] - centre[0]).powi(2) + (x0[1] - centre[1]).powi(2)).sqrt();
            let d1 = ((x1[0] - centre[0]).powi(2) + (x1[1] - centre[1]).powi(2)).sqrt();
            let expected = u8::from(d1 < d0);
            assert_eq!(w.true_preference(c, &x0, &x1).unwrap(), expected);
            assert_eq!(w.true_preference(c, &x1, &x0).unwrap(), 1 - expected);
        }
    }

    #[test]
    fn validation() {
        let m = |c: Vec<f64>| Mode { center: c, std: 1.0 };
        assert!(WorldSpec::new(vec![m(vec![0.0])], vec![1]).is_err());
        assert!(WorldSpec::new(vec![m(vec![0.0]), m(vec![0.0, 1.0])], vec![0]).is_err());
        assert!(WorldSpec::new(vec![m(vec![0.0])], vec![0, 0]).is_ok());
    }
}
