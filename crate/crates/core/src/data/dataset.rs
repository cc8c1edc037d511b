use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use super::world::WorldSpec;
use crate::error::{invalid, Result};
use crate::preference::PreferenceTriplet;
use crate::rng::{self, purpose};

/// Preference pairs split into a labeled and an unlabeled part.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub triplets: Vec<PreferenceTriplet>,
    pub n_l: usize,
    pub n_u: usize,
    pub split_seed: u64,
}

impl Dataset {
    pub fn from_triplets(triplets: Vec<PreferenceTriplet>, split_seed: u64) -> Self {
        let n_l = triplets.iter().filter(|t| t.is_labeled()).count();
        let n_u = triplets.len() - n_l;
        Self {
            triplets,
            n_l,
            n_u,
            split_seed,
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn labeled(&self) -> impl Iterator<Item = &PreferenceTriplet> {
        self.triplets.iter().filter(|t| t.is_labeled())
    }

    pub fn unlabeled(&self) -> impl Iterator<Item = &PreferenceTriplet> {
        self.triplets.iter().filter(|t| !t.is_labeled())
    }

    /// Owned (labeled, unlabeled) partition.
    pub fn partition(&self) -> (Vec<PreferenceTriplet>, Vec<PreferenceTriplet>) {
        self.triplets.iter().cloned().partition(|t| t.is_labeled())
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.triplets.iter().map(|t| t.id)
    }

    /// Re-draw which triplets are labeled, assigning ground truth from
    /// `world` to the newly labeled ones. Same pairs, new split.
    pub fn resplit(&self, world: &WorldSpec, n_l: usize, split_seed: u64) -> Result<Self> {
        let labeled = choose_labeled(self.len(), n_l, split_seed)?;
        let mut triplets = Vec::with_capacity(self.len());
        for (t, &lab) in self.triplets.iter().zip(&labeled) {
            let z = if lab {
                Some(world.true_preference(t.c, &t.x0, &t.x1)?)
            } else {
                None
            };
            triplets.push(t.clone().with_label(z));
        }
        Ok(Self::from_triplets(triplets, split_seed))
    }
}

/// Exactly `n_l` of `n` indices, chosen uniformly at random.
pub(crate) fn choose_labeled(n: usize, n_l: usize, seed: u64) -> Result<Vec<bool>> {
    if n_l > n {
        return Err(invalid(format!("cannot label {n_l} of {n} pairs")));
    }
    let mut r = rng::stream(seed, purpose::SPLIT, 0);
    let mut labeled = vec![false; n];
    for i in rand::seq::index::sample(&mut r, n, n_l).iter() {
        labeled[i] = true;
    }
    Ok(labeled)
}

pub fn labeled_count(n_pairs: usize, label_fraction: f64) -> usize {
    ((n_pairs as f64 * label_fraction).round() as usize).clamp(1, n_pairs)
}

/// One point from the mixture: a uniformly chosen mode plus isotropic noise.
pub fn draw_point<R: Rng + ?Sized>(world: &WorldSpec, r: &mut R) -> Vec<f64> {
    let mode = &world.modes[r.random_range(0..world.modes.len())];
    mode.center
        .iter()
        .map(|c| {
            let z: f64 = StandardNormal.sample(r);
            c + mode.std * z
        })
        .collect()
}

/// Sample `n_pairs` triplets from the mixture (both members from the full
/// mixture, condition uniform) and label a uniformly random subset.
pub fn generate(world: &WorldSpec, n_pairs: usize, label_fraction: f64, seed: u64) -> Result<Dataset> {
    generate_with_offset(world, n_pairs, label_fraction, seed, 0)
}

/// As [`generate`], with triplet ids starting at `first_id`.
pub fn generate_with_offset(
    world: &WorldSpec,
    n_pairs: usize,
    label_fraction: f64,
    seed: u64,
    first_id: u64,
) -> Result<Dataset> {
    if n_pairs < 4 {
        return Err(invalid(format!("need at least 4 pairs, got {n_pairs}")));
    }
    if !(label_fraction > 0.0 && label_fraction <= 1.0) {
        return Err(invalid(format!("label fraction must be in (0, 1], got {label_fraction}")));
    }
    let n_l = labeled_count(n_pairs, label_fraction);
    let labeled = choose_labeled(n_pairs, n_l, seed)?;
    let mut triplets = Vec::with_capacity(n_pairs);
    for (i, &lab) in labeled.iter().enumerate() {
        let id = first_id + i as u64;
        let mut r = rng::stream(seed, purpose::DATA, id);
        let c = r.random_range(0..world.num_conditions());
        let x0 = draw_point(world, &mut r);
        let mut x1 = draw_point(world, &mut r);
        while x1 == x0 {
            x1 = draw_point(world, &mut r);
        }
        let z = if lab {
            Some(world.true_preference(c, &x0, &x1)?)
        } else {
            None
        };
        triplets.push(PreferenceTriplet::new(id, c, x0, x1, z)?);
    }
    Ok(Dataset {
        triplets,
        n_l,
        n_u: n_pairs - n_l,
        split_seed: seed,
    })
}

/// Bradley-Terry world with a linear reward `r(x) = theta . x`: the label of
/// a pair is `Bernoulli(sigmoid(theta . (x1 - x0)))`. Pair members are
/// `N(0, I/2)`, so the difference feature is standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWorld {
    pub theta: Vec<f64>,
}

impl Default for LinearWorld {
    fn default() -> Self {
        Self {
            theta: vec![1.0, -0.5, 0.8],
        }
    }
}

impl LinearWorld {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// True preference probability `g*(y)`.
    pub fn probability(&self, t: &PreferenceTriplet) -> f64 {
        crate::preference::sigmoid(self.logit(t))
    }

    pub fn logit(&self, t: &PreferenceTriplet) -> f64 {
        self.theta
            .iter()
            .zip(t.x0.iter().zip(&t.x1))
            .map(|(w, (a, b))| w * (b - a))
            .sum()
    }

    /// Every pair is drawn with a label; `label_fraction` decides which keep it.
    pub fn generate(&self, n_pairs: usize, label_fraction: f64, seed: u64) -> Result<Dataset> {
        if n_pairs < 4 {
            return Err(invalid(format!("need at least 4 pairs, got {n_pairs}")));
        }
        let n_l = labeled_count(n_pairs, label_fraction);
        let labeled = choose_labeled(n_pairs, n_l, seed)?;
        let (labeled_full, _) = self.generate_labeled(n_pairs, seed)?;
        let triplets = labeled_full
            .into_iter()
            .zip(labeled)
            .map(|(t, lab)| if lab { t } else { t.with_label(None) })
            .collect();
        Ok(Dataset::from_triplets(triplets, seed))
    }

    /// All pairs labeled; also returns the true probabilities.
    pub fn generate_labeled(&self, n_pairs: usize, seed: u64) -> Result<(Vec<PreferenceTriplet>, Vec<f64>)> {
        let d = self.dim();
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let mut triplets = Vec::with_capacity(n_pairs);
        let mut probs = Vec::with_capacity(n_pairs);
        for i in 0..n_pairs {
            let mut r = rng::stream(seed, purpose::DATA, i as u64);
            let x0: Vec<f64> = rng::normal_vec(&mut r, d).into_iter().map(|v| v * half).collect();
            let x1: Vec<f64> = rng::normal_vec(&mut r, d).into_iter().map(|v| v * half).collect();
            let mut t = PreferenceTriplet::new(i as u64, 0, x0, x1, None)?;
            let p = self.probability(&t);
            let z = Bernoulli::new(p).map_err(|e| invalid(e.to_string()))?.sample(&mut r);
            t.z = Some(u8::from(z));
            triplets.push(t);
            probs.push(p);
        }
        Ok((triplets, probs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_split_counts() {
        let w = WorldSpec::default();
        let d = generate(&w, 5000, 0.25, 1).unwrap();
        assert_eq!((d.n_l, d.n_u), (1250, 3750));
        assert_eq!(d.labeled().count(), 1250);
        for t in d.labeled() {
            assert_eq!(t.z.unwrap(), w.true_preference(t.c, &t.x0, &t.x1).unwrap());
        }
    }

    #[test]
    fn full_fraction_labels_everything() {
        let d = generate(&WorldSpec::default(), 40, 1.0, 3).unwrap();
        assert_eq!((d.n_l, d.n_u), (40, 0));
    }

    #[test]
    fn deterministic_under_seed() {
        let w = WorldSpec::default();
        assert_eq!(generate(&w, 100, 0.3, 9).unwrap(), generate(&w, 100, 0.3, 9).unwrap());
        assert_ne!(generate(&w, 100, 0.3, 9).unwrap(), generate(&w, 100, 0.3, 10).unwrap());
    }

    #[test]
    fn rejects_bad_arguments() {
        let w = WorldSpec::default();
        assert!(generate(&w, 3, 0.5, 0).is_err());
        assert!(generate(&w, 10, 0.0, 0).is_err());
        assert!(generate(&w, 10, 1.5, 0).is_err());
    }

    #[test]
    fn offset_shifts_ids() {
        let d = generate_with_offset(&WorldSpec::default(), 10, 0.5, 0, 100).unwrap();
        assert_eq!(d.ids().collect::<Vec<_>>(), (100..110).collect::<Vec<_>>());
    }

    #[test]
    fn labeled_subset_is_uniform() {
        // chi-square over index inclusion counts across 200 split seeds
        let (n, n_l, seeds) = (40usize, 10usize, 200u64);
        let mut counts = vec![0.0f64; n];
        for s in 0..seeds {
            for (i, lab) in choose_labeled(n, n_l, s).unwrap().into_iter().enumerate() {
                if lab {
                    counts[i] += 1.0;
                }
            }
        }
        let expected = seeds as f64 * n_l as f64 / n as f64;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.001, "chi2 {chi2}, p {p}");
    }

    #[test]
    fn linear_world_labels_follow_probability() {
        let w = LinearWorld::default();
        let (ts, ps) = w.generate_labeled(20_000, 4).unwrap();
        let mean_z = ts.iter().map(|t| t.z.unwrap() as f64).sum::<f64>() / ts.len() as f64;
        let mean_p = ps.iter().sum::<f64>() / ps.len() as f64;
        assert!((mean_z - mean_p).abs() < 0.015);
    }
}
