use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A prompt with an unordered pair `(x0, x1)` and an optional human label.
///
/// `z = Some(1)` means `x1` is preferred. A triplet is labeled (`r = 1`)
/// exactly when `z` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTriplet {
    pub id: u64,
    pub c: usize,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub z: Option<u8>,
}

impl PreferenceTriplet {
    pub fn new(id: u64, c: usize, x0: Vec<f64>, x1: Vec<f64>, z: Option<u8>) -> Result<Self> {
        if x0.len() != x1.len() {
            return Err(Error::DimensionMismatch {
                expected: x0.len(),
                got: x1.len(),
            });
        }
        if x0 == x1 {
            return Err(Error::DegeneratePair);
        }
        if let Some(label) = z {
            if label > 1 {
                return Err(invalid(format!("label must be 0 or 1, got {label}")));
            }
        }
        Ok(Self { id, c, x0, x1, z })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn is_labeled(&self) -> bool {
        self.z.is_some()
    }

    /// The labeled flag `r` as a number.
    pub fn r(&self) -> f64 {
        if self.is_labeled() {
            1.0
        } else {
            0.0
        }
    }

    pub fn label(&self) -> Result<f64> {
        self.z.map(f64::from).ok_or(Error::MissingLabel { id: self.id })
    }

    pub fn with_label(mut self, z: Option<u8>) -> Self {
        self.z = z;
        self
    }

    /// Swap `x0` and `x1` and flip the label.
    pub fn swapped(&self) -> Self {
        Self {
            id: self.id,
            c: self.c,
            x0: self.x1.clone(),
            x1: self.x0.clone(),
            z: self.z.map(|z| 1 - z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_identical_members() {
        assert!(matches!(
            PreferenceTriplet::new(0, 0, vec![1.0, 2.0], vec![1.0, 2.0], None),
            Err(Error::DegeneratePair)
        ));
    }

    #[test]
    fn labeled_flag_tracks_label() {
        let t = PreferenceTriplet::new(0, 0, vec![0.0], vec![1.0], Some(1)).unwrap();
        assert!(t.is_labeled());
        assert_eq!(t.r(), 1.0);
        let u = t.clone().with_label(None);
        assert_eq!(u.r(), 0.0);
        assert!(matches!(u.label(), Err(Error::MissingLabel { id: 0 })));
        assert!(PreferenceTriplet::new(0, 0, vec![0.0], vec![1.0], Some(2)).is_err());
    }

    #[test]
    fn swap_flips_label() {
        let t = PreferenceTriplet::new(3, 1, vec![0.0], vec![1.0], Some(1)).unwrap();
        let s = t.swapped();
        assert_eq!(s.x0, t.x1);
        assert_eq!(s.z, Some(0));
        assert_eq!(s.swapped(), t);
    }
}
