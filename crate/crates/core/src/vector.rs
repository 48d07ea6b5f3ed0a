//! Unit vectors and the small amount of linear algebra the policy needs.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of `|v|` from 1 for a [`UnitVector`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Norms at or below this are treated as zero by [`normalize`].
pub const MIN_NORM: f64 = 1e-12;

pub const DEFAULT_EMBEDDING_DIM: usize = 384;

/// An L2-normalised real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps `components`, checking the norm is 1 within [`UNIT_NORM_TOLERANCE`].
    pub fn new(components: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&components);
        if components.is_empty() || !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::NotUnitNorm(norm));
        }
        Ok(Self(components))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Inner product. Panics if the dimensions differ.
    pub fn dot(&self, other: &UnitVector) -> f64 {
        dot(&self.0, &other.0)
    }

    /// Angle in `[0, π]`, with the cosine clamped to `[-1, 1]` first.
    /// Angle in `[0, π]`, computed as `2·atan2(|a − b|, |a + b|)`, which stays
    /// accurate near 0 and π where `acos` of the dot product does not.
    pub fn angle_to(&self, other: &UnitVector) -> f64 {
        let (mut diff, mut sum) = (0.0, 0.0);
        for (a, b) in self.0.iter().zip(&other.0) {
            diff += (a - b) * (a - b);
            sum += (a + b) * (a + b);
        }
        2.0 * libm::atan2(libm::sqrt(diff), libm::sqrt(sum))
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitVector::new(v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(v: UnitVector) -> Self {
        v.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot product of vectors with different dimensions");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

pub fn clamp_cosine(c: f64) -> f64 {
    c.clamp(-1.0, 1.0)
}

/// Scales `v` to unit length.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    let norm = l2_norm(v);
    if !(norm > MIN_NORM) || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(UnitVector(v.iter().map(|x| x / norm).collect()))
}

/// [`normalize`] with a dimension check against the configured embedding size.
pub fn normalize_dim(v: &[f64], dim: usize) -> Result<UnitVector> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
    }
    normalize(v)
}
