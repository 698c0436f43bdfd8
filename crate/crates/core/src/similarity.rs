//! Czekanowski similarity between feature vectors and the MSE baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::imgprep::GrayImage;

/// Whether larger scores mean more alike (`Similarity`) or less (`Distance`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Similarity,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub kind: ScoreKind,
}

impl SimilarityScore {
    pub fn similarity(value: f64) -> Self {
        Self {
            value,
            kind: ScoreKind::Similarity,
        }
    }

    pub fn distance(value: f64) -> Self {
        Self {
            value,
            kind: ScoreKind::Distance,
        }
    }

    /// Score oriented so that larger always means more similar.
    pub fn affinity(&self) -> f64 {
        match self.kind {
            ScoreKind::Similarity => self.value,
            ScoreKind::Distance => -self.value,
        }
    }
}

/// `1 - ||a - b||_1 / ||a + b||_1` for non-negative vectors of equal length.
///
/// Two all-zero vectors are identical and score 1.
pub fn czekanowski_values(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Incompatible(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x - y).abs();
        sum += (x + y).abs();
    }
    if sum == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - diff / sum).clamp(0.0, 1.0))
}

/// Czekanowski similarity of two feature vectors.
pub fn czekanowski(a: &FeatureVector, b: &FeatureVector) -> Result<SimilarityScore> {
    if !a.is_compatible(b) {
        return Err(Error::Incompatible(format!(
            "feature vectors computed for {} and {}",
            a.digest, b.digest
        )));
    }
    czekanowski_values(&a.values, &b.values).map(SimilarityScore::similarity)
}

/// Mean squared pixel difference.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<SimilarityScore> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::Incompatible(format!(
            "images of size {}x{} and {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let total: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    Ok(SimilarityScore::distance(total / a.pixels().len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{BlockLayout, ParamsDigest};
    use proptest::prelude::*;

    fn fv(values: Vec<f64>, height: usize) -> FeatureVector {
        FeatureVector {
            digest: ParamsDigest {
                height,
                width: 64,
                scales: 3,
                orientations_coarse: 16,
            },
            layout: vec![BlockLayout {
                scale: 1,
                orientation: 1,
                len: values.len(),
            }],
            effective_ranks: vec![1.0],
            values,
        }
    }

    #[test]
    fn czekanowski_examples() {
        assert_eq!(czekanowski_values(&[0.2, 3.0], &[0.2, 3.0]).unwrap(), 1.0);
        assert_eq!(czekanowski_values(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((czekanowski_values(&[3.0, 1.0], &[1.0, 1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(czekanowski_values(&[0.0; 3], &[0.0; 3]).unwrap(), 1.0);
    }

    #[test]
    fn incompatible_vectors() {
        let a = fv(vec![1.0, 2.0], 64);
        let b = fv(vec![1.0, 2.0], 128);
        assert!(matches!(czekanowski(&a, &b), Err(Error::Incompatible(_))));
        assert_eq!(czekanowski(&a, &a).unwrap(), SimilarityScore::similarity(1.0));
        assert!(czekanowski_values(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mse_examples() {
        let zero = GrayImage::constant(4, 4, 0.0).unwrap();
        let one = GrayImage::constant(4, 4, 1.0).unwrap();
        let half = GrayImage::from_fn(4, 4, |r, _| if r < 2 { 0.0 } else { 1.0 }).unwrap();
        assert_eq!(mse(&zero, &zero).unwrap().value, 0.0);
        assert_eq!(mse(&zero, &one).unwrap(), SimilarityScore::distance(1.0));
        assert_eq!(mse(&zero, &half).unwrap().value, 0.5);
        let other = GrayImage::constant(4, 5, 0.0).unwrap();
        assert!(matches!(mse(&zero, &other), Err(Error::Incompatible(_))));
    }

    proptest! {
        #[test]
        fn czekanowski_properties(
            pairs in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..30),
            alpha in 1e-3f64..1e3,
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let s = czekanowski_values(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, czekanowski_values(&b, &a).unwrap());
            prop_assert_eq!(czekanowski_values(&a, &a).unwrap(), 1.0);
            let sa: Vec<f64> = a.iter().map(|v| v * alpha).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * alpha).collect();
            prop_assert!((czekanowski_values(&sa, &sb).unwrap() - s).abs() < 1e-12);
        }
    }
}
