//! Effective singular values of curvelet wedges and the feature vector built
//! from them.
//!
//! For each wedge the singular values `s_1 >= ... >= s_L` are normalized to a
//! distribution `p_k = s_k / sum(s)`. The effective rank is
//! `q = exp(-sum p_k ln p_k)` (with `0 ln 0 = 0`); the first `floor(q)` singular
//! values are kept and the rest set to zero. Feature vectors concatenate these
//! truncated spectra for the coarsest wedge, the first half of the orientations
//! of every directional scale, and the finest wedge.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, SVD};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curvelet::{CurveletDecomposition, CurveletParams};
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero
/// when forming the distribution.
pub const RELATIVE_ZERO: f64 = 1e-12;

/// Absorbs round-off when the effective rank sits on an integer.
const FLOOR_SLACK: f64 = 1e-9;

const SVD_MAX_ITERATIONS: usize = 10_000;

/// Singular values of a complex matrix, sorted in non-increasing order.
pub fn singular_values(matrix: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    if matrix.is_empty() {
        return Err(Error::Numeric("singular values of an empty matrix".into()));
    }
    if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let svd = SVD::try_new_unordered(matrix.clone(), false, false, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or_else(|| Error::Numeric(format!("SVD of a {:?} matrix did not converge", matrix.shape())))?;
    let mut values: Vec<f64> = svd.singular_values.iter().map(|s| s.max(0.0)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Normalized singular value distribution `p_k = s_k / ||s||_1`.
///
/// Returns `None` for an all-zero spectrum.
pub fn sv_distribution(values: &[f64]) -> Option<Vec<f64>> {
    let total = compensated_sum(values.iter().copied());
    if total > 0.0 && total.is_finite() {
        Some(values.iter().map(|v| v / total).collect())
    } else {
        None
    }
}

/// Effective rank `exp(H(p))` of a non-negative spectrum; 0 when it is all zero.
///
/// Values below [`RELATIVE_ZERO`] times the largest are dropped first.
pub fn effective_rank(values: &[f64]) -> f64 {
    let largest = values.iter().copied().fold(0.0, f64::max);
    let cleaned: Vec<f64> = values
        .iter()
        .map(|&v| if v < RELATIVE_ZERO * largest { 0.0 } else { v })
        .collect();
    let Some(p) = sv_distribution(&cleaned) else {
        return 0.0;
    };
    let entropy = compensated_sum(p.iter().filter(|&&pk| pk > 0.0).map(|&pk| -pk * pk.ln()));
    entropy.exp().clamp(1.0, values.len() as f64)
}

// Neumaier summation; long spectra of near-equal values otherwise drift by
// O(L * eps), which moves the effective rank of L equal values off L.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

/// Keeps the first `floor(q)` values and zeroes the rest.
pub fn truncate(values: &[f64], effective_rank: f64) -> Vec<f64> {
    let keep = kept_count(effective_rank, values.len());
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| if i < keep { v } else { 0.0 })
        .collect()
}

fn kept_count(effective_rank: f64, len: usize) -> usize {
    ((effective_rank + FLOOR_SLACK).floor().max(0.0) as usize).min(len)
}

/// Spectrum summary of one wedge.
#[derive(Debug, Clone, PartialEq)]
pub struct WedgeSpectrum {
    pub scale: usize,
    pub orientation: usize,
    pub singular_values: Vec<f64>,
    pub effective_rank: f64,
    pub effective_values: Vec<f64>,
}

impl WedgeSpectrum {
    pub fn from_matrix(scale: usize, orientation: usize, matrix: &DMatrix<Complex64>) -> Result<Self> {
        Ok(Self::from_singular_values(scale, orientation, singular_values(matrix)?))
    }

    pub fn from_singular_values(scale: usize, orientation: usize, singular_values: Vec<f64>) -> Self {
        let q = effective_rank(&singular_values);
        let effective_values = truncate(&singular_values, q);
        Self {
            scale,
            orientation,
            singular_values,
            effective_rank: q,
            effective_values,
        }
    }
}

/// Image size and transform parameters a feature vector was computed with.
/// Feature vectors are only comparable when their digests agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamsDigest {
    pub height: usize,
    pub width: usize,
    pub scales: usize,
    pub orientations_coarse: usize,
}

impl ParamsDigest {
    pub fn new(height: usize, width: usize, params: &CurveletParams) -> Self {
        Self {
            height,
            width,
            scales: params.scales(),
            orientations_coarse: params.orientations_coarse(),
        }
    }
}

impl fmt::Display for ParamsDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}-j{}-k{}",
            self.height, self.width, self.scales, self.orientations_coarse
        )
    }
}

/// Position of one wedge's block inside a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub scale: usize,
    pub orientation: usize,
    pub len: usize,
}

/// Concatenated effective singular values of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub digest: ParamsDigest,
    pub layout: Vec<BlockLayout>,
    /// Effective rank of each block, parallel to `layout`.
    pub effective_ranks: Vec<f64>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    /// Assembles a feature vector from spectra given in layout order.
    pub fn from_spectra(digest: ParamsDigest, spectra: &[WedgeSpectrum]) -> Self {
        let mut layout = Vec::with_capacity(spectra.len());
        let mut effective_ranks = Vec::with_capacity(spectra.len());
        let mut values = Vec::new();
        for s in spectra {
            layout.push(BlockLayout {
                scale: s.scale,
                orientation: s.orientation,
                len: s.effective_values.len(),
            });
            effective_ranks.push(s.effective_rank);
            values.extend_from_slice(&s.effective_values);
        }
        Self {
            digest,
            layout,
            effective_ranks,
            values,
        }
    }

    /// Values of each block, in layout order.
    pub fn blocks(&self) -> impl Iterator<Item = (&BlockLayout, &[f64])> {
        let mut offset = 0;
        self.layout.iter().map(move |b| {
            let block = &self.values[offset..offset + b.len];
            offset += b.len;
            (b, block)
        })
    }

    /// Whether two vectors were computed on the same geometry.
    pub fn is_compatible(&self, other: &FeatureVector) -> bool {
        self.digest == other.digest && self.layout == other.layout
    }
}

/// Wedges that enter the feature vector, in concatenation order.
pub fn retained_wedges(params: &CurveletParams) -> Vec<(usize, usize)> {
    let mut out = vec![(1, 1)];
    for j in 2..params.scales() {
        out.extend((1..=params.orientations(j) / 2).map(|k| (j, k)));
    }
    out.push((params.scales(), 1));
    out
}

/// Feature vector of a decomposition: coarsest wedge, orientations
/// `1..=K(j)/2` of each directional scale, finest wedge.
pub fn extract_features(decomposition: &CurveletDecomposition) -> Result<FeatureVector> {
    extract_with(decomposition, &retained_wedges(&decomposition.params))
}

/// Same as [`extract_features`] but over the second half of the orientations
/// (`K(j)/2 + 1..=K(j)`). For real images the result equals the standard
/// vector up to round-off.
pub fn extract_features_opposite(decomposition: &CurveletDecomposition) -> Result<FeatureVector> {
    let p = &decomposition.params;
    let wedges: Vec<_> = retained_wedges(p)
        .into_iter()
        .map(|(j, k)| {
            if p.is_directional(j) {
                (j, k + p.orientations(j) / 2)
            } else {
                (j, k)
            }
        })
        .collect();
    extract_with(decomposition, &wedges)
}

fn extract_with(decomposition: &CurveletDecomposition, wedges: &[(usize, usize)]) -> Result<FeatureVector> {
    let spectra = wedges
        .iter()
        .map(|&(j, k)| {
            let wedge = decomposition
                .get(j, k)
                .ok_or_else(|| Error::Structure(format!("decomposition lacks wedge ({j}, {k})")))?;
            WedgeSpectrum::from_matrix(j, k, &wedge.coefficients)
        })
        .collect::<Result<Vec<_>>>()?;
    let digest = ParamsDigest::new(decomposition.height, decomposition.width, &decomposition.params);
    Ok(FeatureVector::from_spectra(digest, &spectra))
}

pub const FEATURE_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub path: String,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamsInfo {
    pub scales: usize,
    pub orientations_coarse: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WedgeRecord {
    pub scale: usize,
    pub orientation: usize,
    #[serde(rename = "L")]
    pub len: usize,
    pub effective_rank: f64,
    pub effective_values: Vec<f64>,
}

/// Versioned JSON form of a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFile {
    pub version: u32,
    pub image: ImageInfo,
    pub params: ParamsInfo,
    pub wedges: Vec<WedgeRecord>,
}

impl FeatureFile {
    pub fn new(path: impl Into<String>, features: &FeatureVector) -> Self {
        let d = features.digest;
        let wedges = features
            .blocks()
            .zip(&features.effective_ranks)
            .map(|((b, values), &q)| WedgeRecord {
                scale: b.scale,
                orientation: b.orientation,
                len: b.len,
                effective_rank: q,
                effective_values: values.to_vec(),
            })
            .collect();
        Self {
            version: FEATURE_FILE_VERSION,
            image: ImageInfo {
                path: path.into(),
                height: d.height,
                width: d.width,
            },
            params: ParamsInfo {
                scales: d.scales,
                orientations_coarse: d.orientations_coarse,
            },
            wedges,
        }
    }

    pub fn to_features(&self) -> Result<FeatureVector> {
        if self.version != FEATURE_FILE_VERSION {
            return Err(Error::Config(format!(
                "unsupported feature file version {}",
                self.version
            )));
        }
        let digest = ParamsDigest {
            height: self.image.height,
            width: self.image.width,
            scales: self.params.scales,
            orientations_coarse: self.params.orientations_coarse,
        };
        let mut layout = Vec::with_capacity(self.wedges.len());
        let mut ranks = Vec::with_capacity(self.wedges.len());
        let mut values = Vec::new();
        for w in &self.wedges {
            if w.effective_values.len() != w.len {
                return Err(Error::Structure(format!(
                    "wedge ({}, {}) declares L={} but stores {} values",
                    w.scale,
                    w.orientation,
                    w.len,
                    w.effective_values.len()
                )));
            }
            layout.push(BlockLayout {
                scale: w.scale,
                orientation: w.orientation,
                len: w.len,
            });
            ranks.push(w.effective_rank);
            values.extend_from_slice(&w.effective_values);
        }
        Ok(FeatureVector {
            digest,
            layout,
            effective_ranks: ranks,
            values,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvelet::{forward, make_params};
    use crate::imgprep::GrayImage;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn real(rows: usize, cols: usize, vals: &[f64]) -> DMatrix<Complex64> {
        DMatrix::from_row_iterator(rows, cols, vals.iter().map(|&v| Complex64::new(v, 0.0)))
    }

    // Oracle: square roots of the eigenvalues of the Gram matrix A^H A.
    fn gram_oracle(a: &DMatrix<Complex64>) -> Vec<f64> {
        let gram = a.adjoint() * a;
        let mut ev: Vec<f64> = gram
            .symmetric_eigenvalues()
            .iter()
            .map(|&l| l.max(0.0).sqrt())
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev.truncate(a.nrows().min(a.ncols()));
        ev
    }

    #[test]
    fn singular_value_examples() {
        assert_eq!(singular_values(&real(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap(), [1.0, 1.0]);
        let d = singular_values(&real(2, 2, &[1.0, 0.0, 0.0, 3.0])).unwrap();
        assert!((d[0] - 3.0).abs() < 1e-14 && (d[1] - 1.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = DMatrix::from_fn(5, 3, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let got = singular_values(&a).unwrap();
            let want = gram_oracle(&a);
            assert_eq!(got.len(), 3);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn singular_values_reject_bad_input() {
        let mut a = real(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        a[(0, 1)] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(singular_values(&a), Err(Error::Numeric(_))));
        assert!(matches!(singular_values(&DMatrix::zeros(0, 3)), Err(Error::Numeric(_))));
    }

    #[test]
    fn distribution_examples() {
        assert_eq!(sv_distribution(&[3.0, 1.0]).unwrap(), [0.75, 0.25]);
        assert_eq!(sv_distribution(&[2.5; 4]).unwrap(), [0.25; 4]);
        assert_eq!(sv_distribution(&[1.0, 0.0, 0.0]).unwrap(), [1.0, 0.0, 0.0]);
        assert!(sv_distribution(&[0.0, 0.0]).is_none());
    }

    #[test]
    fn effective_rank_examples() {
        assert!((effective_rank(&[3.0, 1.0]) - 1.754_765_350_603_323_3).abs() < 1e-12);
        assert_eq!(effective_rank(&[1.0, 0.0, 0.0, 0.0]), 1.0);
        assert_eq!(effective_rank(&[0.0, 0.0]), 0.0);
        assert_eq!(effective_rank(&[]), 0.0);
        for len in 1..=64 {
            assert!((effective_rank(&vec![0.3; len]) - len as f64).abs() < 1e-12);
        }
        // Values under the relative floor do not count.
        assert_eq!(effective_rank(&[1.0, 1e-14, 1e-15]), 1.0);
    }

    #[test]
    fn truncation_examples() {
        let q = effective_rank(&[3.0, 1.0]);
        assert_eq!(truncate(&[3.0, 1.0], q), [3.0, 0.0]);
        assert_eq!(truncate(&[0.7; 3], effective_rank(&[0.7; 3])), [0.7; 3]);
        assert_eq!(truncate(&[0.0, 0.0], 0.0), [0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn effective_rank_bounds(values in prop::collection::vec(0.0f64..10.0, 1..40)) {
            let mut values = values;
            values.sort_by(|a, b| b.total_cmp(a));
            let q = effective_rank(&values);
            if values[0] > 0.0 {
                prop_assert!(q >= 1.0 && q <= values.len() as f64);
                let t = truncate(&values, q);
                let nonzero = t.iter().filter(|&&v| v > 0.0).count();
                prop_assert!(nonzero <= kept_count(q, values.len()));
                if values[kept_count(q, values.len()) - 1] > 0.0 {
                    prop_assert_eq!(nonzero, kept_count(q, values.len()));
                }
            } else {
                prop_assert_eq!(q, 0.0);
            }
        }

        #[test]
        fn spectrum_ignores_row_and_column_permutations(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (r, c) = (rng.random_range(1..7), rng.random_range(1..7));
            let a = DMatrix::from_fn(r, c, |_, _| Complex64::new(rng.random(), rng.random()));
            let mut rows: Vec<usize> = (0..r).collect();
            let mut cols: Vec<usize> = (0..c).collect();
            rows.reverse();
            cols.rotate_left(c / 2);
            let b = DMatrix::from_fn(r, c, |i, j| a[(rows[i], cols[j])]);
            let sa = WedgeSpectrum::from_matrix(1, 1, &a).unwrap();
            let sb = WedgeSpectrum::from_matrix(1, 1, &b).unwrap();
            for (x, y) in sa.singular_values.iter().zip(&sb.singular_values) {
                prop_assert!((x - y).abs() < 1e-12 * sa.singular_values[0].max(1.0));
            }
            prop_assert_eq!(sa.effective_values.iter().filter(|v| **v > 0.0).count(),
                            sb.effective_values.iter().filter(|v| **v > 0.0).count());
        }
    }

    fn random_image(seed: u64, h: usize, w: usize) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(h, w, |_, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn layout_for_128_defaults() {
        let img = random_image(1, 128, 128);
        let d = forward(&img, &make_params(128, 128, None, None).unwrap()).unwrap();
        let f = extract_features(&d).unwrap();
        assert_eq!(f.layout.len(), 1 + 8 + 16 + 1);
        assert_eq!(f.values.len(), f.layout.iter().map(|b| b.len).sum::<usize>());
        assert!(f.values.iter().all(|&v| v >= 0.0));
        assert_eq!(f.layout.last().unwrap().len, 128);
        let mut prev = (0, 0);
        for b in &f.layout {
            assert!((b.scale, b.orientation) > prev);
            prev = (b.scale, b.orientation);
            assert!(b.orientation <= d.params.orientations(b.scale).div_ceil(2));
        }
    }

    #[test]
    fn constant_image_has_only_coarse_content() {
        let img = GrayImage::constant(64, 64, 0.4).unwrap();
        let f = extract_features(&forward(&img, &make_params(64, 64, None, None).unwrap()).unwrap()).unwrap();
        let mut blocks = f.blocks();
        let (_, coarse) = blocks.next().unwrap();
        assert!(coarse[0] > 1.0);
        for (b, vals) in blocks {
            assert!(vals.iter().all(|&v| v < 1e-12), "block {:?}", b);
        }
    }

    #[test]
    fn deterministic_and_half_orientation_sound() {
        let img = random_image(5, 64, 64);
        let p = make_params(64, 64, None, None).unwrap();
        let d = forward(&img, &p).unwrap();
        let a = extract_features(&d).unwrap();
        let b = extract_features(&forward(&img.clone(), &p).unwrap()).unwrap();
        assert_eq!(a, b);
        let opposite = extract_features_opposite(&d).unwrap();
        assert_eq!(a.values.len(), opposite.values.len());
        for (x, y) in a.values.iter().zip(&opposite.values) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn power_of_two_scaling_is_exact() {
        let img = random_image(9, 64, 64);
        let p = make_params(64, 64, None, None).unwrap();
        let f = extract_features(&forward(&img, &p).unwrap()).unwrap();
        let half = GrayImage::new(64, 64, img.pixels().iter().map(|v| v * 0.5).collect()).unwrap();
        let g = extract_features(&forward(&half, &p).unwrap()).unwrap();
        for (x, y) in f.values.iter().zip(&g.values) {
            assert_eq!(x * 0.5, *y);
        }
    }

    #[test]
    fn feature_file_round_trip() {
        let img = random_image(2, 64, 64);
        let f = extract_features(&forward(&img, &make_params(64, 64, None, None).unwrap()).unwrap()).unwrap();
        let file = FeatureFile::new("x.png", &f);
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.contains("\"L\":"));
        let back: FeatureFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_features().unwrap(), f);
    }
}
