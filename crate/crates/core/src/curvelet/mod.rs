//! Fast discrete curvelet transform by wedge windowing and wrapping.
//!
//! The forward transform takes the unitary 2-D DFT of the image, multiplies
//! it by each smooth wedge window, wraps the windowed wedge into an
//! origin-centred rectangle and returns to the spatial domain with a unitary
//! inverse DFT of that rectangle. The windows form a squared partition of
//! unity, so the transform is a tight frame: coefficient energy equals image
//! energy and [`CurveletTransform::inverse`] is an exact left inverse.
//!
//! The innermost (low-pass) and outermost (high-pass) scales are undirected.
//! Directional scale `j` carries `K(j) = K2 * 2^ceil((j - 2) / 2)` wedges;
//! wedges `k` and `k + K(j)/2` are point reflections of each other, so for a
//! real image their coefficients are entrywise complex conjugates.

mod fft;
mod tiling;

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgprep::GrayImage;
use fft::Fft2;
use tiling::WedgeGeometry;

/// Smallest supported image side.
pub const MIN_IMAGE_SIDE: usize = 32;
/// Default orientation count at the first directional scale.
pub const DEFAULT_ORIENTATIONS: usize = 16;

/// Number of scales `J` and coarse orientation count `K2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CurveletParams {
    scales: usize,
    orientations_coarse: usize,
}

impl CurveletParams {
    pub fn new(scales: usize, orientations_coarse: usize) -> Result<Self> {
        if scales < 3 {
            return Err(Error::Parameter(format!("need at least 3 scales, got {scales}")));
        }
        if orientations_coarse == 0 || !orientations_coarse.is_multiple_of(4) {
            return Err(Error::Parameter(format!(
                "coarse orientation count must be a positive multiple of 4, got {orientations_coarse}"
            )));
        }
        Ok(Self {
            scales,
            orientations_coarse,
        })
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn orientations_coarse(&self) -> usize {
        self.orientations_coarse
    }

    /// Orientation count `K(j)` of scale `j` (1-based).
    pub fn orientations(&self, scale: usize) -> usize {
        if scale <= 1 || scale >= self.scales {
            1
        } else {
            self.orientations_coarse << (scale - 2).div_ceil(2)
        }
    }

    pub fn is_directional(&self, scale: usize) -> bool {
        scale > 1 && scale < self.scales
    }

    /// Total number of wedges over all scales.
    pub fn wedge_count(&self) -> usize {
        (1..=self.scales).map(|j| self.orientations(j)).sum()
    }
}

/// Validated parameters for an `height x width` image.
///
/// Defaults: `J = max(3, ceil(log2(min side)) - 3)`, `K2 = 16`. The image must
/// be at least 32 pixels on its short side and at least `2^(J + 2)` pixels so
/// that the low-pass square is not degenerate.
pub fn make_params(
    height: usize,
    width: usize,
    scales: Option<usize>,
    orientations_coarse: Option<usize>,
) -> Result<CurveletParams> {
    let side = height.min(width);
    if side < MIN_IMAGE_SIDE {
        return Err(Error::Parameter(format!(
            "image {height}x{width} is smaller than the {MIN_IMAGE_SIDE}-pixel minimum"
        )));
    }
    let default_scales = (side.next_power_of_two().trailing_zeros() as usize)
        .saturating_sub(3)
        .max(3);
    let params = CurveletParams::new(
        scales.unwrap_or(default_scales),
        orientations_coarse.unwrap_or(DEFAULT_ORIENTATIONS),
    )?;
    if side < 1 << (params.scales + 2) {
        return Err(Error::Parameter(format!(
            "{} scales need an image side of at least {} pixels, got {height}x{width}",
            params.scales,
            1usize << (params.scales + 2)
        )));
    }
    // Reject orientation counts that leave some wedge without support.
    tiling::build(height, width, &params)?;
    Ok(params)
}

/// Coefficient matrix of one wedge.
#[derive(Clone, PartialEq)]
pub struct Wedge {
    pub scale: usize,
    pub orientation: usize,
    pub coefficients: DMatrix<Complex64>,
}

impl fmt::Debug for Wedge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Wedge")
            .field("scale", &self.scale)
            .field("orientation", &self.orientation)
            .field("shape", &self.coefficients.shape())
            .finish()
    }
}

impl Wedge {
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// All wedges of one image, coarsest first, then scale-major by orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveletDecomposition {
    pub params: CurveletParams,
    pub height: usize,
    pub width: usize,
    pub wedges: Vec<Wedge>,
}

impl CurveletDecomposition {
    pub fn get(&self, scale: usize, orientation: usize) -> Option<&Wedge> {
        self.wedges
            .iter()
            .find(|w| w.scale == scale && w.orientation == orientation)
    }

    pub fn energy(&self) -> f64 {
        self.wedges.iter().map(Wedge::energy).sum()
    }

    /// Same structure with every coefficient set to zero.
    pub fn zeros_like(&self) -> Self {
        let wedges = self
            .wedges
            .iter()
            .map(|w| Wedge {
                scale: w.scale,
                orientation: w.orientation,
                coefficients: DMatrix::zeros(w.coefficients.nrows(), w.coefficients.ncols()),
            })
            .collect();
        Self {
            wedges,
            ..*self
        }
    }
}

/// Precomputed windows and FFT plans for one image size and parameter set.
///
/// Immutable after construction; share it across threads to transform many
/// images of the same size.
pub struct CurveletTransform {
    params: CurveletParams,
    height: usize,
    width: usize,
    geometry: Vec<WedgeGeometry>,
    image_fft: Fft2,
    wedge_ffts: HashMap<(usize, usize), Fft2>,
}

impl fmt::Debug for CurveletTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CurveletTransform")
            .field("params", &self.params)
            .field("height", &self.height)
            .field("width", &self.width)
            .field("wedges", &self.geometry.len())
            .finish()
    }
}

impl CurveletTransform {
    pub fn new(height: usize, width: usize, params: CurveletParams) -> Result<Self> {
        let geometry = tiling::build(height, width, &params)?;
        let mut planner = FftPlanner::new();
        let image_fft = Fft2::new(&mut planner, height, width);
        let mut wedge_ffts = HashMap::new();
        for g in &geometry {
            wedge_ffts
                .entry((g.rows, g.cols))
                .or_insert_with(|| Fft2::new(&mut planner, g.rows, g.cols));
        }
        Ok(Self {
            params,
            height,
            width,
            geometry,
            image_fft,
            wedge_ffts,
        })
    }

    pub fn params(&self) -> CurveletParams {
        self.params
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(scale, orientation, rows, cols)` of every wedge in output order.
    pub fn wedge_shapes(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        self.geometry
            .iter()
            .map(|g| (g.scale, g.orientation, g.rows, g.cols))
    }

    pub fn forward(&self, image: &GrayImage) -> Result<CurveletDecomposition> {
        if image.height() != self.height || image.width() != self.width {
            return Err(Error::Dimension(format!(
                "image is {}x{}, transform was built for {}x{}",
                image.height(),
                image.width(),
                self.height,
                self.width
            )));
        }
        self.forward_real(image.pixels())
    }

    /// Forward transform of arbitrary real row-major data.
    pub fn forward_real(&self, data: &[f64]) -> Result<CurveletDecomposition> {
        if data.len() != self.height * self.width {
            return Err(Error::Dimension(format!(
                "{} samples for a {}x{} transform",
                data.len(),
                self.height,
                self.width
            )));
        }
        let mut spectrum: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.image_fft.forward(&mut spectrum);

        let wedges = self
            .geometry
            .par_iter()
            .map(|g| {
                let mut rect = vec![Complex64::default(); g.rows * g.cols];
                for e in &g.entries {
                    rect[e.rect] = spectrum[e.grid] * e.weight;
                }
                self.wedge_ffts[&(g.rows, g.cols)].inverse(&mut rect);
                Wedge {
                    scale: g.scale,
                    orientation: g.orientation,
                    coefficients: DMatrix::from_row_slice(g.rows, g.cols, &rect),
                }
            })
            .collect();
        Ok(CurveletDecomposition {
            params: self.params,
            height: self.height,
            width: self.width,
            wedges,
        })
    }

    /// Adjoint of [`forward`](Self::forward); also its inverse on real images.
    ///
    /// Returns a `height x width` real matrix (real part of the reconstruction).
    pub fn inverse(&self, decomposition: &CurveletDecomposition) -> Result<DMatrix<f64>> {
        self.check_structure(decomposition)?;
        let partials: Vec<Vec<(usize, Complex64)>> = self
            .geometry
            .par_iter()
            .zip(&decomposition.wedges)
            .map(|(g, w)| {
                let mut rect: Vec<Complex64> = Vec::with_capacity(g.rows * g.cols);
                for r in 0..g.rows {
                    rect.extend(w.coefficients.row(r).iter());
                }
                self.wedge_ffts[&(g.rows, g.cols)].forward(&mut rect);
                g.entries
                    .iter()
                    .map(|e| (e.grid, rect[e.rect] * e.weight))
                    .collect()
            })
            .collect();
        let mut spectrum = vec![Complex64::default(); self.height * self.width];
        for partial in partials {
            for (grid, v) in partial {
                spectrum[grid] += v;
            }
        }
        self.image_fft.inverse(&mut spectrum);
        Ok(DMatrix::from_row_iterator(
            self.height,
            self.width,
            spectrum.iter().map(|z| z.re),
        ))
    }

    fn check_structure(&self, d: &CurveletDecomposition) -> Result<()> {
        if d.params != self.params || d.height != self.height || d.width != self.width {
            return Err(Error::Structure(format!(
                "decomposition of a {}x{} image with {:?} does not match transform {}x{} with {:?}",
                d.height, d.width, d.params, self.height, self.width, self.params
            )));
        }
        if d.wedges.len() != self.geometry.len() {
            return Err(Error::Structure(format!(
                "{} wedges, expected {}",
                d.wedges.len(),
                self.geometry.len()
            )));
        }
        for (g, w) in self.geometry.iter().zip(&d.wedges) {
            if (w.scale, w.orientation) != (g.scale, g.orientation)
                || w.coefficients.shape() != (g.rows, g.cols)
            {
                return Err(Error::Structure(format!(
                    "wedge ({}, {}) of shape {:?} where ({}, {}) of shape {:?} was expected",
                    w.scale,
                    w.orientation,
                    w.coefficients.shape(),
                    g.scale,
                    g.orientation,
                    (g.rows, g.cols)
                )));
            }
        }
        Ok(())
    }
}

/// One-shot forward transform.
pub fn forward(image: &GrayImage, params: &CurveletParams) -> Result<CurveletDecomposition> {
    CurveletTransform::new(image.height(), image.width(), *params)?.forward(image)
}

/// One-shot inverse transform.
pub fn inverse(decomposition: &CurveletDecomposition) -> Result<DMatrix<f64>> {
    CurveletTransform::new(decomposition.height, decomposition.width, decomposition.params)?
        .inverse(decomposition)
}
