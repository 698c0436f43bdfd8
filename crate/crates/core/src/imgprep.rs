//! Image loading, luminance conversion and texture-database preparation.

use std::fmt;
use std::path::Path;

use image::{ColorType, DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rec. 601 luma weights.
const LUMA_RED: f64 = 0.299;
const LUMA_BLUE: f64 = 0.114;

/// Side of the central CUReT crop.
const CURET_CROP: usize = 256;
/// Side of every prepared patch.
pub const PATCH_SIZE: usize = 128;
/// Downsampling factor applied to PerTex images.
const PERTEX_FACTOR: usize = 4;

/// Grayscale image with row-major intensities in `[0, 1]`.
#[derive(Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayImage")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "image must be non-empty, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} pixels supplied for a {height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Dimension(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(row, col)`; values are clamped to `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let v = f(r, c);
                if v.is_nan() {
                    return Err(Error::Dimension(format!("NaN pixel at ({r}, {c})")));
                }
                pixels.push(v.clamp(0.0, 1.0));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Copies the `height x width` region whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::Dimension(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(height * width);
        for r in top..top + height {
            let start = r * self.width + left;
            pixels.extend_from_slice(&self.pixels[start..start + width]);
        }
        Self::new(height, width, pixels)
    }

    /// Mean pooling over non-overlapping `factor x factor` blocks.
    pub fn box_downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.height.is_multiple_of(factor) || !self.width.is_multiple_of(factor) {
            return Err(Error::Dimension(format!(
                "{}x{} image is not divisible by downsampling factor {factor}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let norm = (factor * factor) as f64;
        let mut pixels = vec![0.0; h * w];
        for r in 0..self.height {
            let out_row = &mut pixels[(r / factor) * w..(r / factor + 1) * w];
            for (c, v) in self.pixels[r * self.width..(r + 1) * self.width].iter().enumerate() {
                out_row[c / factor] += v;
            }
        }
        for v in &mut pixels {
            *v = (*v / norm).clamp(0.0, 1.0);
        }
        Self::new(h, w, pixels)
    }

    /// Writes a 16-bit grayscale PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf: Vec<u16> = self
            .pixels
            .iter()
            .map(|v| (v * f64::from(u16::MAX)).round() as u16)
            .collect();
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, buf)
                .expect("buffer length matches dimensions");
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Three-channel image with channels stored as separate planes.
#[derive(Debug, Clone)]
pub struct RgbImage {
    pub red: GrayImage,
    pub green: GrayImage,
    pub blue: GrayImage,
}

/// Rec. 601 luminance `Y = 0.299 R + 0.587 G + 0.114 B`.
pub fn to_luminance(rgb: &RgbImage) -> Result<GrayImage> {
    let dims = |c: &GrayImage| (c.height, c.width);
    if dims(&rgb.red) != dims(&rgb.green) || dims(&rgb.red) != dims(&rgb.blue) {
        return Err(Error::Dimension(format!(
            "channel dimensions differ: red {:?}, green {:?}, blue {:?}",
            dims(&rgb.red),
            dims(&rgb.green),
            dims(&rgb.blue)
        )));
    }
    let pixels = rgb
        .red
        .pixels
        .iter()
        .zip(&rgb.green.pixels)
        .zip(&rgb.blue.pixels)
        .map(|((&r, &g), &b)| luma(r, g, b))
        .collect();
    GrayImage::new(rgb.red.height, rgb.red.width, pixels)
}

// Written relative to green so that r == g == b returns g exactly.
fn luma(r: f64, g: f64, b: f64) -> f64 {
    (g + LUMA_RED * (r - g) + LUMA_BLUE * (b - g)).clamp(0.0, 1.0)
}

/// Loads an image file and reduces it to its luminance channel.
///
/// 8-bit samples are divided by 255, 16-bit samples by 65535.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(from_dynamic(&img))
}

/// Decodes an in-memory image file and reduces it to its luminance channel.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory(bytes).map_err(|source| Error::Image {
        path: "<memory>".into(),
        source,
    })?;
    Ok(from_dynamic(&img))
}

fn from_dynamic(img: &DynamicImage) -> GrayImage {
    let (width, height) = (img.width() as usize, img.height() as usize);
    let wide = matches!(
        img.color(),
        ColorType::L16
            | ColorType::La16
            | ColorType::Rgb16
            | ColorType::Rgba16
            | ColorType::Rgb32F
            | ColorType::Rgba32F
    );
    let pixels: Vec<f64> = match (img.color().has_color(), wide) {
        (false, false) => img.to_luma8().iter().map(|&v| f64::from(v) / 255.0).collect(),
        (false, true) => img
            .to_luma16()
            .iter()
            .map(|&v| f64::from(v) / 65535.0)
            .collect(),
        (true, false) => img
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(|v| f64::from(v) / 255.0);
                luma(r, g, b)
            })
            .collect(),
        (true, true) => img
            .to_rgb16()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(|v| f64::from(v) / 65535.0);
                luma(r, g, b)
            })
            .collect(),
    };
    GrayImage {
        height,
        width,
        pixels,
    }
}

/// CUReT recipe: crop the central 256x256 region, split it into four 128x128
/// patches in row-major order and keep the first three.
pub fn prepare_curet(image: &GrayImage) -> Result<Vec<GrayImage>> {
    if image.height < CURET_CROP || image.width < CURET_CROP {
        return Err(Error::Dimension(format!(
            "CUReT source must be at least {CURET_CROP}x{CURET_CROP}, got {}x{}",
            image.height, image.width
        )));
    }
    let top = (image.height - CURET_CROP) / 2;
    let left = (image.width - CURET_CROP) / 2;
    quadrant_origins()
        .take(DatasetKind::Curet.samples_per_class())
        .map(|(r, c)| image.crop(top + r, left + c, PATCH_SIZE, PATCH_SIZE))
        .collect()
}

/// PerTex recipe: 4x4 box-average downsampling to 256x256, then the four
/// 128x128 quadrants (top-left, top-right, bottom-left, bottom-right).
pub fn prepare_pertex(image: &GrayImage) -> Result<Vec<GrayImage>> {
    let expected = CURET_CROP * PERTEX_FACTOR;
    if image.height != expected || image.width != expected {
        return Err(Error::Dimension(format!(
            "PerTex source must be {expected}x{expected}, got {}x{}",
            image.height, image.width
        )));
    }
    let small = image.box_downsample(PERTEX_FACTOR)?;
    quadrant_origins()
        .map(|(r, c)| small.crop(r, c, PATCH_SIZE, PATCH_SIZE))
        .collect()
}

fn quadrant_origins() -> impl Iterator<Item = (usize, usize)> {
    [(0, 0), (0, PATCH_SIZE), (PATCH_SIZE, 0), (PATCH_SIZE, PATCH_SIZE)].into_iter()
}

/// Texture databases with a known preparation recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Curet,
    Pertex,
}

impl DatasetKind {
    pub fn samples_per_class(self) -> usize {
        match self {
            DatasetKind::Curet => 3,
            DatasetKind::Pertex => 4,
        }
    }

    pub fn prepare(self, image: &GrayImage) -> Result<Vec<GrayImage>> {
        match self {
            DatasetKind::Curet => prepare_curet(image),
            DatasetKind::Pertex => prepare_pertex(image),
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "curet" => Ok(DatasetKind::Curet),
            "pertex" => Ok(DatasetKind::Pertex),
            other => Err(Error::Parameter(format!("unknown dataset kind {other:?}"))),
        }
    }
}

/// One image of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub class: usize,
    pub sample: usize,
    /// File name, relative to the manifest directory.
    pub filename: String,
}

/// `C` classes with exactly `S` samples each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetLayout {
    pub class_count: usize,
    pub samples_per_class: usize,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetLayout {
    pub fn new(class_count: usize, samples_per_class: usize, entries: Vec<DatasetEntry>) -> Result<Self> {
        let layout = Self {
            class_count,
            samples_per_class,
            entries,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 || self.samples_per_class == 0 {
            return Err(Error::Config(format!(
                "dataset needs at least one class and one sample, got C={} S={}",
                self.class_count, self.samples_per_class
            )));
        }
        if self.entries.len() != self.class_count * self.samples_per_class {
            return Err(Error::Config(format!(
                "{} entries for C={} S={}",
                self.entries.len(),
                self.class_count,
                self.samples_per_class
            )));
        }
        let mut counts = vec![0usize; self.class_count];
        for e in &self.entries {
            match counts.get_mut(e.class) {
                Some(n) => *n += 1,
                None => {
                    return Err(Error::Config(format!(
                        "class id {} out of range for C={}",
                        e.class, self.class_count
                    )))
                }
            }
        }
        if let Some((class, n)) = counts
            .iter()
            .enumerate()
            .find(|(_, &n)| n != self.samples_per_class)
        {
            return Err(Error::Config(format!(
                "class {class} has {n} samples, expected {}",
                self.samples_per_class
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Class id of every entry, in entry order.
    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.class).collect()
    }
}

pub const MANIFEST_VERSION: u32 = 1;

/// On-disk form of a prepared dataset (`manifest.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<DatasetKind>,
    /// Source file of each class, indexed by class id.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
    #[serde(flatten)]
    pub layout: DatasetLayout,
}

impl Manifest {
    pub fn new(layout: DatasetLayout) -> Self {
        Self {
            version: MANIFEST_VERSION,
            kind: None,
            sources: Vec::new(),
            layout,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        manifest.layout.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
