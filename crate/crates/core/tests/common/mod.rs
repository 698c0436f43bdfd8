#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use texsim::imgprep::{DatasetEntry, DatasetLayout};
use texsim::GrayImage;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, height: usize, width: usize) -> GrayImage {
    GrayImage::from_fn(height, width, |_, _| rng.random::<f64>()).unwrap()
}

pub fn layout(classes: usize, samples: usize) -> DatasetLayout {
    let entries = (0..classes * samples)
        .map(|i| DatasetEntry {
            class: i / samples,
            sample: i % samples,
            filename: format!("{}_{}.png", i / samples, i % samples),
        })
        .collect();
    DatasetLayout::new(classes, samples, entries).unwrap()
}

/// Oriented sinusoidal grating with a random phase plus Gaussian noise of
/// standard deviation `noise`.
pub fn grating(
    rng: &mut ChaCha8Rng,
    size: usize,
    cycles_per_pixel: f64,
    angle: f64,
    noise: f64,
) -> GrayImage {
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let normal = Normal::new(0.0, noise).unwrap();
    let (s, c) = angle.sin_cos();
    GrayImage::from_fn(size, size, |r, col| {
        let u = col as f64 * c + r as f64 * s;
        let v = 0.5 + 0.35 * (std::f64::consts::TAU * cycles_per_pixel * u + phase).sin();
        v + normal.sample(rng)
    })
    .unwrap()
}

/// Ten classes of four 128x128 gratings, each class at a distinct
/// frequency/orientation pair, with 10% additive noise.
pub fn synthetic_gratings(seed: u64) -> (Vec<GrayImage>, DatasetLayout) {
    const CLASSES: usize = 10;
    const SAMPLES: usize = 4;
    const FREQUENCIES: [f64; 5] = [0.06, 0.09, 0.12, 0.15, 0.18];
    let mut rng = rng(seed);
    let mut images = Vec::with_capacity(CLASSES * SAMPLES);
    for class in 0..CLASSES {
        let angle = class as f64 * std::f64::consts::PI / CLASSES as f64;
        let freq = FREQUENCIES[class % FREQUENCIES.len()];
        for _ in 0..SAMPLES {
            images.push(grating(&mut rng, 128, freq, angle, 0.1));
        }
    }
    (images, layout(CLASSES, SAMPLES))
}
