//! Pseudo-polar frequency tiling and the smooth windows attached to it.
//!
//! Frequencies are normalized per axis to `xi = 2 * omega / n` in `[-1, 1)`.
//! Scales are concentric squares: the low-pass window of scale `j` is the
//! separable product `l(|xi1| / rho_j) * l(|xi2| / rho_j)` with
//! `rho_j = 2^(j - J)`, and the band of scale `j` is
//! `sqrt(L_j^2 - L_{j-1}^2)`. Directional bands are split by angular windows
//! over the perimeter of the unit square. All windows together satisfy
//! `sum U^2 = 1` at every frequency.

use std::f64::consts::FRAC_PI_2;

use super::fft::signed_frequency;
use super::CurveletParams;
use crate::error::{Error, Result};

/// One nonzero window sample of a wedge.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WindowEntry {
    /// Row-major index into the image spectrum.
    pub grid: usize,
    /// Row-major index into the wrapped rectangle.
    pub rect: usize,
    pub weight: f64,
}

/// Support, window and wrapping rectangle of a single wedge.
#[derive(Debug, Clone)]
pub(crate) struct WedgeGeometry {
    pub scale: usize,
    pub orientation: usize,
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<WindowEntry>,
}

/// Smooth monotone step with `nu(0) = 0`, `nu(1) = 1`.
fn nu(t: f64) -> f64 {
    let s = (FRAC_PI_2 * t.clamp(0.0, 1.0)).sin();
    s * s
}

/// Falling and rising halves of a transition, normalized so that
/// `left^2 + right^2 = 1`.
pub(crate) fn transition_pair(t: f64) -> (f64, f64) {
    let rise = nu(t);
    let fall = nu(1.0 - t);
    let norm = (rise * rise + fall * fall).sqrt();
    (fall / norm, rise / norm)
}

/// Radial profile of a low-pass window: 1 below 2/3, 0 above 4/3.
fn lowpass_profile(t: f64) -> f64 {
    const START: f64 = 2.0 / 3.0;
    const END: f64 = 4.0 / 3.0;
    if t <= START {
        1.0
    } else if t >= END {
        0.0
    } else {
        transition_pair((t - START) / (END - START)).0
    }
}

/// Position along the perimeter of the unit square, in `[0, 8)`.
///
/// Starts at the corner `(xi2, xi1) = (1, -1)` and runs counterclockwise, so
/// the point reflection `xi -> -xi` adds exactly 4.
fn perimeter_angle(xi1: f64, xi2: f64) -> f64 {
    let (x, y) = (xi2, xi1);
    let r = x.abs().max(y.abs());
    let t = if x.abs() >= y.abs() {
        if x > 0.0 {
            1.0 + y / r
        } else {
            5.0 - y / r
        }
    } else if y > 0.0 {
        3.0 - x / r
    } else {
        7.0 + x / r
    };
    t.rem_euclid(8.0)
}

/// Fraction of a wedge's angular width used by each transition half.
const ANGULAR_OVERLAP: f64 = 0.25;

/// Angular windows at perimeter position `t` for `count` wedges.
///
/// Returns at most two `(wedge index, weight)` pairs; weights squared sum to 1.
fn angular_windows(t: f64, count: usize) -> [(usize, f64); 2] {
    let pos = t * count as f64 / 8.0;
    let base = pos.floor();
    let frac = pos - base;
    let m = (base as usize) % count;
    let prev = (m + count - 1) % count;
    let next = (m + 1) % count;
    if frac < ANGULAR_OVERLAP {
        let (fall, rise) = transition_pair((frac + ANGULAR_OVERLAP) / (2.0 * ANGULAR_OVERLAP));
        [(prev, fall), (m, rise)]
    } else if frac > 1.0 - ANGULAR_OVERLAP {
        let (fall, rise) =
            transition_pair((frac - 1.0 + ANGULAR_OVERLAP) / (2.0 * ANGULAR_OVERLAP));
        [(m, fall), (next, rise)]
    } else {
        [(m, 1.0), (next, 0.0)]
    }
}

/// Builds every wedge of the tiling for an `height x width` grid.
///
/// Wedges are ordered coarsest first, then each directional scale with
/// orientations `1..=K(j)`, then the finest scale.
pub(crate) fn build(height: usize, width: usize, params: &CurveletParams) -> Result<Vec<WedgeGeometry>> {
    let scales = params.scales();
    let directional = scales - 2;
    let rho: Vec<f64> = (1..scales).map(|j| (2.0f64).powi(j as i32 - scales as i32)).collect();
    let counts: Vec<usize> = (2..scales).map(|j| params.orientations(j)).collect();

    // Signed frequencies per wedge: (omega1, omega2, grid index, weight).
    let mut coarsest = Vec::new();
    let mut finest = Vec::new();
    let mut bands: Vec<Vec<Vec<(isize, isize, usize, f64)>>> =
        counts.iter().map(|&k| vec![Vec::new(); k]).collect();
    let mut lowpass = vec![0.0; scales - 1];

    for r in 0..height {
        let w1 = signed_frequency(r, height);
        let xi1 = 2.0 * w1 as f64 / height as f64;
        for c in 0..width {
            let w2 = signed_frequency(c, width);
            let xi2 = 2.0 * w2 as f64 / width as f64;
            let grid = r * width + c;
            for (l, &rho) in lowpass.iter_mut().zip(&rho) {
                *l = lowpass_profile(xi1.abs() / rho) * lowpass_profile(xi2.abs() / rho);
            }
            if lowpass[0] > 0.0 {
                coarsest.push((w1, w2, grid, lowpass[0]));
            }
            let high = (1.0 - lowpass[scales - 2].powi(2)).max(0.0).sqrt();
            if high > 0.0 {
                finest.push((w1, w2, grid, high));
            }
            if directional == 0 {
                continue;
            }
            // Angular weights are evaluated on one half-plane and mirrored, so
            // that the windows of wedges k and k + K/2 are exact reflections.
            let mirrored = !(xi1 > 0.0 || (xi1 == 0.0 && xi2 > 0.0));
            let (a1, a2) = if mirrored { (-xi1, -xi2) } else { (xi1, xi2) };
            let t = if a1 == 0.0 && a2 == 0.0 {
                0.0
            } else {
                perimeter_angle(a1, a2)
            };
            for (d, wedges) in bands.iter_mut().enumerate() {
                let band = (lowpass[d + 1].powi(2) - lowpass[d].powi(2)).max(0.0).sqrt();
                if band == 0.0 {
                    continue;
                }
                let count = counts[d];
                for (m, a) in angular_windows(t, count) {
                    if a > 0.0 {
                        let m = if mirrored { (m + count / 2) % count } else { m };
                        wedges[m].push((w1, w2, grid, band * a));
                    }
                }
            }
        }
    }

    let mut out = Vec::with_capacity(2 + counts.iter().sum::<usize>());
    out.push(wrap(1, 1, coarsest)?);
    for (d, wedges) in bands.into_iter().enumerate() {
        for (m, support) in wedges.into_iter().enumerate() {
            out.push(wrap(d + 2, m + 1, support)?);
        }
    }
    out.push(wrap(scales, 1, finest)?);
    Ok(out)
}

/// Places a wedge support into the smallest even-sized rectangle covering its
/// extent along each axis, indexing by frequency modulo the rectangle size.
fn wrap(scale: usize, orientation: usize, support: Vec<(isize, isize, usize, f64)>) -> Result<WedgeGeometry> {
    if support.is_empty() {
        return Err(Error::Parameter(format!(
            "wedge ({scale}, {orientation}) has empty frequency support; \
             reduce the orientation count or the number of scales"
        )));
    }
    let (mut lo1, mut hi1, mut lo2, mut hi2) = (isize::MAX, isize::MIN, isize::MAX, isize::MIN);
    for &(w1, w2, _, _) in &support {
        lo1 = lo1.min(w1);
        hi1 = hi1.max(w1);
        lo2 = lo2.min(w2);
        hi2 = hi2.max(w2);
    }
    let even = |extent: isize| (extent as usize).next_multiple_of(2);
    let rows = even(hi1 - lo1 + 1);
    let cols = even(hi2 - lo2 + 1);
    let entries = support
        .into_iter()
        .map(|(w1, w2, grid, weight)| WindowEntry {
            grid,
            rect: w1.rem_euclid(rows as isize) as usize * cols + w2.rem_euclid(cols as isize) as usize,
            weight,
        })
        .collect();
    Ok(WedgeGeometry {
        scale,
        orientation,
        rows,
        cols,
        entries,
    })
}
