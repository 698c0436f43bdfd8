//! Unitary 2-D FFT over row-major complex buffers.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned forward and inverse transforms for one `rows x cols` grid.
///
/// Both directions are scaled by `1 / sqrt(rows * cols)`, so they are
/// mutually inverse and preserve the l2 norm.
#[derive(Clone)]
pub(crate) struct Fft2 {
    rows: usize,
    cols: usize,
    scale: f64,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(planner: &mut FftPlanner<f64>, rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            scale: 1.0 / ((rows * cols) as f64).sqrt(),
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.process(data, &*self.row_fwd, &*self.col_fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.process(data, &*self.row_inv, &*self.col_inv);
    }

    fn process(&self, data: &mut [Complex64], row_fft: &dyn Fft<f64>, col_fft: &dyn Fft<f64>) {
        assert_eq!(data.len(), self.rows * self.cols);
        let scratch_len = row_fft
            .get_inplace_scratch_len()
            .max(col_fft.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::default(); scratch_len];
        for row in data.chunks_exact_mut(self.cols) {
            row_fft.process_with_scratch(row, &mut scratch);
        }
        let mut column = vec![Complex64::default(); self.rows];
        for c in 0..self.cols {
            for (r, v) in column.iter_mut().enumerate() {
                *v = data[r * self.cols + c];
            }
            col_fft.process_with_scratch(&mut column, &mut scratch);
            for (r, v) in column.iter().enumerate() {
                data[r * self.cols + c] = v * self.scale;
            }
        }
    }
}

/// Signed frequency of FFT bin `index` on an axis of length `n`.
///
/// Bins `0..ceil(n/2)` are non-negative; the rest wrap to negative
/// frequencies, so even lengths carry the Nyquist bin at `-n/2`.
pub(crate) fn signed_frequency(index: usize, n: usize) -> isize {
    if index < n.div_ceil(2) {
        index as isize
    } else {
        index as isize - n as isize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_frequencies() {
        let even: Vec<_> = (0..6).map(|i| signed_frequency(i, 6)).collect();
        assert_eq!(even, [0, 1, 2, -3, -2, -1]);
        let odd: Vec<_> = (0..5).map(|i| signed_frequency(i, 5)).collect();
        assert_eq!(odd, [0, 1, 2, -2, -1]);
    }

    #[test]
    fn matches_direct_dft_and_round_trips() {
        let (rows, cols) = (6, 10);
        let input: Vec<Complex64> = (0..rows * cols)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut planner = FftPlanner::new();
        let fft = Fft2::new(&mut planner, rows, cols);
        let mut data = input.clone();
        fft.forward(&mut data);

        let norm = 1.0 / ((rows * cols) as f64).sqrt();
        for (k1, k2) in [(0, 0), (1, 3), (5, 9), (3, 5)] {
            let mut acc = Complex64::default();
            for r in 0..rows {
                for c in 0..cols {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * ((k1 * r) as f64 / rows as f64 + (k2 * c) as f64 / cols as f64);
                    acc += input[r * cols + c] * Complex64::from_polar(1.0, phase);
                }
            }
            assert!((acc * norm - data[k1 * cols + k2]).norm() < 1e-12);
        }

        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&input) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
