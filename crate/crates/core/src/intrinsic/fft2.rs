use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned 2-D FFT over a row-major `height`×`width` complex buffer.
pub(crate) struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &*self.row_fwd, &*self.col_fwd);
    }

    /// Inverse transform including the `1/(w*h)` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &*self.row_inv, &*self.col_inv);
        let norm = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= norm;
        }
    }

    fn run(&self, buf: &mut [Complex64], rows: &dyn Fft<f64>, cols: &dyn Fft<f64>) {
        debug_assert_eq!(buf.len(), self.len());
        rows.process(buf);
        let mut t = vec![Complex64::default(); buf.len()];
        transpose(buf, &mut t, self.width, self.height);
        cols.process(&mut t);
        transpose(&t, buf, self.height, self.width);
    }

    /// Index of the frequency `-k` for the flat index `k`.
    pub fn negated(&self, idx: usize) -> usize {
        let (y, x) = (idx / self.width, idx % self.width);
        let ny = (self.height - y) % self.height;
        let nx = (self.width - x) % self.width;
        ny * self.width + nx
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], width: usize, height: usize) {
    const BLOCK: usize = 16;
    for by in (0..height).step_by(BLOCK) {
        for bx in (0..width).step_by(BLOCK) {
            for y in by..(by + BLOCK).min(height) {
                for x in bx..(bx + BLOCK).min(width) {
                    dst[x * height + y] = src[y * width + x];
                }
            }
        }
    }
}
