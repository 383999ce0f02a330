//! Unitary multi-dimensional FFT on a [`Grid`].

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::model::Grid;

/// Lines per rayon task when transforming along an axis.
const LINES_PER_TASK: usize = 64;

/// Forward/inverse transforms normalized by `n^{−dims/2}` each, so that the
/// pair is unitary and Fourier multipliers stay exactly Hermitian.
#[derive(Clone)]
pub struct GridFft {
    n: usize,
    dims: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for GridFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFft")
            .field("n", &self.n)
            .field("dims", &self.dims)
            .finish()
    }
}

impl GridFft {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n();
        Self {
            n,
            dims: grid.dims(),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scale: (grid.size() as f64).powf(-0.5),
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    /// Unnormalized forward DFT `Σ_m f_m e^{−2πi q·m/n}`.
    pub fn forward_unnormalized(&self, data: &mut [Complex64]) {
        self.forward(data);
        let s = 1.0 / self.scale;
        data.iter_mut().for_each(|v| *v *= s);
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n.pow(self.dims as u32));
        if self.dims == 0 {
            return;
        }
        let total = data.len();
        let mut lines = vec![Complex64::new(0.0, 0.0); total];
        for axis in 0..self.dims {
            let stride = n.pow((self.dims - 1 - axis) as u32);
            if stride == 1 {
                data.par_chunks_mut(n * LINES_PER_TASK).for_each(|chunk| {
                    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
                    fft.process_with_scratch(chunk, &mut scratch);
                });
                continue;
            }
            // gather: line l = (outer, inner), element m at outer*n*stride + m*stride + inner
            let block = n * stride;
            lines
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(l, line)| {
                    let outer = l / stride;
                    let inner = l % stride;
                    let base = outer * block + inner;
                    for (m, v) in line.iter_mut().enumerate() {
                        *v = data[base + m * stride];
                    }
                });
            lines.par_chunks_mut(n * LINES_PER_TASK).for_each(|chunk| {
                let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(chunk, &mut scratch);
            });
            // scatter, one outer block per task
            let lines_ref = &lines;
            data.par_chunks_mut(block).enumerate().for_each(|(outer, out)| {
                for inner in 0..stride {
                    let line = &lines_ref[(outer * stride + inner) * n..(outer * stride + inner + 1) * n];
                    for (m, v) in line.iter().enumerate() {
                        out[m * stride + inner] = *v;
                    }
                }
            });
        }
        let s = self.scale;
        data.par_iter_mut().for_each(|v| *v *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_grid;

    fn naive_dft_2d(data: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for q0 in 0..n {
            for q1 in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for m0 in 0..n {
                    for m1 in 0..n {
                        let ph = -2.0 * std::f64::consts::PI * ((q0 * m0 + q1 * m1) as f64) / n as f64;
                        acc += data[m0 * n + m1] * Complex64::from_polar(1.0, ph);
                    }
                }
                out[q0 * n + q1] = acc / n as f64;
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft_in_two_dimensions() {
        let g = make_grid(2, 8, 1.0).unwrap();
        let fft = GridFft::new(&g);
        let data: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut a = data.clone();
        fft.forward(&mut a);
        let b = naive_dft_2d(&data, 8);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_three_dimensions() {
        let g = make_grid(3, 8, 1.0).unwrap();
        let fft = GridFft::new(&g);
        let data: Vec<Complex64> = (0..512).map(|i| Complex64::new(i as f64, -(i as f64).sqrt())).collect();
        let mut a = data.clone();
        fft.forward(&mut a);
        fft.inverse(&mut a);
        for (x, y) in a.iter().zip(&data) {
            assert!((x - y).norm() < 1e-9);
        }
    }

    #[test]
    fn unitary_preserves_norm() {
        let g = make_grid(2, 16, 1.0).unwrap();
        let fft = GridFft::new(&g);
        let mut a: Vec<Complex64> = (0..256).map(|i| Complex64::new((i % 7) as f64, (i % 3) as f64)).collect();
        let before: f64 = a.iter().map(|v| v.norm_sqr()).sum();
        fft.forward(&mut a);
        let after: f64 = a.iter().map(|v| v.norm_sqr()).sum();
        assert!((before - after).abs() < 1e-9 * before);
    }
}
