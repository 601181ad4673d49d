//! FFT helpers for the periodic spectral solvers.
//!
//! Periodic fields sample `n` points of a torus whose circumference is
//! `n * spacing` (index-wrap convention: the point after the last grid
//! point is the first one).

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Angular wavenumbers for an n-point FFT over period `length`.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / length;
    (0..n)
        .map(|i| {
            let m = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
            base * m as f64
        })
        .collect()
}

pub struct Fft1d {
    n: usize,
    forward: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inverse: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft1d {
    pub fn new(n: usize) -> Fft1d {
        let mut planner = FftPlanner::new();
        Fft1d {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

/// In-place 2D FFT over a row-major `nx x ny` buffer.
pub struct Fft2d {
    nx: usize,
    ny: usize,
    row: Fft1d,
    col: Fft1d,
}

impl Fft2d {
    pub fn new(nx: usize, ny: usize) -> Fft2d {
        Fft2d {
            nx,
            ny,
            row: Fft1d::new(ny),
            col: Fft1d::new(nx),
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.nx * self.ny);
        for r in 0..self.nx {
            let row = &mut buf[r * self.ny..(r + 1) * self.ny];
            if inverse {
                self.row.inverse(row);
            } else {
                self.row.forward(row);
            }
        }
        let mut col = vec![Complex64::default(); self.nx];
        for c in 0..self.ny {
            for r in 0..self.nx {
                col[r] = buf[r * self.ny + c];
            }
            if inverse {
                self.col.inverse(&mut col);
            } else {
                self.col.forward(&mut col);
            }
            for r in 0..self.nx {
                buf[r * self.ny + c] = col[r];
            }
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
    }
}
