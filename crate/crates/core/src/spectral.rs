//! Two-dimensional DFT of real planes.
//!
//! Rows go through a real-to-complex transform (`realfft`), leaving
//! `w / 2 + 1` frequencies per row; columns then go through a complex
//! transform (`rustfft`). The half spectrum is kept column-major, index
//! `kx * h + ky`, so the column pass needs no transpose back. Any
//! per-frequency multiplier must be laid out the same way, see
//! [`RealFft2::half_of`].

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::Shape;

#[derive(Clone)]
pub struct RealFft2 {
    shape: Shape,
    row_fwd: Arc<dyn RealToComplex<f64>>,
    row_inv: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft2").field("shape", &self.shape).finish()
    }
}

impl RealFft2 {
    pub fn new(shape: Shape) -> Self {
        let mut real = RealFftPlanner::new();
        let mut complex = FftPlanner::new();
        RealFft2 {
            shape,
            row_fwd: real.plan_fft_forward(shape.width),
            row_inv: real.plan_fft_inverse(shape.width),
            col_fwd: complex.plan_fft_forward(shape.height),
            col_inv: complex.plan_fft_inverse(shape.height),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Number of stored column frequencies, `w / 2 + 1`.
    pub fn half_width(&self) -> usize {
        self.shape.width / 2 + 1
    }

    /// Length of a half spectrum.
    pub fn half_len(&self) -> usize {
        self.half_width() * self.shape.height
    }

    /// Reorders a full `h x w` row-major array of per-frequency values into
    /// the half-spectrum layout.
    pub fn half_of(&self, full: &[f64]) -> Vec<f64> {
        let (h, w) = (self.shape.height, self.shape.width);
        assert_eq!(full.len(), h * w);
        let mut out = Vec::with_capacity(self.half_len());
        for kx in 0..self.half_width() {
            out.extend((0..h).map(|ky| full[ky * w + kx]));
        }
        out
    }

    /// Unnormalized forward DFT of a real row-major plane, frequencies
    /// `kx <= w / 2` only.
    pub fn forward(&self, plane: &[f64]) -> Vec<Complex64> {
        let mut out = Vec::new();
        self.forward_into(plane, &mut out, &mut FftBuffers::default());
        out
    }

    /// [`forward`](Self::forward) into `out`, reusing `buf` across calls.
    pub fn forward_into(&self, plane: &[f64], out: &mut Vec<Complex64>, buf: &mut FftBuffers) {
        let (h, w) = (self.shape.height, self.shape.width);
        assert_eq!(plane.len(), h * w);
        let wc = self.half_width();
        self.reserve(buf);
        buf.rows.clear();
        for src in plane.chunks_exact(w) {
            buf.real.copy_from_slice(src);
            self.row_fwd
                .process_with_scratch(&mut buf.real, &mut buf.line, &mut buf.scratch)
                .expect("buffer lengths match the plan");
            buf.rows.extend_from_slice(&buf.line);
        }
        transpose_into(&buf.rows, h, wc, out);
        if h > 1 {
            self.col_fwd.process_with_scratch(out, &mut buf.scratch);
        }
    }

    /// Inverse of [`forward`](Self::forward), scaled by `1 / (h w)`.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.pixels()];
        self.inverse_into(&mut spectrum, &mut out, &mut FftBuffers::default());
        out
    }

    /// [`inverse_real`](Self::inverse_real) into `out`. The spectrum is
    /// used as workspace and left unspecified.
    pub fn inverse_into(&self, spectrum: &mut [Complex64], out: &mut [f64], buf: &mut FftBuffers) {
        let (h, w) = (self.shape.height, self.shape.width);
        let wc = self.half_width();
        assert_eq!(spectrum.len(), h * wc);
        assert_eq!(out.len(), h * w);
        self.reserve(buf);
        if h > 1 {
            self.col_inv.process_with_scratch(spectrum, &mut buf.scratch);
        }
        transpose_into(spectrum, wc, h, &mut buf.rows);
        let scale = 1.0 / self.shape.pixels() as f64;
        for (src, dst) in buf.rows.chunks_exact_mut(wc).zip(out.chunks_exact_mut(w)) {
            // These bins are real for a real signal; drop round-off.
            src[0].im = 0.0;
            if w % 2 == 0 {
                src[wc - 1].im = 0.0;
            }
            self.row_inv
                .process_with_scratch(src, dst, &mut buf.scratch)
                .expect("buffer lengths match the plan");
            for v in dst {
                *v *= scale;
            }
        }
    }

    fn reserve(&self, buf: &mut FftBuffers) {
        let scratch = [
            self.row_fwd.get_scratch_len(),
            self.row_inv.get_scratch_len(),
            self.col_fwd.get_inplace_scratch_len(),
            self.col_inv.get_inplace_scratch_len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        if buf.scratch.len() < scratch {
            buf.scratch.resize(scratch, Complex64::default());
        }
        buf.real.resize(self.shape.width, 0.0);
        buf.line.resize(self.half_width(), Complex64::default());
    }
}

/// Work buffers for [`RealFft2`], kept between calls to avoid reallocating.
#[derive(Debug, Clone, Default)]
pub struct FftBuffers {
    rows: Vec<Complex64>,
    real: Vec<f64>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

/// Smallest length `>= n` with no prime factor above 5.
pub fn fast_len(n: usize) -> usize {
    let smooth = |mut m: usize| {
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        m == 1
    };
    (n.max(1)..).find(|&m| smooth(m)).expect("5-smooth numbers are unbounded")
}

/// Transposes an `h x w` row-major buffer into `dst` as `w x h`.
fn transpose_into(src: &[Complex64], h: usize, w: usize, dst: &mut Vec<Complex64>) {
    const B: usize = 16;
    assert_eq!(src.len(), h * w);
    if dst.len() != src.len() {
        dst.clear();
        dst.resize(src.len(), Complex64::default());
    }
    for yb in (0..h).step_by(B) {
        let ye = (yb + B).min(h);
        for xb in (0..w).step_by(B) {
            let xe = (xb + B).min(w);
            for y in yb..ye {
                let row = &src[y * w + xb..y * w + xe];
                for (x, v) in (xb..xe).zip(row) {
                    dst[x * h + y] = *v;
                }
            }
        }
    }
}
