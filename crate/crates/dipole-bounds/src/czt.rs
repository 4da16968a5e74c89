//! Chirp-z evaluation of centered discrete Fourier sums.
//!
//! The tube-lens model needs `out[p] = Σ_m f[m] · exp(i α m̃ p̃)` on centered
//! indices `m̃ = m - (n_in-1)/2`, `p̃ = p - (n_out-1)/2` for an arbitrary real
//! phase pitch `α`, i.e. a zoomed DFT whose output lattice is not tied to the
//! input length. Bluestein's identity `m̃p̃ = (m̃² + p̃² - (p̃-m̃)²)/2` turns the
//! sum into a linear convolution against the fixed chirp `exp(-i α k²/2)`,
//! evaluated here with two FFTs of a small padded length.

use crate::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Precomputed one-dimensional zoom transform of fixed sizes and pitch.
pub struct ZoomTransform {
    n_in: usize,
    n_out: usize,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `exp(i α m̃²/2)` per input sample.
    input_chirp: Vec<Complex64>,
    /// `exp(i α p̃²/2) / fft_len` per output sample (inverse-FFT scale folded in).
    output_chirp: Vec<Complex64>,
    /// Forward FFT of the wrapped conjugate chirp.
    kernel_fft: Vec<Complex64>,
}

/// Smallest 5-smooth integer not below `n`; keeps the FFT lengths fast.
fn next_fast_len(n: usize) -> usize {
    let mut len = n.max(1);
    loop {
        let mut m = len;
        for p in [2usize, 3, 5] {
            while m.is_multiple_of(p) {
                m /= p;
            }
        }
        if m == 1 {
            return len;
        }
        len += 1;
    }
}

fn chirp(alpha: f64, idx: f64) -> Complex64 {
    let (s, c) = (0.5 * alpha * idx * idx).sin_cos();
    Complex64::new(c, s)
}

impl ZoomTransform {
    /// Plans a transform from `n_in` to `n_out` samples at phase pitch `alpha`.
    pub fn new(n_in: usize, n_out: usize, alpha: f64) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Domain("zoom transform sizes must be nonzero".into()));
        }
        if !alpha.is_finite() {
            return Err(Error::Domain(format!("zoom transform pitch {alpha}")));
        }
        let fft_len = next_fast_len(n_in + n_out - 1);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);

        let c_in = ((n_in - 1) / 2) as f64;
        let c_out = ((n_out - 1) / 2) as f64;
        let input_chirp: Vec<_> = (0..n_in).map(|j| chirp(alpha, j as f64 - c_in)).collect();
        let scale = 1.0 / fft_len as f64;
        let output_chirp: Vec<_> = (0..n_out)
            .map(|q| chirp(alpha, q as f64 - c_out) * scale)
            .collect();

        // Convolution slot t stands for the index difference q - j (mod fft_len);
        // the chirp argument is the centered lag k = (q - j) + (c_in - c_out).
        let offset = c_in - c_out;
        let mut kernel = vec![Complex64::default(); fft_len];
        for (t, slot) in kernel.iter_mut().enumerate().take(n_out) {
            *slot = chirp(alpha, t as f64 + offset).conj();
        }
        for t in 1..n_in {
            kernel[fft_len - t] = chirp(alpha, offset - t as f64).conj();
        }
        forward.process(&mut kernel);

        Ok(Self {
            n_in,
            n_out,
            fft_len,
            forward,
            inverse,
            input_chirp,
            output_chirp,
            kernel_fft: kernel,
        })
    }

    pub fn input_len(&self) -> usize {
        self.n_in
    }

    pub fn output_len(&self) -> usize {
        self.n_out
    }

    /// Transforms one line; `input` and `output` lengths must match the plan.
    pub fn process_line(&self, input: &[Complex64], output: &mut [Complex64]) {
        debug_assert_eq!(input.len(), self.n_in);
        debug_assert_eq!(output.len(), self.n_out);
        let mut buf = vec![Complex64::default(); self.fft_len];
        for (b, (f, c)) in buf.iter_mut().zip(input.iter().zip(&self.input_chirp)) {
            *b = f * c;
        }
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_fft) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        for (o, (b, c)) in output.iter_mut().zip(buf.iter().zip(&self.output_chirp)) {
            *o = b * c;
        }
    }

    /// Separable two-dimensional transform of a square array, rows then columns.
    pub fn process_square(&self, input: &Array2<Complex64>) -> Array2<Complex64> {
        let n_in = self.n_in;
        let n_out = self.n_out;
        debug_assert_eq!(input.dim(), (n_in, n_in));

        let mut rows_done = Array2::<Complex64>::zeros((n_in, n_out));
        let mut line_out = vec![Complex64::default(); n_out];
        for (row_in, mut row_out) in input.outer_iter().zip(rows_done.outer_iter_mut()) {
            let line: Vec<Complex64> = row_in.iter().copied().collect();
            self.process_line(&line, &mut line_out);
            for (dst, src) in row_out.iter_mut().zip(&line_out) {
                *dst = *src;
            }
        }

        let mut out = Array2::<Complex64>::zeros((n_out, n_out));
        let mut col_in = vec![Complex64::default(); n_in];
        for col in 0..n_out {
            for (dst, src) in col_in.iter_mut().zip(rows_done.column(col).iter()) {
                *dst = *src;
            }
            self.process_line(&col_in, &mut line_out);
            for (row, value) in line_out.iter().enumerate() {
                out[(row, col)] = *value;
            }
        }
        out
    }
}
