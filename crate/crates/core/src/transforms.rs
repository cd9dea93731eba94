//! FFT and Walsh–Hadamard kernels.

use std::ops::{Add, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{dim_err, Error, Result};

/// Forward and inverse plans of a fixed length.
///
/// The forward transform uses the kernel `exp(-2 pi i j k / n)`; the inverse
/// is unnormalized.
#[derive(Clone)]
pub struct FftPair {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPair").field("len", &self.len).finish()
    }
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len);
        self.forward.process(buf);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len);
        self.inverse.process(buf);
    }
}

/// Circular convolution `(f * g)_l = sum_k f_k g_{(l - k) mod L}` via FFT.
pub fn circular_convolve(f: &[Complex64], g: &[Complex64]) -> Result<Vec<Complex64>> {
    if f.len() != g.len() {
        return dim_err(format!(
            "circular convolution of lengths {} and {}",
            f.len(),
            g.len()
        ));
    }
    let n = f.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let plan = FftPair::new(n);
    let mut fa = f.to_vec();
    let mut ga = g.to_vec();
    plan.forward(&mut fa);
    plan.forward(&mut ga);
    for (a, b) in fa.iter_mut().zip(&ga) {
        *a *= b;
    }
    plan.inverse(&mut fa);
    let scale = 1.0 / n as f64;
    fa.iter_mut().for_each(|v| *v *= scale);
    Ok(fa)
}

/// In-place unnormalized fast Walsh–Hadamard transform in Sylvester (natural)
/// order: on return `buf[l] = sum_n (-1)^{popcount(l & n)} buf_in[n]`.
pub fn fwht<T>(buf: &mut [T]) -> Result<()>
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    let n = buf.len();
    if !n.is_power_of_two() {
        return Err(Error::UnsupportedSize(format!(
            "Walsh-Hadamard transform needs a power-of-two length, got {n}"
        )));
    }
    let mut h = 1;
    while h < n {
        for block in buf.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Entry `(l, n)` (0-based) of the Sylvester Hadamard matrix.
#[inline]
pub fn hadamard_entry(l: usize, n: usize) -> f64 {
    if (l & n).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}
