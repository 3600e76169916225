//! Thin wrapper over `rustfft` shared by the split-step and optical engines.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse transform pair of a fixed length.
///
/// `forward` is unnormalized; `inverse` divides by `len`, so the pair is an
/// exact round trip.
#[derive(Clone)]
pub struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len: usize,
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.len as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
}

impl std::fmt::Debug for FftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPair").field("len", &self.len).finish()
    }
}

/// Signed integer frequency index of FFT bin `k` for a transform of length `n`,
/// in the half-open range `[-n/2, n/2)`.
#[inline]
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) || (n % 2 == 1 && k == n / 2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Phase `exp(-i * pi * c * m^2)` evaluated with the integer turns removed
/// before the trigonometric call, so commensurate cases stay exact.
#[inline]
pub fn quadratic_phase(half_turns_per_unit: f64, m: f64) -> Complex64 {
    // angle = pi * c * m^2 = 2 pi * (c m^2 / 2)
    let turns = 0.5 * half_turns_per_unit * m * m;
    let frac = turns - turns.round();
    Complex64::from_polar(1.0, -std::f64::consts::TAU * frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_index_even_length() {
        let got: Vec<i64> = (0..8).map(|k| signed_index(k, 8)).collect();
        assert_eq!(got, vec![0, 1, 2, 3, -4, -3, -2, -1]);
    }

    #[test]
    fn round_trip_is_identity() {
        let pair = FftPair::new(16);
        let orig: Vec<Complex64> = (0..16)
            .map(|j| Complex64::new(j as f64, -(j as f64) * 0.5))
            .collect();
        let mut buf = orig.clone();
        pair.forward(&mut buf);
        pair.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn integer_turns_are_exact() {
        // c = 2 means exp(-i 2 pi m^2) which must be exactly one.
        for m in -50..50 {
            let z = quadratic_phase(2.0, m as f64);
            assert_eq!(z, Complex64::new(1.0, 0.0));
        }
    }
}
