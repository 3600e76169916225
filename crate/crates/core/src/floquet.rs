//! One-period Floquet operator in a truncated momentum basis.
//!
//! This is an independent route to the kicked dynamics: the kick matrix is
//! assembled from a direct (table-driven) Fourier sum rather than `rustfft`,
//! and propagation is a dense matrix-vector product. It exists to check the
//! split-step engine.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{RatchetError, Result};
use crate::evolution::MomentumLadder;
use crate::model::{EffectivePlanck, RatchetPotential};
use crate::spectral::quadratic_phase;

pub const DEFAULT_N_MAX: usize = 128;

/// Probability allowed in the outer quarter of the basis before propagation
/// reports a truncation breach.
pub const BREACH_LIMIT: f64 = 1e-8;

fn check_n_max(n_max: usize) -> Result<()> {
    if n_max < 8 {
        return Err(RatchetError::invalid("n_max", format!("must be >= 8, got {n_max}")));
    }
    Ok(())
}

/// Fourier coefficients `c_d = (1/2pi) int exp(-i K v(x)/hbar) e^{-i d x} dx`
/// for `|d| <= max_d`, by an `samples`-point rectangle rule.
fn kick_coefficients(pot: &RatchetPotential, hbar: EffectivePlanck, max_d: usize, samples: usize) -> Vec<Complex64> {
    let scale = pot.strength() / hbar.value();
    let f: Vec<Complex64> = (0..samples)
        .map(|j| {
            let x = TAU * j as f64 / samples as f64;
            Complex64::from_polar(1.0, -scale * pot.shape(x))
        })
        .collect();
    let twiddle: Vec<Complex64> = (0..samples)
        .map(|m| Complex64::from_polar(1.0, -TAU * m as f64 / samples as f64))
        .collect();
    let len = samples as i64;
    (-(max_d as i64)..=max_d as i64)
        .map(|d| {
            let step = d.rem_euclid(len) as usize;
            let mut idx = 0usize;
            let mut acc = Complex64::new(0.0, 0.0);
            for fj in &f {
                acc += fj * twiddle[idx];
                idx += step;
                if idx >= samples {
                    idx -= samples;
                }
            }
            acc / samples as f64
        })
        .collect()
}

/// Toeplitz kick matrix on the basis `n in [-n_max, n_max]`.
pub fn build_kick_matrix(pot: &RatchetPotential, hbar: EffectivePlanck, n_max: usize) -> Result<DMatrix<Complex64>> {
    check_n_max(n_max)?;
    let dim = 2 * n_max + 1;
    let max_d = 2 * n_max;
    let coeffs = kick_coefficients(pot, hbar, max_d, 8 * n_max);
    Ok(DMatrix::from_fn(dim, dim, |i, j| coeffs[i + max_d - j]))
}

/// `U = D * Kmat`, kick then free flight, on a truncated momentum basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetMatrix {
    n_max: usize,
    beta: f64,
    hbar: EffectivePlanck,
    entries: DMatrix<Complex64>,
}

pub fn build_floquet(pot: &RatchetPotential, hbar: EffectivePlanck, beta: f64, n_max: usize) -> Result<FloquetMatrix> {
    if !(0.0..1.0).contains(&beta) {
        return Err(RatchetError::invalid("beta", format!("quasimomentum must lie in [0, 1), got {beta}")));
    }
    let mut entries = build_kick_matrix(pot, hbar, n_max)?;
    let c = hbar.value() / TAU;
    for (row, n) in (-(n_max as i64)..=n_max as i64).enumerate() {
        let phase = quadratic_phase(c, n as f64 + beta);
        entries.row_mut(row).iter_mut().for_each(|e| *e *= phase);
    }
    Ok(FloquetMatrix {
        n_max,
        beta,
        hbar,
        entries,
    })
}

impl FloquetMatrix {
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn hbar(&self) -> EffectivePlanck {
        self.hbar
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        2 * self.n_max + 1
    }

    /// Row/column index of momentum order `n`.
    pub fn index_of(&self, n: i64) -> Option<usize> {
        let shifted = n + self.n_max as i64;
        (0..self.dim() as i64).contains(&shifted).then_some(shifted as usize)
    }

    /// `max |(U^dagger U - I)_{nm}|` over the interior block `|n|, |m| <= n_max / 2`.
    pub fn unitarity_defect(&self) -> f64 {
        let gram = self.entries.adjoint() * &self.entries;
        let lo = self.n_max - self.n_max / 2;
        let hi = self.n_max + self.n_max / 2;
        let mut worst = 0.0f64;
        for i in lo..=hi {
            for j in lo..=hi {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the truncated operator whose eigenvectors keep all but
    /// `leak_tol` of their weight inside `|n| <= n_max / 2`.
    ///
    /// Eigenvectors are recovered by inverse iteration on each Schur
    /// eigenvalue. States reaching the basis edge are dropped: truncation
    /// makes them decay, so their eigenvalues are not physical quasi-energies.
    pub fn interior_eigenvalues(&self, leak_tol: f64) -> Vec<Complex64> {
        let dim = self.dim();
        let Some(eigs) = self.entries.clone().schur().eigenvalues() else {
            return Vec::new();
        };
        let inner = self.n_max / 2;
        let mut out = Vec::new();
        for lambda in eigs.iter() {
            // Slightly detuned shift keeps the solve non-singular.
            let shift = lambda + Complex64::new(1e-10, 1e-10);
            let shifted = &self.entries - DMatrix::from_diagonal_element(dim, dim, shift);
            let lu = shifted.lu();
            let mut v = DVector::from_element(dim, Complex64::new(1.0, 0.0));
            for _ in 0..3 {
                let Some(next) = lu.solve(&v) else { break };
                let norm = next.norm();
                if !(norm.is_finite() && norm > 0.0) {
                    break;
                }
                v = next / Complex64::new(norm, 0.0);
            }
            let outside: f64 = v
                .iter()
                .enumerate()
                .filter(|(i, _)| (*i as i64 - self.n_max as i64).unsigned_abs() as usize > inner)
                .map(|(_, c)| c.norm_sqr())
                .sum();
            if outside <= leak_tol {
                out.push(*lambda);
            }
        }
        out
    }

    /// Debug dump: one `n m re im` row per entry.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        let offset = self.n_max as i64;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let e = self.entries[(i, j)];
                writeln!(out, "{} {} {} {}", i as i64 - offset, j as i64 - offset, e.re, e.im)?;
            }
        }
        Ok(())
    }
}

/// Coefficient vector of a single momentum order.
pub fn basis_state(n_max: usize, order: i64) -> Result<Vec<Complex64>> {
    let dim = 2 * n_max + 1;
    let idx = order + n_max as i64;
    if !(0..dim as i64).contains(&idx) {
        return Err(RatchetError::invalid("order", format!("order {order} is outside the basis")));
    }
    let mut v = vec![Complex64::new(0.0, 0.0); dim];
    v[idx as usize] = Complex64::new(1.0, 0.0);
    Ok(v)
}

fn outer_weight(v: &DVector<Complex64>, n_max: usize) -> f64 {
    let edge = 3 * n_max / 4;
    v.iter()
        .enumerate()
        .filter(|(i, _)| (*i as i64 - n_max as i64).unsigned_abs() as usize > edge)
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

/// Applies `U` `n_kicks` times to `initial` and returns the momentum
/// distribution. Fails if the outer quarter of the basis ever holds more than
/// [`BREACH_LIMIT`] of the probability.
pub fn propagate(u: &FloquetMatrix, initial: &[Complex64], n_kicks: usize) -> Result<MomentumLadder> {
    let n_max = u.n_max;
    if initial.len() != u.dim() {
        return Err(RatchetError::invalid("initial", format!("expected {} coefficients", u.dim())));
    }
    let headroom = n_max / 4;
    let outside_support = initial
        .iter()
        .enumerate()
        .any(|(i, c)| c.norm_sqr() > 0.0 && (i as i64 - n_max as i64).unsigned_abs() as usize > headroom);
    if outside_support {
        return Err(RatchetError::invalid(
            "initial",
            format!("must be supported on |n| <= {headroom}"),
        ));
    }
    let mut v = DVector::from_column_slice(initial);
    let norm = v.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(RatchetError::invalid("initial", "zero or non-finite norm"));
    }
    v /= Complex64::new(norm, 0.0);
    for kick in 1..=n_kicks {
        v = &u.entries * v;
        let leaked = outer_weight(&v, n_max);
        if leaked > BREACH_LIMIT {
            return Err(RatchetError::TruncationBreach { kick, leaked });
        }
    }
    let mut probabilities: Vec<f64> = v.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= total);
    Ok(MomentumLadder {
        beta: u.beta,
        periods: 1,
        orders: (-(n_max as i64)..=n_max as i64).collect(),
        probabilities,
        hbar: u.hbar,
    })
}
