//! Split-operator propagation of the kicked rotor.
//!
//! One period is a kick (pointwise phase in position space) followed by free
//! flight (diagonal phase in momentum space). The state stores the periodic
//! part `psi(x) e^{-i beta x}`, so quasimomentum enters only through the
//! free-flight phases.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{RatchetError, Result};
use crate::model::{kick_phase_profile, EffectivePlanck, RatchetPotential};
use crate::spectral::{quadratic_phase, signed_index, FftPair};

/// Largest tolerated deviation of the norm from one before a run is aborted.
pub const NORM_DRIFT_LIMIT: f64 = 1e-8;

/// Uniform periodic grid spanning `periods` potential periods of length 2 pi.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialGrid {
    periods: usize,
    points_per_period: usize,
}

impl SpatialGrid {
    pub fn new(periods: usize, points_per_period: usize) -> Result<Self> {
        if periods == 0 {
            return Err(RatchetError::invalid("periods", "must be >= 1"));
        }
        if points_per_period < 2 || points_per_period % 2 != 0 {
            return Err(RatchetError::invalid(
                "points_per_period",
                format!("must be a positive even integer, got {points_per_period}"),
            ));
        }
        if periods * points_per_period < 32 {
            return Err(RatchetError::invalid(
                "points_per_period",
                format!("grid needs at least 32 points, got {}", periods * points_per_period),
            ));
        }
        Ok(Self {
            periods,
            points_per_period,
        })
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn points_per_period(&self) -> usize {
        self.points_per_period
    }

    pub fn len(&self) -> usize {
        self.periods * self.points_per_period
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        TAU / self.points_per_period as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        TAU * j as f64 / self.points_per_period as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.x(j)).collect()
    }

    /// Ladder order (in units of 1/periods) held by FFT bin `k`.
    pub fn order_of_bin(&self, k: usize) -> i64 {
        signed_index(k, self.len())
    }

    fn bin_of_order(&self, order: i64) -> Option<usize> {
        let n = self.len() as i64;
        if order < -n / 2 || order >= n / 2 {
            return None;
        }
        Some(order.rem_euclid(n) as usize)
    }
}

impl Default for SpatialGrid {
    fn default() -> Self {
        Self {
            periods: 1,
            points_per_period: 256,
        }
    }
}

/// Normalized wavefunction on a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    grid: SpatialGrid,
    amplitudes: Vec<Complex64>,
    beta: f64,
    kick_count: usize,
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(RatchetError::invalid("beta", format!("quasimomentum must lie in [0, 1), got {beta}")))
    }
}

impl WaveState {
    /// Normalizes `amplitudes` onto `grid`.
    pub fn from_amplitudes(grid: SpatialGrid, amplitudes: Vec<Complex64>, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        if amplitudes.len() != grid.len() {
            return Err(RatchetError::invalid(
                "amplitudes",
                format!("expected {} samples, got {}", grid.len(), amplitudes.len()),
            ));
        }
        let mut state = Self {
            grid,
            amplitudes,
            beta,
            kick_count: 0,
        };
        let norm = state.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(RatchetError::invalid("amplitudes", "state has zero or non-finite norm"));
        }
        state.amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(state)
    }

    /// Superposition of ladder orders with the given (unnormalized) weights.
    pub fn from_orders(grid: SpatialGrid, orders: &[(i64, Complex64)], beta: f64) -> Result<Self> {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
        for &(order, c) in orders {
            let bin = grid
                .bin_of_order(order)
                .ok_or_else(|| RatchetError::invalid("order", format!("order {order} is outside the grid")))?;
            coeffs[bin] += c;
        }
        FftPair::new(grid.len()).inverse(&mut coeffs);
        Self::from_amplitudes(grid, coeffs, beta)
    }

    pub fn plane_wave(grid: SpatialGrid, order: i64, beta: f64) -> Result<Self> {
        Self::from_orders(grid, &[(order, Complex64::new(1.0, 0.0))], beta)
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kick_count(&self) -> usize {
        self.kick_count
    }

    /// `sqrt(sum |psi_j|^2 dx)`.
    pub fn norm(&self) -> f64 {
        let sum: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        (sum * self.grid.dx()).sqrt()
    }
}

/// Probability over discrete momentum orders; physical momentum of entry `i`
/// is `hbar * (orders[i] / periods + beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumLadder {
    pub beta: f64,
    pub periods: usize,
    pub orders: Vec<i64>,
    pub probabilities: Vec<f64>,
    pub hbar: EffectivePlanck,
}

impl MomentumLadder {
    /// Ladder momentum `n / periods + beta` of entry `i`, in units of hbar.
    pub fn momentum(&self, i: usize) -> f64 {
        self.orders[i] as f64 / self.periods as f64 + self.beta
    }

    pub fn probability_of(&self, order: i64) -> f64 {
        self.orders
            .binary_search(&order)
            .map(|i| self.probabilities[i])
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }
}

/// Parameters of one kicked run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KickedRunParams {
    pub potential: RatchetPotential,
    pub hbar: EffectivePlanck,
    pub n_kicks: usize,
}

impl KickedRunParams {
    pub fn new(potential: RatchetPotential, hbar: EffectivePlanck, n_kicks: usize) -> Result<Self> {
        if n_kicks == 0 {
            return Err(RatchetError::invalid("n_kicks", "must be >= 1"));
        }
        Ok(Self {
            potential,
            hbar,
            n_kicks,
        })
    }
}

/// Precomputed kick and free-flight factors for one `(grid, potential, hbar, beta)`.
#[derive(Debug, Clone)]
pub struct SplitStep {
    grid: SpatialGrid,
    beta: f64,
    hbar: EffectivePlanck,
    fft: FftPair,
    kick: Vec<Complex64>,
    free: Vec<Complex64>,
}

impl SplitStep {
    pub fn new(grid: SpatialGrid, potential: &RatchetPotential, hbar: EffectivePlanck, beta: f64) -> Result<Self> {
        let phases = kick_phase_profile(potential, hbar, &grid.xs());
        Self::with_kick_phases(grid, &phases, hbar, beta)
    }

    /// Uses an arbitrary per-sample kick phase instead of the ratchet potential.
    pub fn with_kick_phases(grid: SpatialGrid, phases: &[f64], hbar: EffectivePlanck, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        if phases.len() != grid.len() {
            return Err(RatchetError::invalid("kick_phase", "length does not match the grid"));
        }
        let kick = phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
        Ok(Self {
            grid,
            beta,
            hbar,
            fft: FftPair::new(grid.len()),
            kick,
            free: free_factors(grid, hbar, beta),
        })
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    fn check_state(&self, state: &WaveState) -> Result<()> {
        if state.grid != self.grid || state.beta != self.beta {
            return Err(RatchetError::invalid("state", "grid or quasimomentum differs from the propagator"));
        }
        Ok(())
    }

    pub fn kick(&self, state: &mut WaveState) {
        for (a, k) in state.amplitudes.iter_mut().zip(&self.kick) {
            *a *= k;
        }
    }

    pub fn free(&self, state: &mut WaveState) {
        self.fft.forward(&mut state.amplitudes);
        for (c, f) in state.amplitudes.iter_mut().zip(&self.free) {
            *c *= f;
        }
        self.fft.inverse(&mut state.amplitudes);
    }

    /// One full period. The post-kick spectrum is handed to `on_kick` before
    /// free flight, reusing the transform needed for the free step.
    pub fn period<F>(&self, state: &mut WaveState, mut on_kick: F) -> Result<()>
    where
        F: FnMut(usize, &MomentumLadder),
    {
        self.check_state(state)?;
        self.kick(state);
        self.fft.forward(&mut state.amplitudes);
        let kick_index = state.kick_count + 1;
        on_kick(kick_index, &ladder_from_bins(&state.amplitudes, self.grid, self.beta, self.hbar));
        for (c, f) in state.amplitudes.iter_mut().zip(&self.free) {
            *c *= f;
        }
        self.fft.inverse(&mut state.amplitudes);
        state.kick_count = kick_index;
        let drift = (state.norm() - 1.0).abs();
        if drift.is_nan() || drift > NORM_DRIFT_LIMIT {
            return Err(RatchetError::NormDrift {
                kick: kick_index,
                drift,
                limit: NORM_DRIFT_LIMIT,
            });
        }
        Ok(())
    }

    /// Exact inverse of [`SplitStep::period`]: reversed free flight, then the
    /// conjugate kick.
    pub fn inverse_period(&self, state: &mut WaveState) -> Result<()> {
        self.check_state(state)?;
        self.fft.forward(&mut state.amplitudes);
        for (c, f) in state.amplitudes.iter_mut().zip(&self.free) {
            *c *= f.conj();
        }
        self.fft.inverse(&mut state.amplitudes);
        for (a, k) in state.amplitudes.iter_mut().zip(&self.kick) {
            *a *= k.conj();
        }
        state.kick_count = state.kick_count.saturating_sub(1);
        Ok(())
    }
}

fn free_factors(grid: SpatialGrid, hbar: EffectivePlanck, beta: f64) -> Vec<Complex64> {
    // exp(-i hbar q^2 / 2) = exp(-i pi (hbar / 2 pi) q^2)
    let c = hbar.value() / TAU;
    (0..grid.len())
        .map(|k| {
            let q = grid.order_of_bin(k) as f64 / grid.periods as f64 + beta;
            quadratic_phase(c, q)
        })
        .collect()
}

fn ladder_from_bins(coeffs: &[Complex64], grid: SpatialGrid, beta: f64, hbar: EffectivePlanck) -> MomentumLadder {
    let n = grid.len();
    let half = n / 2;
    let mut orders = Vec::with_capacity(n);
    let mut probabilities = Vec::with_capacity(n);
    for i in 0..n {
        // ascending order: bins half..n hold -n/2..-1
        let k = (i + half) % n;
        orders.push(grid.order_of_bin(k));
        probabilities.push(coeffs[k].norm_sqr());
    }
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= total);
    MomentumLadder {
        beta,
        periods: grid.periods,
        orders,
        probabilities,
        hbar,
    }
}

/// Multiplies the state by `exp(-i K v(x_j) / hbar)`.
pub fn kick_step(mut state: WaveState, pot: &RatchetPotential, hbar: EffectivePlanck) -> WaveState {
    let phases = kick_phase_profile(pot, hbar, &state.grid.xs());
    for (a, p) in state.amplitudes.iter_mut().zip(phases) {
        *a *= Complex64::from_polar(1.0, p);
    }
    state
}

/// Multiplies the state by `exp(i phase_j)` pointwise.
pub fn apply_kick_phase(mut state: WaveState, phases: &[f64]) -> Result<WaveState> {
    if phases.len() != state.grid.len() {
        return Err(RatchetError::invalid("kick_phase", "length does not match the grid"));
    }
    for (a, &p) in state.amplitudes.iter_mut().zip(phases) {
        *a *= Complex64::from_polar(1.0, p);
    }
    Ok(state)
}

/// Free flight over one period: momentum `q` picks up `exp(-i hbar q^2 / 2)`.
pub fn free_step(mut state: WaveState, hbar: EffectivePlanck) -> WaveState {
    let fft = FftPair::new(state.grid.len());
    let factors = free_factors(state.grid, hbar, state.beta);
    fft.forward(&mut state.amplitudes);
    for (c, f) in state.amplitudes.iter_mut().zip(&factors) {
        *c *= f;
    }
    fft.inverse(&mut state.amplitudes);
    state
}

pub fn momentum_spectrum(state: &WaveState, hbar: EffectivePlanck) -> MomentumLadder {
    let mut coeffs = state.amplitudes.clone();
    FftPair::new(state.grid.len()).forward(&mut coeffs);
    ladder_from_bins(&coeffs, state.grid, state.beta, hbar)
}

/// Runs `params.n_kicks` periods (kick, record, free flight). `sink` receives
/// the 1-based kick index and the post-kick spectrum.
pub fn evolve<F>(state: WaveState, params: &KickedRunParams, mut sink: F) -> Result<WaveState>
where
    F: FnMut(usize, &MomentumLadder),
{
    let stepper = SplitStep::new(state.grid, &params.potential, params.hbar, state.beta)?;
    let mut state = state;
    for _ in 0..params.n_kicks {
        stepper.period(&mut state, &mut sink)?;
    }
    Ok(state)
}

/// Post-kick spectra of a run from a plane wave at order 0.
pub fn plane_wave_trajectory(params: &KickedRunParams, grid: SpatialGrid, beta: f64) -> Result<Vec<MomentumLadder>> {
    let state = WaveState::plane_wave(grid, 0, beta)?;
    let mut out = Vec::with_capacity(params.n_kicks);
    evolve(state, params, |_, ladder| out.push(ladder.clone()))?;
    Ok(out)
}

/// One NDJSON line of the per-kick spectrum stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub kick: usize,
    pub beta: f64,
    pub hbar: f64,
    pub orders: Vec<i64>,
    pub prob: Vec<f64>,
}

impl SpectrumRecord {
    pub fn new(kick: usize, ladder: &MomentumLadder) -> Self {
        Self {
            kick,
            beta: ladder.beta,
            hbar: ladder.hbar.value(),
            orders: ladder.orders.clone(),
            prob: ladder.probabilities.clone(),
        }
    }

    pub fn write_line<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, self).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}
