//! Ratchet potential, kick phases, resonance arithmetic and phase-mirror depth
//! profiles.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{RatchetError, Result};

/// Flashing potential `K * v(x)` with `v(x) = sin x + alpha * sin(2x + phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatchetPotential {
    strength: f64,
    harmonic_weight: f64,
    phase: f64,
}

impl RatchetPotential {
    pub fn new(strength: f64, harmonic_weight: f64, phase: f64) -> Result<Self> {
        if !strength.is_finite() || strength < 0.0 {
            return Err(RatchetError::invalid("K", format!("must be finite and >= 0, got {strength}")));
        }
        if !harmonic_weight.is_finite() {
            return Err(RatchetError::invalid("alpha", "must be finite"));
        }
        if !phase.is_finite() {
            return Err(RatchetError::invalid("phi", "must be finite"));
        }
        Ok(Self {
            strength,
            harmonic_weight,
            phase,
        })
    }

    /// `K = 1`, `alpha = 0.3`, `phi = 0`: the potential etched into the experimental mirror.
    pub fn experimental() -> Self {
        Self {
            strength: 1.0,
            harmonic_weight: 0.3,
            phase: 0.0,
        }
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn harmonic_weight(&self) -> f64 {
        self.harmonic_weight
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn with_strength(self, strength: f64) -> Result<Self> {
        Self::new(strength, self.harmonic_weight, self.phase)
    }

    /// `v(x)`, without the strength factor.
    #[inline]
    pub fn shape(&self, x: f64) -> f64 {
        x.sin() + self.harmonic_weight * (2.0 * x + self.phase).sin()
    }
}

/// Evaluates the unit-strength ratchet shape `v(x)`.
pub fn eval_potential(pot: &RatchetPotential, x: f64) -> f64 {
    pot.shape(x)
}

/// Dimensionless effective Planck constant. Always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EffectivePlanck(f64);

impl EffectivePlanck {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(RatchetError::invalid("hbar", format!("must be finite and > 0, got {value}")))
        }
    }

    /// `multiple * pi`, the form every experimental value is quoted in.
    pub fn pi_multiple(multiple: f64) -> Result<Self> {
        Self::new(multiple * PI)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for EffectivePlanck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Phase `-K v(x) / hbar` imprinted by one kick at each sample point.
pub fn kick_phase_profile(pot: &RatchetPotential, hbar: EffectivePlanck, xs: &[f64]) -> Vec<f64> {
    let scale = -pot.strength / hbar.value();
    xs.iter().map(|&x| scale * pot.shape(x)).collect()
}

/// Coprime pair `(r, s)` labelling the resonance `hbar = 4 pi r / s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResonanceOrder {
    r: u64,
    s: u64,
}

impl ResonanceOrder {
    pub fn new(r: u64, s: u64) -> Result<Self> {
        if r == 0 || s == 0 {
            return Err(RatchetError::invalid("resonance", "r and s must be >= 1"));
        }
        if gcd(r, s) != 1 {
            return Err(RatchetError::invalid("resonance", format!("{r}/{s} is not in lowest terms")));
        }
        Ok(Self { r, s })
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn s(&self) -> u64 {
        self.s
    }

    pub fn hbar(&self) -> EffectivePlanck {
        EffectivePlanck(4.0 * PI * self.r as f64 / self.s as f64)
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Smallest-denominator resonance `4 pi r / s` within `tol * 4 pi` of `hbar`,
/// with `s <= s_max`.
///
/// The search is a continued-fraction descent for the simplest rational in the
/// tolerance interval around `hbar / 4 pi`; the simplest rational has both the
/// least numerator and the least denominator, so the first hit is the answer.
pub fn resonance_check(hbar: EffectivePlanck, s_max: u64, tol: f64) -> Option<ResonanceOrder> {
    if s_max == 0 || !(tol >= 0.0) {
        return None;
    }
    let y = hbar.value() / (4.0 * PI);
    let lo = y - tol;
    let hi = y + tol;
    if hi <= 0.0 {
        return None;
    }
    let lowest_int = lo.ceil().max(1.0);
    let (r, s) = if lowest_int <= hi {
        // Several integers may qualify; take the one nearest to y.
        let nearest = y.round().clamp(lowest_int, hi.floor());
        (nearest as u64, 1)
    } else if lo <= 0.0 {
        // r >= 1 and hi < 1: the simplest positive fraction below `hi` is 1/ceil(1/hi).
        (1, (1.0 / hi).ceil() as u64)
    } else {
        simplest_between(lo, hi, s_max, 0)?
    };
    if s > s_max || r == 0 {
        return None;
    }
    let candidate = r as f64 / s as f64;
    // The float descent can overshoot the interval by an ulp; re-verify.
    if (y - candidate).abs() > tol * (1.0 + 4.0 * f64::EPSILON) + f64::EPSILON * y.abs() {
        return None;
    }
    let g = gcd(r, s);
    ResonanceOrder::new(r / g, s / g).ok()
}

/// Simplest fraction `p/q` in `[lo, hi]`, `0 < lo <= hi`, abandoning once the
/// denominator must exceed `q_max`.
fn simplest_between(lo: f64, hi: f64, q_max: u64, depth: usize) -> Option<(u64, u64)> {
    if depth > 64 || !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    let c = lo.ceil();
    if c <= hi {
        return Some((c as u64, 1));
    }
    let fl = lo.floor();
    // Both endpoints lie in (fl, fl + 1); recurse on the reciprocal interval.
    let (p, q) = simplest_between(1.0 / (hi - fl), 1.0 / (lo - fl), q_max, depth + 1)?;
    // New denominator is p; the descent only grows it.
    if p > q_max {
        return None;
    }
    Some((fl as u64 * p + q, p))
}

/// Number of discrete etch levels on a mirror, or an ideal continuous relief.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Levels {
    Continuous,
    Discrete(u32),
}

impl fmt::Display for Levels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Levels::Continuous => f.write_str("continuous"),
            Levels::Discrete(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Levels {
    type Err = RatchetError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("continuous") {
            return Ok(Levels::Continuous);
        }
        match s.parse::<u32>() {
            Ok(n) if n >= 2 => Ok(Levels::Discrete(n)),
            _ => Err(RatchetError::invalid("n_levels", format!("expected an integer >= 2 or `continuous`, got `{s}`"))),
        }
    }
}

pub const MIN_MIRROR_SAMPLES: usize = 16;

/// One spatial period of etched depth, uniformly sampled from `x = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorProfile {
    period_m: f64,
    depths: Vec<f64>,
    levels: Levels,
}

impl MirrorProfile {
    pub fn new(period_m: f64, depths: Vec<f64>, levels: Levels) -> Result<Self> {
        if !(period_m.is_finite() && period_m > 0.0) {
            return Err(RatchetError::invalid("period", "must be finite and > 0"));
        }
        if depths.len() < MIN_MIRROR_SAMPLES {
            return Err(RatchetError::invalid(
                "depth_samples",
                format!("need at least {MIN_MIRROR_SAMPLES} samples, got {}", depths.len()),
            ));
        }
        if let Some(bad) = depths.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(RatchetError::invalid("depth_samples", format!("depth {bad} is negative or not finite")));
        }
        Ok(Self {
            period_m,
            depths,
            levels,
        })
    }

    /// Mirror whose reflection phase reproduces one kick of `pot` at `hbar`.
    ///
    /// The phase is offset so its minimum is zero before conversion, keeping
    /// the relief unwrapped whenever the kick phase spans less than 2 pi.
    pub fn from_potential(
        pot: &RatchetPotential,
        hbar: EffectivePlanck,
        lambda: f64,
        period_m: f64,
        samples: usize,
    ) -> Result<Self> {
        let xs: Vec<f64> = (0..samples).map(|j| TAU * j as f64 / samples as f64).collect();
        let mut phase = kick_phase_profile(pot, hbar, &xs);
        let min = phase.iter().copied().fold(f64::INFINITY, f64::min);
        phase.iter_mut().for_each(|p| *p -= min);
        depth_from_phase(&phase, lambda, period_m)
    }

    pub fn period_m(&self) -> f64 {
        self.period_m
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    /// Sample spacing in meters.
    pub fn dx(&self) -> f64 {
        self.period_m / self.depths.len() as f64
    }

    pub fn quantized(&self, n_levels: u32) -> Result<Self> {
        let depths = quantize_depths(&self.depths, n_levels)?;
        Self::new(self.period_m, depths, Levels::Discrete(n_levels))
    }

    /// Writes the two-column text form: a `# period_m=.. n_levels=..` line,
    /// a column header, then `x_meters,depth_meters` rows.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# period_m={} n_levels={}", self.period_m, self.levels)?;
        writeln!(out, "x_meters,depth_meters")?;
        let dx = self.dx();
        for (j, d) in self.depths.iter().enumerate() {
            writeln!(out, "{},{}", j as f64 * dx, d)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut period = None;
        let mut levels = Levels::Continuous;
        let mut depths = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(meta) = trimmed.strip_prefix('#') {
                for field in meta.split_whitespace() {
                    match field.split_once('=') {
                        Some(("period_m", v)) => {
                            period = Some(v.parse::<f64>().map_err(|e| parse_err(lineno, e))?);
                        }
                        Some(("n_levels", v)) => levels = v.parse()?,
                        _ => {}
                    }
                }
                continue;
            }
            if trimmed.starts_with("x_meters") {
                continue;
            }
            let (_, depth) = trimmed
                .split_once(',')
                .ok_or_else(|| parse_err(lineno, "expected two comma-separated columns"))?;
            depths.push(depth.trim().parse::<f64>().map_err(|e| parse_err(lineno, e))?);
        }
        let period = period.ok_or_else(|| parse_err(1, "missing `# period_m=` header"))?;
        Self::new(period, depths, levels)
    }
}

fn parse_err(line: usize, reason: impl fmt::Display) -> RatchetError {
    RatchetError::Parse {
        what: "mirror profile",
        line,
        reason: reason.to_string(),
    }
}

/// Etch depth for a reflection phase, `d = phase * lambda / (4 pi)` wrapped
/// into `[0, lambda/2)` (normal-incidence double pass).
pub fn depth_from_phase(phase: &[f64], lambda: f64, period_m: f64) -> Result<MirrorProfile> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(RatchetError::invalid("lambda", "must be finite and > 0"));
    }
    if phase.iter().any(|p| !p.is_finite()) {
        return Err(RatchetError::invalid("phase_samples", "contains a non-finite value"));
    }
    let half = 0.5 * lambda;
    let depths = phase
        .iter()
        .map(|&p| {
            let d = (p * lambda / (4.0 * PI)).rem_euclid(half);
            if d >= half {
                0.0
            } else {
                d
            }
        })
        .collect();
    MirrorProfile::new(period_m, depths, Levels::Continuous)
}

/// Reflection phase `4 pi d / lambda` of each depth sample.
pub fn phase_from_depth(profile: &MirrorProfile, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(RatchetError::invalid("lambda", "must be finite and > 0"));
    }
    let k = 4.0 * PI / lambda;
    Ok(profile.depths.iter().map(|d| k * d).collect())
}

/// Rounds each depth to the nearest of `n_levels` uniform levels spanning the
/// observed `[min, max]`; exact ties go to the lower level.
pub fn quantize_depths(depths: &[f64], n_levels: u32) -> Result<Vec<f64>> {
    if depths.is_empty() {
        return Err(RatchetError::invalid("depth_samples", "empty profile"));
    }
    if n_levels < 2 {
        return Err(RatchetError::invalid("n_levels", format!("must be >= 2, got {n_levels}")));
    }
    let min = depths.iter().copied().fold(f64::INFINITY, f64::min);
    let max = depths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(depths.to_vec());
    }
    let top = (n_levels - 1) as usize;
    let step = (max - min) / top as f64;
    // Top level pinned to `max` so a second pass sees the same range.
    let level = |k: usize| if k == top { max } else { min + k as f64 * step };
    Ok(depths
        .iter()
        .map(|&d| {
            let t = (d - min) / step;
            let k = (t - 0.5).ceil().clamp(0.0, top as f64) as usize;
            level(k)
        })
        .collect())
}
