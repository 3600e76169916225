//! Moments of momentum distributions, distances between them, and the
//! low-degree least-squares fits used on per-kick series.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{RatchetError, Result};
use crate::evolution::MomentumLadder;

/// `sum q P(q)` with `q = n / periods + beta`.
pub fn mean_momentum(ladder: &MomentumLadder) -> f64 {
    (0..ladder.len()).map(|i| ladder.momentum(i) * ladder.probabilities[i]).sum()
}

/// `sum q^2 P(q)`.
pub fn mean_square_momentum(ladder: &MomentumLadder) -> f64 {
    (0..ladder.len())
        .map(|i| {
            let q = ladder.momentum(i);
            q * q * ladder.probabilities[i]
        })
        .sum()
}

/// Inverse participation ratio `1 / sum P^2`: the effective number of
/// occupied orders.
pub fn participation(ladder: &MomentumLadder) -> f64 {
    let total = ladder.total();
    let ipr: f64 = ladder.probabilities.iter().map(|p| (p / total) * (p / total)).sum();
    (1.0 / ipr).max(1.0)
}

/// Converts a momentum in ladder orders to a focal-plane offset.
pub fn orders_to_focal_m(orders: f64, order_spacing_m: f64) -> f64 {
    orders * order_spacing_m
}

/// Converts a momentum in ladder orders to camera pixels.
pub fn orders_to_pixels(orders: f64, order_spacing_m: f64, pixel_pitch_m: f64) -> f64 {
    orders * order_spacing_m / pixel_pitch_m
}

/// Moments of one recorded kick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub kick: usize,
    pub mean_p: f64,
    pub mean_p2: f64,
    pub participation: f64,
}

impl StepStats {
    pub fn from_ladder(kick: usize, ladder: &MomentumLadder) -> Self {
        Self {
            kick,
            mean_p: mean_momentum(ladder),
            mean_p2: mean_square_momentum(ladder),
            participation: participation(ladder),
        }
    }
}

/// Per-kick statistics of a trajectory; kicks are numbered from 1.
pub fn trajectory_stats(ladders: &[MomentumLadder]) -> Vec<StepStats> {
    ladders
        .iter()
        .enumerate()
        .map(|(i, l)| StepStats::from_ladder(i + 1, l))
        .collect()
}

/// Writes `kick,mean_p,mean_p2,participation`, preceded by one `# key=value`
/// comment line per run parameter.
pub fn write_stats_csv<W: Write>(mut out: W, params: &[(&str, String)], stats: &[StepStats]) -> Result<()> {
    for (k, v) in params {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "kick,mean_p,mean_p2,participation")?;
    for s in stats {
        writeln!(
            out,
            "{},{:.12e},{:.12e},{:.12e}",
            s.kick, s.mean_p, s.mean_p2, s.participation
        )?;
    }
    Ok(())
}

/// Least-squares polynomial, coefficients lowest order first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub residual_rms: f64,
}

impl FitResult {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn leading(&self) -> f64 {
        *self.coefficients.last().expect("fit has coefficients")
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Fits a degree-1 or degree-2 polynomial by solving the normal equations in
/// the centred, scaled variable `t = (x - mean) / half_range`.
pub fn polynomial_fit(xs: &[f64], ys: &[f64], degree: usize) -> Result<FitResult> {
    if !(1..=2).contains(&degree) {
        return Err(RatchetError::invalid("degree", format!("must be 1 or 2, got {degree}")));
    }
    if xs.len() != ys.len() {
        return Err(RatchetError::invalid("ys", "length differs from xs"));
    }
    if xs.len() < degree + 2 {
        return Err(RatchetError::invalid(
            "xs",
            format!("need at least {} points, got {}", degree + 2, xs.len()),
        ));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(RatchetError::invalid("xs", "non-finite sample"));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let scale = xs.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(RatchetError::invalid("xs", "all abscissae are equal"));
    }
    let terms = degree + 1;
    let design = DMatrix::from_fn(xs.len(), terms, |r, c| ((xs[r] - mean) / scale).powi(c as i32));
    let normal = design.transpose() * &design;
    let rhs = design.transpose() * DVector::from_column_slice(ys);
    let a = normal
        .cholesky()
        .ok_or_else(|| RatchetError::invalid("xs", "degenerate abscissae"))?
        .solve(&rhs);

    // p(x) = sum_k a_k ((x - mean) / scale)^k, expanded in powers of x.
    let mut coefficients = vec![0.0; terms];
    for (k, ak) in a.iter().enumerate() {
        let ak = ak / scale.powi(k as i32);
        for (j, c) in coefficients.iter_mut().enumerate().take(k + 1) {
            *c += ak * binomial(k, j) * (-mean).powi((k - j) as i32);
        }
    }

    let fitted = &design * &a;
    let y_mean = ys.iter().sum::<f64>() / n;
    let ss_res: f64 = ys.iter().zip(fitted.iter()).map(|(y, f)| (y - f) * (y - f)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(FitResult {
        coefficients,
        r_squared,
        residual_rms: (ss_res / n).sqrt(),
    })
}

/// Aligns two ladders on the union of their ladder momenta.
fn aligned(a: &MomentumLadder, b: &MomentumLadder) -> Result<Vec<(f64, f64)>> {
    if a.periods != b.periods || (a.beta - b.beta).abs() > 1e-12 {
        return Err(RatchetError::invalid("ladder", "ladders have different momentum grids"));
    }
    let mut orders: Vec<i64> = a.orders.iter().chain(&b.orders).copied().collect();
    orders.sort_unstable();
    orders.dedup();
    Ok(orders
        .into_iter()
        .map(|n| (a.probability_of(n), b.probability_of(n)))
        .collect())
}

/// Total-variation distance `0.5 sum |P - Q|`.
pub fn distribution_distance(a: &MomentumLadder, b: &MomentumLadder) -> Result<f64> {
    Ok(0.5 * aligned(a, b)?.iter().map(|(p, q)| (p - q).abs()).sum::<f64>())
}

/// Largest single-order difference `max |P - Q|`.
pub fn max_abs_difference(a: &MomentumLadder, b: &MomentumLadder) -> Result<f64> {
    Ok(aligned(a, b)?.iter().map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
}
