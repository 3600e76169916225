//! Paraxial model of the mirror/lens bounce cavity.
//!
//! A field sampled over a periodic window picks up the mirror phase on every
//! encounter, leaks a fixed fraction through the lens flat to the focal plane,
//! and flies back to the mirror under the angular-spectrum kernel.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{RatchetError, Result};
use crate::evolution::MomentumLadder;
use crate::model::{EffectivePlanck, MirrorProfile, phase_from_depth};
use crate::spectral::{FftPair, quadratic_phase, signed_index};

/// Minimum number of mirror periods a simulated beam window must span.
pub const MIN_WINDOW_PERIODS: usize = 8;
/// Minimum number of field samples per mirror period.
pub const MIN_SAMPLES_PER_PERIOD: usize = 64;

/// Physical constants of the bounce cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalGeometry {
    lambda: f64,
    period_m: f64,
    distance_m: f64,
    focal_m: f64,
    reflectivity: f64,
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(RatchetError::invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

impl OpticalGeometry {
    pub const LAMBDA_M: f64 = 532e-9;
    pub const PERIOD_M: f64 = 600e-6;
    pub const FOCAL_M: f64 = 0.3;
    pub const REFLECTIVITY: f64 = 0.95;

    pub fn new(lambda: f64, period_m: f64, distance_m: f64, focal_m: f64, reflectivity: f64) -> Result<Self> {
        positive("lambda", lambda)?;
        positive("period", period_m)?;
        positive("distance", distance_m)?;
        positive("focal", focal_m)?;
        if !(reflectivity > 0.0 && reflectivity <= 1.0) {
            return Err(RatchetError::invalid("reflectivity", format!("must lie in (0, 1], got {reflectivity}")));
        }
        Ok(Self {
            lambda,
            period_m,
            distance_m,
            focal_m,
            reflectivity,
        })
    }

    /// The laboratory setup with the mirror-to-lens gap chosen for `hbar`.
    pub fn experimental(hbar: EffectivePlanck) -> Self {
        let distance = distance_for_hbar(hbar, Self::LAMBDA_M, Self::PERIOD_M);
        Self::new(Self::LAMBDA_M, Self::PERIOD_M, distance, Self::FOCAL_M, Self::REFLECTIVITY)
            .expect("laboratory constants are valid")
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn period_m(&self) -> f64 {
        self.period_m
    }

    pub fn distance_m(&self) -> f64 {
        self.distance_m
    }

    pub fn focal_m(&self) -> f64 {
        self.focal_m
    }

    pub fn reflectivity(&self) -> f64 {
        self.reflectivity
    }

    /// Spacing of adjacent diffraction orders on the focal plane.
    pub fn order_spacing_m(&self) -> f64 {
        self.lambda * self.focal_m / self.period_m
    }

    pub fn hbar(&self) -> EffectivePlanck {
        hbar_from_geometry(self)
    }
}

/// `hbar = 2 pi lambda L / l^2`.
pub fn hbar_from_geometry(geom: &OpticalGeometry) -> EffectivePlanck {
    EffectivePlanck::new(TAU * geom.lambda * geom.distance_m / (geom.period_m * geom.period_m))
        .expect("positive geometry gives positive hbar")
}

fn half_talbot(lambda: f64, period_m: f64) -> f64 {
    period_m * period_m / (2.0 * lambda)
}

/// Mirror-to-lens gap `L = hbar l^2 / (2 pi lambda)` that realizes `hbar`.
pub fn distance_for_hbar(hbar: EffectivePlanck, lambda: f64, period_m: f64) -> f64 {
    hbar.value() / PI * half_talbot(lambda, period_m)
}

/// Lau fringe distance `(a / b) l^2 / (2 lambda)`.
pub fn lau_distance(a: u64, b: u64, lambda: f64, period_m: f64) -> Result<f64> {
    if a == 0 || b == 0 {
        return Err(RatchetError::invalid("lau_ratio", "a and b must be >= 1"));
    }
    positive("lambda", lambda)?;
    positive("period", period_m)?;
    Ok(a as f64 / b as f64 * half_talbot(lambda, period_m))
}

/// Complex field over a periodic transverse window.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamField {
    samples: Vec<Complex64>,
    dx: f64,
    wavelength_m: f64,
}

impl BeamField {
    pub fn new(samples: Vec<Complex64>, dx: f64, wavelength_m: f64) -> Result<Self> {
        positive("dx", dx)?;
        positive("lambda", wavelength_m)?;
        if samples.len() < 2 {
            return Err(RatchetError::invalid("field", "need at least two samples"));
        }
        if samples.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(RatchetError::invalid("field", "contains a non-finite sample"));
        }
        Ok(Self {
            samples,
            dx,
            wavelength_m,
        })
    }

    fn window_grid(periods: usize, samples_per_period: usize, period_m: f64) -> Result<(usize, f64)> {
        if periods < MIN_WINDOW_PERIODS {
            return Err(RatchetError::invalid(
                "window_periods",
                format!("need at least {MIN_WINDOW_PERIODS}, got {periods}"),
            ));
        }
        if samples_per_period < MIN_SAMPLES_PER_PERIOD {
            return Err(RatchetError::invalid(
                "samples_per_period",
                format!("need at least {MIN_SAMPLES_PER_PERIOD}, got {samples_per_period}"),
            ));
        }
        positive("period", period_m)?;
        Ok((periods * samples_per_period, period_m / samples_per_period as f64))
    }

    /// Unit-power uniform field spanning `periods` mirror periods.
    pub fn plane(lambda: f64, period_m: f64, periods: usize, samples_per_period: usize) -> Result<Self> {
        let (n, dx) = Self::window_grid(periods, samples_per_period, period_m)?;
        let amp = (1.0 / (n as f64 * dx)).sqrt();
        Self::new(vec![Complex64::new(amp, 0.0); n], dx, lambda)
    }

    /// Unit-power Gaussian centred in the window, `half_width_m` being the
    /// 1/e^2 intensity radius.
    pub fn gaussian(
        lambda: f64,
        period_m: f64,
        periods: usize,
        samples_per_period: usize,
        half_width_m: f64,
    ) -> Result<Self> {
        positive("beam_width", half_width_m)?;
        let (n, dx) = Self::window_grid(periods, samples_per_period, period_m)?;
        let centre = 0.5 * n as f64 * dx;
        let samples = (0..n)
            .map(|j| {
                let u = (j as f64 * dx - centre) / half_width_m;
                Complex64::new((-u * u).exp(), 0.0)
            })
            .collect();
        let mut field = Self::new(samples, dx, lambda)?;
        field.scale_power(1.0 / field.power());
        Ok(field)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_m
    }

    pub fn window_m(&self) -> f64 {
        self.samples.len() as f64 * self.dx
    }

    /// Integrated intensity `sum |E|^2 dx`.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.dx
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.norm_sqr()).collect()
    }

    fn scale_power(&mut self, factor: f64) {
        let s = factor.sqrt();
        self.samples.iter_mut().for_each(|c| *c *= s);
    }
}

/// Number of whole mirror periods in the field window.
fn commensurate_periods(field: &BeamField, period_m: f64) -> Result<usize> {
    let ratio = field.window_m() / period_m;
    let periods = ratio.round();
    if periods < 1.0 || (ratio - periods).abs() > 1e-9 * ratio.max(1.0) {
        return Err(RatchetError::Incommensurate {
            window_m: field.window_m(),
            period_m,
        });
    }
    Ok(periods as usize)
}

/// Reflects the field off the mirror: each sample picks up
/// `exp(i 4 pi d(x) / lambda)` from the depth cell containing it.
pub fn apply_mirror(mut field: BeamField, mirror: &MirrorProfile, lambda: f64) -> Result<BeamField> {
    commensurate_periods(&field, mirror.period_m())?;
    let phase = phase_from_depth(mirror, lambda)?;
    let factors: Vec<Complex64> = phase.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
    let cells = mirror.len();
    let cell_per_sample = field.dx / mirror.dx();
    for (j, c) in field.samples.iter_mut().enumerate() {
        let idx = ((j as f64 * cell_per_sample + 1e-9).floor() as usize) % cells;
        *c *= factors[idx];
    }
    Ok(field)
}

/// Angular-spectrum free flight: spatial frequency `f` picks up
/// `exp(-i pi lambda z f^2)`.
pub fn propagate_fresnel(field: BeamField, distance: f64) -> Result<BeamField> {
    if !(distance.is_finite() && distance >= 0.0) {
        return Err(RatchetError::invalid("distance", format!("must be finite and >= 0, got {distance}")));
    }
    let kernel = FresnelKernel::new(&field, distance);
    let mut field = field;
    kernel.apply(&mut field);
    Ok(field)
}

struct FresnelKernel {
    fft: FftPair,
    factors: Vec<Complex64>,
}

impl FresnelKernel {
    fn new(field: &BeamField, distance: f64) -> Self {
        let n = field.len();
        let window = field.window_m();
        // pi lambda z (m / W)^2 = pi c m^2
        let c = field.wavelength_m * distance / (window * window);
        let factors = (0..n).map(|k| quadratic_phase(c, signed_index(k, n) as f64)).collect();
        Self {
            fft: FftPair::new(n),
            factors,
        }
    }

    fn apply(&self, field: &mut BeamField) {
        self.fft.forward(&mut field.samples);
        for (c, f) in field.samples.iter_mut().zip(&self.factors) {
            *c *= f;
        }
        self.fft.inverse(&mut field.samples);
    }
}

/// Focal-plane intensity in ascending coordinate order.
#[derive(Debug, Clone, PartialEq)]
pub struct FarField {
    /// Power per pixel; sums to the field power.
    pub intensity: Vec<f64>,
    pub pixel_pitch_m: f64,
    /// Index of the optical axis (zero spatial frequency).
    pub centre: usize,
}

impl FarField {
    /// Focal-plane coordinate of pixel `i`.
    pub fn position_m(&self, i: usize) -> f64 {
        (i as f64 - self.centre as f64) * self.pixel_pitch_m
    }

    pub fn centroid_m(&self) -> f64 {
        let total: f64 = self.intensity.iter().sum();
        let moment: f64 = self
            .intensity
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.position_m(i))
            .sum();
        moment / total
    }
}

fn spectrum_power(samples: &[Complex64], fft: &FftPair, dx: f64) -> Vec<f64> {
    let n = samples.len();
    let mut buf = samples.to_vec();
    fft.forward(&mut buf);
    let scale = dx / n as f64;
    let half = n / 2;
    (0..n).map(|i| buf[(i + half) % n].norm_sqr() * scale).collect()
}

/// Intensity on the focal plane of a lens of focal length `focal_m`, at
/// coordinate `X = lambda f f_x`.
pub fn far_field(field: &BeamField, focal_m: f64) -> Result<FarField> {
    positive("focal", focal_m)?;
    let fft = FftPair::new(field.len());
    Ok(FarField {
        intensity: spectrum_power(&field.samples, &fft, field.dx),
        pixel_pitch_m: field.wavelength_m * focal_m / field.window_m(),
        centre: field.len() / 2,
    })
}

/// How far-field rows are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowNormalization {
    /// Every row rescaled to unit sum.
    #[default]
    PerRow,
    /// Rows keep the tapped power, `rho^k (1 - rho)` of the input for row `k`.
    LossAccounting,
}

impl fmt::Display for RowNormalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowNormalization::PerRow => "per_row",
            RowNormalization::LossAccounting => "loss",
        })
    }
}

impl FromStr for RowNormalization {
    type Err = RatchetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_row" => Ok(RowNormalization::PerRow),
            "loss" => Ok(RowNormalization::LossAccounting),
            other => Err(RatchetError::invalid(
                "normalization",
                format!("expected `per_row` or `loss`, got `{other}`"),
            )),
        }
    }
}

/// Stack of focal-plane rows, one per kick.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldImage {
    pub rows: Vec<Vec<f64>>,
    pub pixel_pitch_m: f64,
    /// Pixels between adjacent diffraction orders.
    pub pixels_per_order: usize,
    /// Column of order zero.
    pub centre: usize,
    pub normalization: RowNormalization,
    pub hbar: EffectivePlanck,
}

impl FarFieldImage {
    pub fn n_kicks(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Image with one pixel per ladder step, built from recorded spectra that
    /// share one contiguous, ascending momentum grid.
    pub fn from_ladders(ladders: &[MomentumLadder], pixel_pitch_m: f64) -> Result<Self> {
        let first = ladders
            .first()
            .ok_or_else(|| RatchetError::invalid("ladders", "need at least one row"))?;
        let contiguous = first.orders.windows(2).all(|w| w[1] == w[0] + 1);
        let centre = first.orders.iter().position(|&n| n == 0);
        let (true, Some(centre)) = (contiguous, centre) else {
            return Err(RatchetError::invalid("ladders", "orders must be contiguous and include 0"));
        };
        if ladders.iter().any(|l| l.orders != first.orders) {
            return Err(RatchetError::invalid("ladders", "rows use different momentum grids"));
        }
        Ok(Self {
            rows: ladders.iter().map(|l| l.probabilities.clone()).collect(),
            pixel_pitch_m,
            pixels_per_order: first.periods,
            centre,
            normalization: RowNormalization::PerRow,
            hbar: first.hbar,
        })
    }

    /// Order distribution of one row: pixels `[nW - W/2, nW - W/2 + W)` around
    /// order `n` are summed, and the result is normalized to unit sum.
    pub fn order_distribution(&self, row: usize) -> MomentumLadder {
        let w = self.pixels_per_order as i64;
        let width = self.width() as i64;
        let centre = self.centre as i64;
        let lo_order = -(centre / w);
        let hi_order = (width - 1 - centre) / w;
        let mut orders = Vec::new();
        let mut probabilities = Vec::new();
        for n in lo_order..=hi_order {
            let start = n * w - w / 2 + centre;
            let sum: f64 = (start..start + w)
                .filter(|i| (0..width).contains(i))
                .map(|i| self.rows[row][i as usize])
                .sum();
            orders.push(n);
            probabilities.push(sum);
        }
        let total: f64 = probabilities.iter().sum();
        if total > 0.0 {
            probabilities.iter_mut().for_each(|p| *p /= total);
        }
        MomentumLadder {
            beta: 0.0,
            periods: 1,
            orders,
            probabilities,
            hbar: self.hbar,
        }
    }

    /// Keeps only the columns within `max_order` orders of the axis.
    pub fn cropped(&self, max_order: usize) -> Self {
        let half = max_order * self.pixels_per_order + self.pixels_per_order / 2;
        let lo = self.centre.saturating_sub(half);
        let hi = (self.centre + half + 1).min(self.width());
        Self {
            rows: self.rows.iter().map(|r| r[lo..hi].to_vec()).collect(),
            centre: self.centre - lo,
            ..self.clone()
        }
    }

    /// Writes `kick,order,probability` rows for orders within `max_order`.
    pub fn write_order_csv<W: Write>(&self, mut out: W, max_order: i64) -> Result<()> {
        writeln!(out, "kick,order,probability")?;
        for row in 0..self.rows.len() {
            let ladder = self.order_distribution(row);
            for (n, p) in ladder.orders.iter().zip(&ladder.probabilities) {
                if n.abs() <= max_order {
                    writeln!(out, "{},{},{:.12e}", row + 1, n, p)?;
                }
            }
        }
        Ok(())
    }
}

/// Runs `n_kicks` mirror encounters. After each encounter the field leaking
/// through the lens flat is recorded, then the remainder flies one gap length
/// back to the mirror.
pub fn bounce_simulation(
    geom: &OpticalGeometry,
    mirror: &MirrorProfile,
    input: &BeamField,
    n_kicks: usize,
    normalization: RowNormalization,
) -> Result<FarFieldImage> {
    if n_kicks == 0 {
        return Err(RatchetError::invalid("n_kicks", "must be >= 1"));
    }
    if (input.wavelength_m - geom.lambda).abs() > 1e-12 * geom.lambda {
        return Err(RatchetError::invalid("lambda", "beam and geometry wavelengths differ"));
    }
    if (mirror.period_m() - geom.period_m).abs() > 1e-12 * geom.period_m {
        return Err(RatchetError::invalid("period", "mirror and geometry periods differ"));
    }
    let periods = commensurate_periods(input, geom.period_m)?;
    if periods < MIN_WINDOW_PERIODS {
        return Err(RatchetError::invalid(
            "window_periods",
            format!("need at least {MIN_WINDOW_PERIODS}, got {periods}"),
        ));
    }
    if input.len() < periods * MIN_SAMPLES_PER_PERIOD {
        return Err(RatchetError::invalid(
            "samples_per_period",
            format!("need at least {MIN_SAMPLES_PER_PERIOD}"),
        ));
    }
    let fft = FftPair::new(input.len());
    let flight = FresnelKernel::new(input, geom.distance_m);
    let tap = 1.0 - geom.reflectivity;
    let mut field = input.clone();
    let mut rows = Vec::with_capacity(n_kicks);
    for _ in 0..n_kicks {
        field = apply_mirror(field, mirror, geom.lambda)?;
        let mut row = spectrum_power(&field.samples, &fft, field.dx);
        match normalization {
            RowNormalization::PerRow => {
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= total);
            }
            RowNormalization::LossAccounting => {
                row.iter_mut().for_each(|v| *v *= tap);
                field.scale_power(geom.reflectivity);
            }
        }
        rows.push(row);
        flight.apply(&mut field);
    }
    Ok(FarFieldImage {
        rows,
        pixel_pitch_m: geom.lambda * geom.focal_m / input.window_m(),
        pixels_per_order: periods,
        centre: input.len() / 2,
        normalization,
        hbar: geom.hbar(),
    })
}

/// Stretch of the mirror with a single phase gradient, and the deflection a
/// narrow probe beam centred on it receives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionDeflection {
    pub start_m: f64,
    pub length_m: f64,
    /// Phase gradient in rad/m.
    pub gradient: f64,
    /// `(lambda f / 2 pi) dphi/dx`.
    pub expected_shift_m: f64,
    /// Far-field centroid of the probe.
    pub measured_shift_m: f64,
}

impl RegionDeflection {
    /// Deviation of the measured shift, relative to the expected shift, or
    /// to one order spacing when no shift is expected.
    pub fn relative_error(&self, order_spacing_m: f64) -> f64 {
        let scale = if self.expected_shift_m.abs() > 0.0 {
            self.expected_shift_m.abs()
        } else {
            order_spacing_m
        };
        (self.measured_shift_m - self.expected_shift_m).abs() / scale
    }
}

/// Smallest region, in mirror samples, that can host a probe.
pub const MIN_REGION_SAMPLES: usize = 32;

fn wrap_pi(x: f64) -> f64 {
    x - TAU * (x / TAU).round()
}

/// Splits one mirror period into maximal runs of equal phase step (cyclic).
/// Each run is `(first sample, number of steps, step)`.
fn gradient_runs(phase: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = phase.len();
    let steps: Vec<f64> = (0..n).map(|i| wrap_pi(phase[(i + 1) % n] - phase[i])).collect();
    let same = |a: f64, b: f64| (a - b).abs() < 1e-9;
    let Some(start) = (0..n).find(|&i| !same(steps[i], steps[(i + n - 1) % n])) else {
        return vec![(0, n, steps[0])];
    };
    let mut runs = Vec::new();
    let mut i = 0;
    while i < n {
        let first = (start + i) % n;
        let step = steps[first];
        let mut len = 1;
        while i + len < n && same(steps[(start + i + len) % n], step) {
            len += 1;
        }
        runs.push((first, len, step));
        i += len;
    }
    runs
}

/// Probes every constant-gradient region of the mirror with a narrow Gaussian
/// and measures the far-field centroid shift it produces.
pub fn deflection_check(mirror: &MirrorProfile, lambda: f64, focal_m: f64) -> Result<Vec<RegionDeflection>> {
    positive("focal", focal_m)?;
    let phase = phase_from_depth(mirror, lambda)?;
    let cells = mirror.len();
    let dxm = mirror.dx();
    let spp = cells * MIN_SAMPLES_PER_PERIOD.div_ceil(cells);
    let periods = MIN_WINDOW_PERIODS;
    let n = periods * spp;
    let dx = mirror.period_m() / spp as f64;
    // The probed period sits in the middle of the window.
    let offset = (periods / 2) as f64 * mirror.period_m();
    let mut out = Vec::new();
    for (first, steps, step) in gradient_runs(&phase) {
        if steps < MIN_REGION_SAMPLES {
            continue;
        }
        let start_m = first as f64 * dxm;
        let length_m = steps as f64 * dxm;
        let centre = offset + start_m + 0.5 * length_m;
        let w = length_m / 8.0;
        let samples = (0..n)
            .map(|j| {
                let u = (j as f64 * dx - centre) / w;
                Complex64::new((-u * u).exp(), 0.0)
            })
            .collect();
        let probe = BeamField::new(samples, dx, lambda)?;
        let reflected = apply_mirror(probe, mirror, lambda)?;
        let ff = far_field(&reflected, focal_m)?;
        let gradient = step / dxm;
        out.push(RegionDeflection {
            start_m,
            length_m,
            gradient,
            expected_shift_m: lambda * focal_m / TAU * gradient,
            measured_shift_m: ff.centroid_m(),
        });
    }
    if out.is_empty() {
        return Err(RatchetError::RegionTooSmall {
            min_samples: MIN_REGION_SAMPLES,
        });
    }
    Ok(out)
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Binary PGM (P5, maxval 255).
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)?;
        Ok(())
    }
}

/// Stacks rows top to bottom by kick; each row's maximum maps to 255 and
/// intermediate values follow `255 (I / max)^(1 / gamma)`.
pub fn render_ccd(image: &FarFieldImage, gamma: f64) -> Result<Raster> {
    positive("gamma", gamma)?;
    if image.rows.is_empty() || image.width() == 0 {
        return Err(RatchetError::invalid("image", "no rows to render"));
    }
    let width = image.width();
    let mut pixels = Vec::with_capacity(width * image.rows.len());
    for row in &image.rows {
        let max = row.iter().copied().fold(0.0, f64::max);
        pixels.extend(row.iter().map(|&v| {
            if max > 0.0 {
                (255.0 * (v / max).powf(1.0 / gamma)).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        }));
    }
    Ok(Raster {
        width,
        height: image.rows.len(),
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{KickedRunParams, SpatialGrid, plane_wave_trajectory};
    use crate::model::{Levels, RatchetPotential, depth_from_phase};

    const L: f64 = OpticalGeometry::LAMBDA_M;
    const P: f64 = OpticalGeometry::PERIOD_M;

    fn hbar_pi(m: f64) -> EffectivePlanck {
        EffectivePlanck::pi_multiple(m).unwrap()
    }

    fn field_with(samples: Vec<Complex64>, periods: usize) -> BeamField {
        let dx = periods as f64 * P / samples.len() as f64;
        BeamField::new(samples, dx, L).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn geometry_arithmetic() {
        let g = OpticalGeometry::new(L, P, 0.169172, 0.3, 0.95).unwrap();
        assert!(rel(g.hbar().value(), 0.5 * PI) < 1e-4);
        assert!(rel(distance_for_hbar(hbar_pi(2.0), L, P), P * P / L) < 1e-15);
        assert!((distance_for_hbar(hbar_pi(2.0), L, P) - 0.676692).abs() < 1e-6);
        assert!((distance_for_hbar(hbar_pi(0.5), L, P) - 0.169172).abs() < 1e-6);
        let half = OpticalGeometry::new(L, P, P * P / (2.0 * L), 0.3, 0.95).unwrap();
        assert!(rel(half.hbar().value(), PI) < 1e-15);
        let tiny = OpticalGeometry::new(L, P, 1e-30, 0.3, 0.95).unwrap();
        assert!(tiny.hbar().value() < 1e-20);
        assert!(rel(g.order_spacing_m(), 266e-6) < 1e-12);
    }

    #[test]
    fn lau_examples() {
        let d21 = lau_distance(2, 1, L, P).unwrap();
        assert!(rel(d21, P * P / L) < 1e-15);
        assert!(rel(d21, distance_for_hbar(hbar_pi(2.0), L, P)) < 1e-15);
        let d11 = lau_distance(1, 1, L, P).unwrap();
        assert!(rel(d11, distance_for_hbar(hbar_pi(1.0), L, P)) < 1e-15);
        assert_eq!(lau_distance(6, 5, L, P).unwrap(), 2.0 * lau_distance(3, 5, L, P).unwrap());
        assert!(lau_distance(0, 1, L, P).is_err());
    }

    #[test]
    fn geometry_rejects_bad_values() {
        assert!(OpticalGeometry::new(L, P, 0.1, 0.3, 0.0).is_err());
        assert!(OpticalGeometry::new(L, P, 0.1, 0.3, 1.2).is_err());
        assert!(OpticalGeometry::new(L, -P, 0.1, 0.3, 0.9).is_err());
        assert!(OpticalGeometry::new(L, P, 0.1, 0.3, 1.0).is_ok());
    }

    #[test]
    fn flat_and_constant_mirrors() {
        let field = BeamField::gaussian(L, P, 8, 64, 2.0 * P).unwrap();
        let flat = MirrorProfile::new(P, vec![0.0; 64], Levels::Continuous).unwrap();
        assert_eq!(apply_mirror(field.clone(), &flat, L).unwrap(), field);
        let constant = MirrorProfile::new(P, vec![0.1 * L; 64], Levels::Continuous).unwrap();
        let out = apply_mirror(field.clone(), &constant, L).unwrap();
        for (a, b) in out.intensity().iter().zip(field.intensity()) {
            assert!((a - b).abs() < 1e-15 * b.max(1.0));
        }
    }

    #[test]
    fn incommensurate_window_is_rejected() {
        let field = BeamField::new(vec![Complex64::new(1.0, 0.0); 100], P / 64.0, L).unwrap();
        let flat = MirrorProfile::new(P, vec![0.0; 64], Levels::Continuous).unwrap();
        assert!(matches!(
            apply_mirror(field, &flat, L),
            Err(RatchetError::Incommensurate { .. })
        ));
    }

    #[test]
    fn window_invariants() {
        assert!(BeamField::plane(L, P, 7, 64).is_err());
        assert!(BeamField::plane(L, P, 8, 63).is_err());
        let f = BeamField::plane(L, P, 8, 64).unwrap();
        assert!((f.power() - 1.0).abs() < 1e-12);
        assert!(rel(f.window_m(), 8.0 * P) < 1e-15);
    }

    #[test]
    fn ideal_mirror_single_kick_matches_quantum_kick() {
        let pot = RatchetPotential::experimental();
        let hbar = hbar_pi(0.5);
        let spp = 256;
        let mirror = MirrorProfile::from_potential(&pot, hbar, L, P, spp).unwrap();
        let field = BeamField::plane(L, P, 8, spp).unwrap();
        let geom = OpticalGeometry::experimental(hbar);
        let image = bounce_simulation(&geom, &mirror, &field, 1, RowNormalization::PerRow).unwrap();
        let optical = image.order_distribution(0);
        let params = KickedRunParams::new(pot, hbar, 1).unwrap();
        let quantum = &plane_wave_trajectory(&params, SpatialGrid::new(1, spp).unwrap(), 0.0).unwrap()[0];
        for n in -40..=40 {
            assert!((optical.probability_of(n) - quantum.probability_of(n)).abs() < 1e-6);
        }
    }

    #[test]
    fn propagation_identities() {
        let field = BeamField::gaussian(L, P, 8, 64, P).unwrap();
        let scale = field.samples().iter().map(|c| c.norm()).fold(0.0, f64::max);
        let same = propagate_fresnel(field.clone(), 0.0).unwrap();
        for (a, b) in same.samples().iter().zip(field.samples()) {
            assert!((a - b).norm() < 1e-14 * scale);
        }
        let plane = BeamField::plane(L, P, 8, 64).unwrap();
        let moved = propagate_fresnel(plane.clone(), 0.37).unwrap();
        for (a, b) in moved.samples().iter().zip(plane.samples()) {
            assert!((a - b).norm() < 1e-12 * b.norm());
        }
        assert!(propagate_fresnel(field, -1.0).is_err());
    }

    #[test]
    fn talbot_self_imaging() {
        // Amplitude grating of period P repeated over 8 periods.
        let spp = 128;
        let samples: Vec<Complex64> = (0..8 * spp)
            .map(|j| {
                let x = (j % spp) as f64 / spp as f64;
                Complex64::new(if x < 0.3 { 1.0 } else { 0.2 } + 0.3 * (TAU * x).cos(), 0.0)
            })
            .collect();
        let field = field_with(samples, 8);
        let z_t = 2.0 * P * P / L;
        let one = propagate_fresnel(field.clone(), z_t).unwrap();
        let mut seven = field.clone();
        for _ in 0..7 {
            seven = propagate_fresnel(seven, z_t / 7.0).unwrap();
        }
        let half = propagate_fresnel(field.clone(), 0.25 * z_t).unwrap();
        let i0 = field.intensity();
        let err = |f: &BeamField| f.intensity().iter().zip(&i0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err(&one) < 1e-6);
        assert!(err(&seven) < 1e-6);
        // Away from the Talbot plane the pattern is different.
        assert!(err(&half) > 1e-2);
    }

    #[test]
    fn far_field_peaks() {
        let plane = BeamField::plane(L, P, 8, 64).unwrap();
        let ff = far_field(&plane, 0.3).unwrap();
        let peak = ff.intensity.iter().cloned().fold(0.0, f64::max);
        assert_eq!(ff.intensity[ff.centre], peak);
        assert!((ff.intensity.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(ff.intensity.iter().enumerate().all(|(i, v)| i == ff.centre || *v < 1e-25));

        let periods = 8;
        let n = periods * 64;
        let samples = (0..n)
            .map(|j| {
                let x = TAU * (j as f64) / 64.0;
                Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, x)
            })
            .collect();
        let two = far_field(&field_with(samples, periods), 0.3).unwrap();
        let a = two.intensity[two.centre];
        let b = two.intensity[two.centre + periods];
        assert!((a - b).abs() < 1e-12 * a);
        let spacing = (periods as f64) * two.pixel_pitch_m;
        assert!(rel(spacing, 266e-6) < 1e-12);
    }

    #[test]
    fn loss_accounting_tracks_tapped_power() {
        let hbar = hbar_pi(0.5);
        let geom = OpticalGeometry::experimental(hbar);
        let mirror = MirrorProfile::from_potential(&RatchetPotential::experimental(), hbar, L, P, 64).unwrap();
        let input = BeamField::gaussian(L, P, 16, 64, 3e-3).unwrap();
        let img = bounce_simulation(&geom, &mirror, &input, 10, RowNormalization::LossAccounting).unwrap();
        for (k, row) in img.rows.iter().enumerate() {
            let want = 0.95f64.powi(k as i32) * 0.05 * input.power();
            assert!((row.iter().sum::<f64>() - want).abs() < 1e-12);
        }
        let norm = bounce_simulation(&geom, &mirror, &input, 3, RowNormalization::PerRow).unwrap();
        for row in &norm.rows {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_mirror_single_row_is_input_far_field() {
        let geom = OpticalGeometry::experimental(hbar_pi(0.5));
        let flat = MirrorProfile::new(P, vec![0.0; 64], Levels::Continuous).unwrap();
        let input = BeamField::gaussian(L, P, 8, 64, 1e-3).unwrap();
        let img = bounce_simulation(&geom, &flat, &input, 1, RowNormalization::LossAccounting).unwrap();
        let ff = far_field(&input, geom.focal_m()).unwrap();
        for (a, b) in img.rows[0].iter().zip(&ff.intensity) {
            assert!((a - 0.05 * b).abs() < 1e-15);
        }
    }

    fn ramp_mirror(grad_per_sample: &[(usize, f64)], samples: usize) -> MirrorProfile {
        // piecewise-linear phase built from (length, step) pieces
        let mut phase = Vec::with_capacity(samples);
        let mut acc = 0.0;
        for &(len, step) in grad_per_sample {
            for _ in 0..len {
                phase.push(acc);
                acc += step;
            }
        }
        assert_eq!(phase.len(), samples);
        depth_from_phase(&phase, L, P).unwrap()
    }

    #[test]
    fn integer_ramp_deflects_by_whole_orders() {
        for m in [1i64, 2, -3] {
            let s = 256;
            let mirror = ramp_mirror(&[(s, TAU * m as f64 / s as f64)], s);
            let regions = deflection_check(&mirror, L, 0.3).unwrap();
            assert_eq!(regions.len(), 1);
            let spacing = L * 0.3 / P;
            assert!((regions[0].expected_shift_m - m as f64 * spacing).abs() < 1e-12 * spacing);
            assert!(regions[0].relative_error(spacing) < 0.02);
        }
    }

    #[test]
    fn flat_mirror_has_no_deflection() {
        let flat = MirrorProfile::new(P, vec![0.0; 256], Levels::Continuous).unwrap();
        let regions = deflection_check(&flat, L, 0.3).unwrap();
        assert_eq!(regions[0].expected_shift_m, 0.0);
        assert!(regions[0].relative_error(L * 0.3 / P) < 0.02);
    }

    #[test]
    fn half_order_ramp_lands_midway() {
        let s = 1024;
        let step = PI / s as f64;
        let mirror = ramp_mirror(&[(512, step), (512, -3.0 * step)], s);
        let regions = deflection_check(&mirror, L, 0.3).unwrap();
        let spacing = L * 0.3 / P;
        let half = regions.iter().find(|r| r.gradient > 0.0).unwrap();
        assert!((half.expected_shift_m - 0.5 * spacing).abs() < 1e-9 * spacing);
        assert!(half.relative_error(spacing) < 0.02);
    }

    #[test]
    fn tiny_regions_are_rejected() {
        let depths: Vec<f64> = (0..64).map(|j| if j % 2 == 0 { 0.0 } else { 0.1 * L }).collect();
        let mirror = MirrorProfile::new(P, depths, Levels::Continuous).unwrap();
        assert!(matches!(
            deflection_check(&mirror, L, 0.3),
            Err(RatchetError::RegionTooSmall { .. })
        ));
    }

    fn image(rows: Vec<Vec<f64>>) -> FarFieldImage {
        FarFieldImage {
            centre: rows[0].len() / 2,
            rows,
            pixel_pitch_m: 1e-6,
            pixels_per_order: 1,
            normalization: RowNormalization::PerRow,
            hbar: hbar_pi(0.5),
        }
    }

    #[test]
    fn ccd_rendering() {
        let r = render_ccd(&image(vec![vec![0.2; 5]]), 2.2).unwrap();
        assert!(r.pixels.iter().all(|&p| p == 255));
        let r = render_ccd(&image(vec![vec![0.0, 0.5, 0.0, 0.5, 0.1]]), 1.0).unwrap();
        assert_eq!(r.pixels.iter().filter(|&&p| p == 255).count(), 2);
        assert_eq!(r.pixel(0, 4), 51);
        let mut buf = Vec::new();
        r.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n5 1\n255\n"));
        assert_eq!(buf.len(), b"P5\n5 1\n255\n".len() + 5);
        assert!(render_ccd(&image(vec![vec![1.0]]), 0.0).is_err());
    }

    #[test]
    fn order_binning_sums_neighbouring_pixels() {
        let mut img = image(vec![vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]]);
        img.pixels_per_order = 2;
        // centre 4; order 0 covers pixels 3..5, order 1 covers 5..7
        let d = img.order_distribution(0);
        assert_eq!(d.orders, vec![-2, -1, 0, 1]);
        let total = 21.0;
        assert!((d.probability_of(0) - 7.0 / total).abs() < 1e-15);
        assert!((d.probability_of(1) - 11.0 / total).abs() < 1e-15);
        assert!((d.probability_of(-2) - 0.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_field(seed: Vec<(f64, f64)>) -> BeamField {
            let samples: Vec<Complex64> = seed.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
            let n = samples.len();
            BeamField::new(samples, 8.0 * P / n as f64, L).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn flight_conserves_power(
                seed in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 512),
                z in 0.0f64..2.0,
            ) {
                let f = random_field(seed);
                let p0 = f.power();
                let p1 = propagate_fresnel(f, z).unwrap().power();
                prop_assert!((p1 - p0).abs() < 1e-12 * p0);
            }

            #[test]
            fn flights_compose(
                seed in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 512),
                z1 in 0.0f64..1.0,
                z2 in 0.0f64..1.0,
            ) {
                let f = random_field(seed);
                let two = propagate_fresnel(propagate_fresnel(f.clone(), z1).unwrap(), z2).unwrap();
                let one = propagate_fresnel(f, z1 + z2).unwrap();
                let diff: f64 = two.samples().iter().zip(one.samples()).map(|(a, b)| (a - b).norm_sqr()).sum();
                let norm: f64 = one.samples().iter().map(|c| c.norm_sqr()).sum();
                // kernel phases reach pi lambda z (N / 2W)^2; their rounding sets the floor
                let w = one.window_m();
                let half = one.len() as f64 / 2.0;
                let max_phase = PI * L * (z1 + z2) * half * half / (w * w);
                let tol = (32.0 * f64::EPSILON * max_phase).max(1e-12);
                prop_assert!((diff / norm).sqrt() < tol);
            }
        }
    }
}
