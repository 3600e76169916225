//! Drivers that combine the engines into the figure reproductions and the
//! engine-comparison studies, and write their artifacts.

use std::f64::consts::PI;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{RatchetError, Result};
use crate::evolution::{KickedRunParams, MomentumLadder, SpatialGrid, WaveState, evolve, momentum_spectrum};
use crate::model::{EffectivePlanck, Levels, MirrorProfile, RatchetPotential};
use crate::observables::{
    FitResult, StepStats, distribution_distance, max_abs_difference, mean_momentum, polynomial_fit,
    write_stats_csv,
};
use crate::optics::{BeamField, FarFieldImage, OpticalGeometry, RowNormalization, bounce_simulation, far_field, render_ccd};

/// Momentum orders kept in the per-kick CSVs and CCD renderings.
pub const FIGURE_MAX_ORDER: i64 = 30;
/// Quantization levels of the convergence sweep.
pub const QUANTIZATION_SWEEP: [u32; 6] = [2, 4, 8, 16, 32, 64];
/// Environment variable capping scan concurrency (0 or unset = all cores).
pub const THREADS_ENV: &str = "RATCHET_LAB_THREADS";

/// Smallest power-of-two grid that holds the momentum a run can reach.
///
/// Each kick moves momentum by at most `K max|v'| / hbar` orders; the grid
/// keeps four times that reach over the whole run.
pub fn grid_for(pot: &RatchetPotential, hbar: EffectivePlanck, n_kicks: usize, base: SpatialGrid) -> Result<SpatialGrid> {
    let slope = 1.0 + 2.0 * pot.harmonic_weight().abs();
    let reach = n_kicks as f64 * pot.strength() * slope / hbar.value();
    let need = (4.0 * reach + 64.0).ceil() as usize;
    SpatialGrid::new(base.periods(), need.next_power_of_two().max(base.points_per_period()))
}

/// Quasimomenta of the initial state: one value, or a uniform ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCondition {
    pub beta: f64,
    /// Members of a uniform `j / n` quasimomentum ensemble; 0 uses `beta` alone.
    pub ensemble: usize,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self { beta: 0.0, ensemble: 0 }
    }
}

impl InitialCondition {
    /// Quasimomenta to evolve, one per ensemble member.
    pub fn betas(&self) -> Vec<f64> {
        if self.ensemble == 0 {
            vec![self.beta]
        } else {
            (0..self.ensemble).map(|j| j as f64 / self.ensemble as f64).collect()
        }
    }
}

/// Per-kick statistics and order distributions of a quantum run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub stats: Vec<StepStats>,
    /// Integer-order distributions, averaged over the ensemble.
    pub ladders: Vec<MomentumLadder>,
}

/// Evolves a zero-order plane wave for every quasimomentum of `init`.
pub fn quantum_trajectory(
    pot: &RatchetPotential,
    hbar: EffectivePlanck,
    n_kicks: usize,
    init: InitialCondition,
    base: SpatialGrid,
) -> Result<Trajectory> {
    let params = KickedRunParams::new(*pot, hbar, n_kicks)?;
    let grid = grid_for(pot, hbar, n_kicks, base)?;
    let betas = init.betas();
    let weight = 1.0 / betas.len() as f64;
    let mut stats: Vec<StepStats> = Vec::new();
    let mut ladders: Vec<MomentumLadder> = Vec::new();
    for (member, &beta) in betas.iter().enumerate() {
        let state = WaveState::plane_wave(grid, 0, beta)?;
        let mut kick = 0;
        evolve(state, &params, |k, ladder| {
            let s = StepStats::from_ladder(k, ladder);
            if member == 0 {
                stats.push(StepStats {
                    kick: k,
                    mean_p: weight * s.mean_p,
                    mean_p2: weight * s.mean_p2,
                    participation: 0.0,
                });
                ladders.push(MomentumLadder {
                    beta: 0.0,
                    probabilities: ladder.probabilities.iter().map(|p| weight * p).collect(),
                    ..ladder.clone()
                });
            } else {
                stats[kick].mean_p += weight * s.mean_p;
                stats[kick].mean_p2 += weight * s.mean_p2;
                for (acc, p) in ladders[kick].probabilities.iter_mut().zip(&ladder.probabilities) {
                    *acc += weight * p;
                }
            }
            kick += 1;
        })?;
    }
    for (s, l) in stats.iter_mut().zip(&ladders) {
        s.participation = crate::observables::participation(l);
    }
    Ok(Trajectory { stats, ladders })
}

/// Beam and sampling used by the optical engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalSetup {
    /// 1/e^2 intensity radius of the Gaussian input.
    pub beam_width_m: f64,
    pub window_periods: usize,
    pub samples_per_period: usize,
    pub normalization: RowNormalization,
}

impl OpticalSetup {
    /// The 6 mm wide laboratory beam.
    pub fn figure() -> Self {
        Self {
            beam_width_m: 3e-3,
            window_periods: 32,
            samples_per_period: 128,
            normalization: RowNormalization::PerRow,
        }
    }

    /// A beam twenty periods in radius, wide enough to behave as a plane wave
    /// over the cross-engine comparison.
    pub fn comparison() -> Self {
        Self {
            beam_width_m: 20.0 * OpticalGeometry::PERIOD_M,
            window_periods: 128,
            samples_per_period: 256,
            normalization: RowNormalization::PerRow,
        }
    }

    pub fn input(&self, geom: &OpticalGeometry) -> Result<BeamField> {
        BeamField::gaussian(
            geom.lambda(),
            geom.period_m(),
            self.window_periods,
            self.samples_per_period,
            self.beam_width_m,
        )
    }
}

/// Ratchet mirror for `geom`, sampled at the field resolution.
pub fn ratchet_mirror(geom: &OpticalGeometry, pot: &RatchetPotential, levels: Levels, samples: usize) -> Result<MirrorProfile> {
    let ideal = MirrorProfile::from_potential(pot, geom.hbar(), geom.lambda(), geom.period_m(), samples)?;
    match levels {
        Levels::Continuous => Ok(ideal),
        Levels::Discrete(n) => ideal.quantized(n),
    }
}

/// Far-field image of a bounce run with the ratchet mirror.
pub fn optical_trajectory(
    geom: &OpticalGeometry,
    pot: &RatchetPotential,
    levels: Levels,
    setup: &OpticalSetup,
    n_kicks: usize,
) -> Result<FarFieldImage> {
    let mirror = ratchet_mirror(geom, pot, levels, setup.samples_per_period)?;
    bounce_simulation(geom, &mirror, &setup.input(geom)?, n_kicks, setup.normalization)
}

/// Order-resolved mean momentum of every row of an image.
pub fn row_centroids(image: &FarFieldImage) -> Vec<f64> {
    (0..image.n_kicks()).map(|r| mean_momentum(&image.order_distribution(r))).collect()
}

/// The two panels of the per-kick far-field figure.
pub const FIG2_PANELS: [(&str, f64); 2] = [("a", 0.5), ("b", 0.35)];

#[derive(Debug, Clone)]
pub struct Fig2Panel {
    pub label: &'static str,
    pub hbar: EffectivePlanck,
    pub quantum: FarFieldImage,
    pub optical: Option<FarFieldImage>,
}

/// Per-kick momentum images at `hbar = 0.5 pi` and `0.35 pi`.
pub fn run_fig2(cfg: &RunConfig) -> Result<Vec<Fig2Panel>> {
    FIG2_PANELS
        .iter()
        .map(|&(label, multiple)| {
            let hbar = EffectivePlanck::pi_multiple(multiple)?;
            let traj = quantum_trajectory(&cfg.potential, hbar, cfg.n_kicks, cfg.initial, cfg.grid)?;
            let geom = cfg.geometry_for(hbar)?;
            let quantum = FarFieldImage::from_ladders(&traj.ladders, geom.order_spacing_m())?;
            let optical = if cfg.engine.optical() {
                Some(optical_trajectory(&geom, &cfg.potential, cfg.n_levels, &cfg.optical, cfg.n_kicks)?)
            } else {
                None
            };
            Ok(Fig2Panel {
                label,
                hbar,
                quantum,
                optical,
            })
        })
        .collect()
}

fn write_image(dir: &Path, stem: &str, image: &FarFieldImage, gamma: f64) -> Result<()> {
    let raster = render_ccd(&image.cropped(FIGURE_MAX_ORDER as usize), gamma)?;
    let mut pgm = BufWriter::new(File::create(dir.join(format!("{stem}.pgm")))?);
    raster.write_pgm(&mut pgm)?;
    pgm.flush()?;
    let mut csv = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
    image.write_order_csv(&mut csv, FIGURE_MAX_ORDER)?;
    csv.flush()?;
    Ok(())
}

pub fn write_fig2(dir: &Path, panels: &[Fig2Panel], gamma: f64) -> Result<()> {
    for p in panels {
        write_image(dir, &format!("fig2_{}", p.label), &p.quantum, gamma)?;
        if let Some(opt) = &p.optical {
            write_image(dir, &format!("fig2_{}_optical", p.label), opt, gamma)?;
        }
    }
    Ok(())
}

/// Momentum statistics at the resonant and the off-resonant `hbar`.
#[derive(Debug, Clone)]
pub struct Fig3Output {
    pub resonant_hbar: EffectivePlanck,
    pub off_resonant_hbar: EffectivePlanck,
    pub resonant: Trajectory,
    pub off_resonant: Trajectory,
    /// Linear fit of `<p>` over kicks 2 to the last.
    pub mean_fit: FitResult,
    /// Quadratic fit of `<p^2>` over all kicks.
    pub square_fit: FitResult,
}

impl Fig3Output {
    /// Final `<p^2>` off resonance divided by its resonant value.
    pub fn energy_ratio(&self) -> f64 {
        let last = |t: &Trajectory| t.stats.last().map_or(f64::NAN, |s| s.mean_p2);
        last(&self.off_resonant) / last(&self.resonant)
    }
}

pub fn run_fig3(cfg: &RunConfig) -> Result<Fig3Output> {
    if cfg.n_kicks < 4 {
        return Err(RatchetError::invalid("n_kicks", "the fits need at least 4 kicks"));
    }
    let base = cfg.grid;
    let res_hbar = EffectivePlanck::pi_multiple(0.5)?;
    let off_hbar = EffectivePlanck::pi_multiple(0.35)?;
    let resonant = quantum_trajectory(&cfg.potential, res_hbar, cfg.n_kicks, cfg.initial, base)?;
    let off_resonant = quantum_trajectory(&cfg.potential, off_hbar, cfg.n_kicks, cfg.initial, base)?;
    let tail = &resonant.stats[1..];
    let xs: Vec<f64> = tail.iter().map(|s| s.kick as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|s| s.mean_p).collect();
    let mean_fit = polynomial_fit(&xs, &ys, 1)?;
    let xs: Vec<f64> = resonant.stats.iter().map(|s| s.kick as f64).collect();
    let ys: Vec<f64> = resonant.stats.iter().map(|s| s.mean_p2).collect();
    let square_fit = polynomial_fit(&xs, &ys, 2)?;
    Ok(Fig3Output {
        resonant_hbar: res_hbar,
        off_resonant_hbar: off_hbar,
        resonant,
        off_resonant,
        mean_fit,
        square_fit,
    })
}

fn fit_row<W: Write>(out: &mut W, series: &str, from: usize, to: usize, fit: &FitResult) -> Result<()> {
    let c = |i: usize| fit.coefficients.get(i).copied().unwrap_or(0.0);
    writeln!(
        out,
        "{series},{},{from},{to},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
        fit.coefficients.len() - 1,
        c(0),
        c(1),
        c(2),
        fit.r_squared,
        fit.residual_rms
    )?;
    Ok(())
}

pub fn write_fig3(dir: &Path, cfg: &RunConfig, out: &Fig3Output) -> Result<()> {
    for (name, hbar, traj) in [
        ("res", out.resonant_hbar, &out.resonant),
        ("offres", out.off_resonant_hbar, &out.off_resonant),
    ] {
        let mut params = cfg.summary();
        params.push(("hbar", hbar.value().to_string()));
        let mut f = BufWriter::new(File::create(dir.join(format!("fig3_stats_{name}.csv")))?);
        write_stats_csv(&mut f, &params, &traj.stats)?;
        f.flush()?;
    }
    let n = out.resonant.stats.len();
    let mut f = BufWriter::new(File::create(dir.join("fig3_fits.csv"))?);
    writeln!(f, "series,degree,kick_from,kick_to,c0,c1,c2,r_squared,residual_rms")?;
    fit_row(&mut f, "mean_p", 2, n, &out.mean_fit)?;
    fit_row(&mut f, "mean_p2", 1, n, &out.square_fit)?;
    writeln!(f, "# offres_over_res_final_mean_p2={:.12e}", out.energy_ratio())?;
    f.flush()?;

    let mut f = BufWriter::new(File::create(dir.join("fig3_final.csv"))?);
    writeln!(f, "series,order,probability")?;
    for (name, traj) in [("res", &out.resonant), ("offres", &out.off_resonant)] {
        if let Some(last) = traj.ladders.last() {
            for n in -FIGURE_MAX_ORDER..=FIGURE_MAX_ORDER {
                writeln!(f, "{name},{n},{:.12e}", last.probability_of(n))?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

/// Which parameter a scan holds fixed while `hbar` varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// `K` held fixed.
    FixedStrength,
    /// `K / hbar` held fixed.
    FixedKickPhase,
    Both,
}

impl ScanMode {
    fn single_modes(self) -> Vec<ScanMode> {
        match self {
            ScanMode::Both => vec![ScanMode::FixedStrength, ScanMode::FixedKickPhase],
            m => vec![m],
        }
    }
}

impl fmt::Display for ScanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanMode::FixedStrength => "fixed_strength",
            ScanMode::FixedKickPhase => "fixed_kick_phase",
            ScanMode::Both => "both",
        })
    }
}

impl FromStr for ScanMode {
    type Err = RatchetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_strength" => Ok(ScanMode::FixedStrength),
            "fixed_kick_phase" => Ok(ScanMode::FixedKickPhase),
            "both" => Ok(ScanMode::Both),
            other => Err(RatchetError::invalid(
                "scan_mode",
                format!("expected fixed_strength, fixed_kick_phase or both, got `{other}`"),
            )),
        }
    }
}

/// Grid of `hbar` values and kick counts for the resonance scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub hbar_values: Vec<EffectivePlanck>,
    pub kicks_at: Vec<usize>,
    pub potential: RatchetPotential,
    pub mode: ScanMode,
    /// `K / hbar` used in fixed-kick-phase mode.
    pub kick_phase: f64,
    pub initial: InitialCondition,
    pub base_grid: SpatialGrid,
}

impl ScanSpec {
    pub fn new(
        hbar_values: Vec<EffectivePlanck>,
        kicks_at: Vec<usize>,
        potential: RatchetPotential,
        mode: ScanMode,
        kick_phase: f64,
    ) -> Result<Self> {
        if hbar_values.is_empty() {
            return Err(RatchetError::invalid("hbar_values", "scan is empty"));
        }
        if hbar_values.windows(2).any(|w| w[1].value() <= w[0].value()) {
            return Err(RatchetError::invalid("hbar_values", "must be strictly increasing"));
        }
        if kicks_at.is_empty() || kicks_at.contains(&0) {
            return Err(RatchetError::invalid("kicks_at", "need one or more kick counts >= 1"));
        }
        if !(kick_phase.is_finite() && kick_phase >= 0.0) {
            return Err(RatchetError::invalid("kick_phase", "must be finite and >= 0"));
        }
        Ok(Self {
            hbar_values,
            kicks_at,
            potential,
            mode,
            kick_phase,
            initial: InitialCondition::default(),
            base_grid: SpatialGrid::default(),
        })
    }

    /// `0.02 pi, 0.04 pi, ..., 2 pi` with the laboratory potential, after 21
    /// and 5 kicks.
    pub fn standard() -> Self {
        Self::new(
            linear_hbar_grid(0.02 * PI, 2.0 * PI, 0.02 * PI).expect("valid grid"),
            vec![21, 5],
            RatchetPotential::experimental(),
            ScanMode::FixedStrength,
            1.0 / (0.5 * PI),
        )
        .expect("valid scan")
    }
}

/// `from, from + step, ...` up to `to` (inclusive within half a step).
pub fn linear_hbar_grid(from: f64, to: f64, step: f64) -> Result<Vec<EffectivePlanck>> {
    if !(from > 0.0 && step > 0.0 && to >= from && to.is_finite()) {
        return Err(RatchetError::invalid("scan", "need 0 < from <= to and step > 0"));
    }
    let count = ((to - from) / step + 0.5).floor() as usize + 1;
    (0..count).map(|i| EffectivePlanck::new(from + i as f64 * step)).collect()
}

/// Mean momentum at one scan point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub hbar: f64,
    pub kicks: usize,
    pub mode: ScanMode,
    pub mean_p: f64,
}

fn scan_column(spec: &ScanSpec, mode: ScanMode, hbar: EffectivePlanck) -> Result<Vec<ScanPoint>> {
    let pot = match mode {
        ScanMode::FixedKickPhase => spec.potential.with_strength(spec.kick_phase * hbar.value())?,
        _ => spec.potential,
    };
    let last = *spec.kicks_at.iter().max().expect("non-empty");
    let traj = quantum_trajectory(&pot, hbar, last, spec.initial, spec.base_grid)?;
    Ok(spec
        .kicks_at
        .iter()
        .map(|&k| ScanPoint {
            hbar: hbar.value(),
            kicks: k,
            mode,
            mean_p: traj.stats[k - 1].mean_p,
        })
        .collect())
}

/// Builds the scan thread pool, honouring [`THREADS_ENV`].
pub fn scan_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| RatchetError::invalid("RATCHET_LAB_THREADS", format!("expected a count, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RatchetError::invalid("RATCHET_LAB_THREADS", e.to_string()))
}

/// Final mean momentum over the scan grid, sorted by mode, `hbar` and kick
/// count.
pub fn run_fig4(spec: &ScanSpec) -> Result<Vec<ScanPoint>> {
    let jobs: Vec<(ScanMode, EffectivePlanck)> = spec
        .mode
        .single_modes()
        .into_iter()
        .flat_map(|m| spec.hbar_values.iter().map(move |&h| (m, h)))
        .collect();
    let pool = scan_pool()?;
    let columns: Vec<Result<Vec<ScanPoint>>> =
        pool.install(|| jobs.par_iter().map(|&(m, h)| scan_column(spec, m, h)).collect());
    let mut points = Vec::with_capacity(jobs.len() * spec.kicks_at.len());
    for c in columns {
        points.extend(c?);
    }
    points.sort_by(|a, b| {
        (a.mode as u8, a.kicks)
            .cmp(&(b.mode as u8, b.kicks))
            .then(a.hbar.total_cmp(&b.hbar))
    });
    Ok(points)
}

/// `hbar` values where `|<p>|` exceeds both neighbours on the scan grid
/// (only the inner neighbour at either end).
pub fn local_maxima(points: &[ScanPoint], kicks: usize, mode: ScanMode) -> Vec<f64> {
    let series: Vec<&ScanPoint> = points.iter().filter(|p| p.kicks == kicks && p.mode == mode).collect();
    let v: Vec<f64> = series.iter().map(|p| p.mean_p.abs()).collect();
    let n = v.len();
    (0..n)
        .filter(|&i| {
            let left = i == 0 || v[i] > v[i - 1];
            let right = i + 1 == n || v[i] >= v[i + 1];
            n > 1 && left && right
        })
        .map(|i| series[i].hbar)
        .collect()
}

/// Scan value of `|<p>|` nearest to `hbar`.
pub fn scan_value_at(points: &[ScanPoint], kicks: usize, mode: ScanMode, hbar: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.kicks == kicks && p.mode == mode)
        .min_by(|a, b| (a.hbar - hbar).abs().total_cmp(&(b.hbar - hbar).abs()))
        .map(|p| p.mean_p.abs())
}

pub fn write_fig4<W: Write>(mut out: W, spec: &ScanSpec, points: &[ScanPoint]) -> Result<()> {
    for mode in spec.mode.single_modes() {
        for &k in &spec.kicks_at {
            let peaks: Vec<String> = local_maxima(points, k, mode)
                .iter()
                .map(|h| format!("{:.4}pi", h / PI))
                .collect();
            writeln!(out, "# local_maxima mode={mode} kicks={k}: {}", peaks.join(" "))?;
        }
    }
    writeln!(out, "hbar,hbar_over_pi,kicks,mode,mean_p,abs_mean_p")?;
    for p in points {
        writeln!(
            out,
            "{:.15e},{:.12},{},{},{:.12e},{:.12e}",
            p.hbar,
            p.hbar / PI,
            p.kicks,
            p.mode,
            p.mean_p,
            p.mean_p.abs()
        )?;
    }
    Ok(())
}

/// One line of the engine comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    /// `engine` for quantum vs optical, `quantization` for quantized vs
    /// continuous optical runs at the final kick.
    pub section: &'static str,
    pub hbar: f64,
    pub mirror: Levels,
    pub kick: usize,
    pub tv: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    /// Largest per-kick L-infinity distance between the engines for `mirror`
    /// at `hbar`.
    pub fn max_linf(&self, hbar: f64, mirror: Levels) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.section == "engine" && r.mirror == mirror && (r.hbar - hbar).abs() < 1e-12)
            .map(|r| r.linf)
            .fold(0.0, f64::max)
    }

    /// Final-kick TV distance from the continuous mirror, per level count.
    pub fn quantization_tv(&self, hbar: f64) -> Vec<(u32, f64)> {
        self.rows
            .iter()
            .filter(|r| r.section == "quantization" && (r.hbar - hbar).abs() < 1e-12)
            .filter_map(|r| match r.mirror {
                Levels::Discrete(n) => Some((n, r.tv)),
                Levels::Continuous => None,
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "section,hbar,mirror,kick,tv,linf")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.15e},{},{},{:.12e},{:.12e}",
                r.section, r.hbar, r.mirror, r.kick, r.tv, r.linf
            )?;
        }
        Ok(())
    }
}

fn input_distribution(input: &BeamField, geom: &OpticalGeometry, periods: usize) -> Result<MomentumLadder> {
    let ff = far_field(input, geom.focal_m())?;
    let image = FarFieldImage {
        rows: vec![ff.intensity],
        pixel_pitch_m: ff.pixel_pitch_m,
        pixels_per_order: periods,
        centre: ff.centre,
        normalization: RowNormalization::PerRow,
        hbar: geom.hbar(),
    };
    Ok(image.order_distribution(0))
}

/// Quantum plane-wave run against bounce runs with the continuous and the
/// 16-level mirror, plus final-kick distances of every quantized mirror in
/// [`QUANTIZATION_SWEEP`] from the continuous one.
pub fn compare_engines(
    geom: &OpticalGeometry,
    pot: &RatchetPotential,
    setup: &OpticalSetup,
    n_kicks: usize,
    base: SpatialGrid,
) -> Result<CompareReport> {
    let hbar = geom.hbar();
    // optical orders are whole orders of one mirror period
    let base = SpatialGrid::new(1, base.points_per_period())?;
    let traj = quantum_trajectory(pot, hbar, n_kicks, InitialCondition::default(), base)?;
    let grid = grid_for(pot, hbar, n_kicks, base)?;
    let quantum_start = momentum_spectrum(&WaveState::plane_wave(grid, 0, 0.0)?, hbar);
    let optical_start = input_distribution(&setup.input(geom)?, geom, setup.window_periods)?;

    let mut rows = Vec::new();
    let continuous = optical_trajectory(geom, pot, Levels::Continuous, setup, n_kicks)?;
    for levels in [Levels::Continuous, Levels::Discrete(16)] {
        let image = if levels == Levels::Continuous {
            continuous.clone()
        } else {
            optical_trajectory(geom, pot, levels, setup, n_kicks)?
        };
        rows.push(CompareRow {
            section: "engine",
            hbar: hbar.value(),
            mirror: levels,
            kick: 0,
            tv: distribution_distance(&quantum_start, &optical_start)?,
            linf: max_abs_difference(&quantum_start, &optical_start)?,
        });
        for (k, q) in traj.ladders.iter().enumerate() {
            let o = image.order_distribution(k);
            rows.push(CompareRow {
                section: "engine",
                hbar: hbar.value(),
                mirror: levels,
                kick: k + 1,
                tv: distribution_distance(q, &o)?,
                linf: max_abs_difference(q, &o)?,
            });
        }
    }

    let reference = continuous.order_distribution(n_kicks - 1);
    for n in QUANTIZATION_SWEEP {
        let image = optical_trajectory(geom, pot, Levels::Discrete(n), setup, n_kicks)?;
        let d = image.order_distribution(n_kicks - 1);
        rows.push(CompareRow {
            section: "quantization",
            hbar: hbar.value(),
            mirror: Levels::Discrete(n),
            kick: n_kicks,
            tv: distribution_distance(&d, &reference)?,
            linf: max_abs_difference(&d, &reference)?,
        });
    }
    Ok(CompareReport { rows })
}

/// Comparison at both figure values of `hbar`.
pub fn compare_figure_values(cfg: &RunConfig) -> Result<CompareReport> {
    let mut rows = Vec::new();
    for &(_, multiple) in &FIG2_PANELS {
        let geom = cfg.geometry_for(EffectivePlanck::pi_multiple(multiple)?)?;
        let report = compare_engines(
            &geom,
            &cfg.potential,
            &cfg.comparison,
            cfg.n_kicks,
            cfg.grid,
        )?;
        rows.extend(report.rows);
    }
    Ok(CompareReport { rows })
}

/// What a `figs` run produced.
#[derive(Debug, Clone)]
pub struct FigsSummary {
    pub fig3: Fig3Output,
    pub scan: Vec<ScanPoint>,
    pub compare: CompareReport,
    pub files: Vec<String>,
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut f = BufWriter::new(File::create(dir.join(name))?);
    body(&mut f)?;
    f.flush()?;
    Ok(())
}

/// Runs every figure driver and the engine comparison into `dir`.
pub fn run_figs(cfg: &RunConfig, dir: &Path) -> Result<FigsSummary> {
    fs::create_dir_all(dir)?;
    let panels = run_fig2(cfg)?;
    write_fig2(dir, &panels, cfg.gamma)?;

    let fig3 = run_fig3(cfg)?;
    write_fig3(dir, cfg, &fig3)?;

    let spec = cfg.scan_spec()?;
    let scan = run_fig4(&spec)?;
    write_file(dir, "fig4_scan.csv", |f| write_fig4(f, &spec, &scan))?;

    let compare = compare_figure_values(cfg)?;
    write_file(dir, "compare_engines.csv", |f| compare.write_csv(f))?;

    write_file(dir, "run_manifest", |f| {
        f.write_all(cfg.manifest().as_bytes())?;
        Ok(())
    })?;

    let mut files: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    Ok(FigsSummary {
        fig3,
        scan,
        compare,
        files,
    })
}
