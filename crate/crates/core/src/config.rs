//! Flat `key=value` run configuration.
//!
//! Lines hold one `key=value` pair; `#` starts a comment. Floating-point
//! values accept a `pi` suffix (`0.5pi`, `pi`, `-2pi`). Command-line
//! overrides are applied after the file. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{ConfigError, RatchetError};
use crate::evolution::SpatialGrid;
use crate::experiments::{InitialCondition, OpticalSetup, ScanMode, ScanSpec, linear_hbar_grid};
use crate::model::{EffectivePlanck, Levels, RatchetPotential};
use crate::optics::{OpticalGeometry, RowNormalization, distance_for_hbar};

/// Every accepted key, in manifest order.
pub const KEYS: &[&str] = &[
    "engine",
    "K",
    "alpha",
    "phi",
    "hbar",
    "distance",
    "lambda",
    "period",
    "focal",
    "reflectivity",
    "periods",
    "points_per_period",
    "beta",
    "beta_ensemble",
    "beam_width",
    "window_periods",
    "samples_per_period",
    "compare_beam_width",
    "compare_window_periods",
    "compare_samples_per_period",
    "n_kicks",
    "n_levels",
    "normalization",
    "gamma",
    "scan_from",
    "scan_to",
    "scan_step",
    "kicks_at",
    "scan_mode",
    "kick_phase",
    "out",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Quantum,
    Optical,
    Both,
}

impl Engine {
    pub fn quantum(self) -> bool {
        matches!(self, Engine::Quantum | Engine::Both)
    }

    pub fn optical(self) -> bool {
        matches!(self, Engine::Optical | Engine::Both)
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Quantum => "quantum",
            Engine::Optical => "optical",
            Engine::Both => "both",
        })
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "quantum" => Ok(Engine::Quantum),
            "optical" => Ok(Engine::Optical),
            "both" => Ok(Engine::Both),
            other => Err(format!("expected quantum, optical or both, got `{other}`")),
        }
    }
}

/// Where the effective Planck constant came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HbarSource {
    /// `hbar` given directly; the gap is derived.
    Given,
    /// `distance` given (meters); `hbar` is derived from the geometry.
    Distance(f64),
    /// Neither given; the laboratory value `0.5 pi` is used.
    Default,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub engine: Engine,
    pub potential: RatchetPotential,
    pub hbar: EffectivePlanck,
    pub hbar_source: HbarSource,
    pub lambda: f64,
    pub period_m: f64,
    pub focal_m: f64,
    pub reflectivity: f64,
    pub grid: SpatialGrid,
    pub initial: InitialCondition,
    pub optical: OpticalSetup,
    pub comparison: OpticalSetup,
    pub n_kicks: usize,
    pub n_levels: Levels,
    pub gamma: f64,
    pub scan_from: f64,
    pub scan_to: f64,
    pub scan_step: f64,
    pub kicks_at: Vec<usize>,
    pub scan_mode: ScanMode,
    pub kick_phase: f64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            engine: Engine::Both,
            potential: RatchetPotential::experimental(),
            hbar: EffectivePlanck::pi_multiple(0.5).expect("positive"),
            hbar_source: HbarSource::Default,
            lambda: OpticalGeometry::LAMBDA_M,
            period_m: OpticalGeometry::PERIOD_M,
            focal_m: OpticalGeometry::FOCAL_M,
            reflectivity: OpticalGeometry::REFLECTIVITY,
            grid: SpatialGrid::default(),
            initial: InitialCondition::default(),
            optical: OpticalSetup::figure(),
            comparison: OpticalSetup::comparison(),
            n_kicks: 22,
            n_levels: Levels::Continuous,
            gamma: 1.0,
            scan_from: 0.02 * PI,
            scan_to: 2.0 * PI,
            scan_step: 0.02 * PI,
            kicks_at: vec![21, 5],
            scan_mode: ScanMode::FixedStrength,
            kick_phase: 1.0 / (0.5 * PI),
            out: None,
        }
    }
}

impl RunConfig {
    /// Geometry with the configured optics and the gap that realizes `hbar`.
    pub fn geometry_for(&self, hbar: EffectivePlanck) -> crate::error::Result<OpticalGeometry> {
        OpticalGeometry::new(
            self.lambda,
            self.period_m,
            distance_for_hbar(hbar, self.lambda, self.period_m),
            self.focal_m,
            self.reflectivity,
        )
    }

    pub fn geometry(&self) -> crate::error::Result<OpticalGeometry> {
        OpticalGeometry::new(self.lambda, self.period_m, self.distance_m(), self.focal_m, self.reflectivity)
    }

    pub fn distance_m(&self) -> f64 {
        match self.hbar_source {
            HbarSource::Distance(d) => d,
            _ => distance_for_hbar(self.hbar, self.lambda, self.period_m),
        }
    }

    pub fn scan_spec(&self) -> crate::error::Result<ScanSpec> {
        let mut spec = ScanSpec::new(
            linear_hbar_grid(self.scan_from, self.scan_to, self.scan_step)?,
            self.kicks_at.clone(),
            self.potential,
            self.scan_mode,
            self.kick_phase,
        )?;
        spec.initial = self.initial;
        spec.base_grid = self.grid;
        Ok(spec)
    }

    /// Physical parameters shared by every run, for CSV headers.
    pub fn summary(&self) -> Vec<(&'static str, String)> {
        vec![
            ("K", self.potential.strength().to_string()),
            ("alpha", self.potential.harmonic_weight().to_string()),
            ("phi", self.potential.phase().to_string()),
            ("beta", self.initial.beta.to_string()),
            ("beta_ensemble", self.initial.ensemble.to_string()),
            ("periods", self.grid.periods().to_string()),
            ("points_per_period", self.grid.points_per_period().to_string()),
            ("n_kicks", self.n_kicks.to_string()),
        ]
    }

    fn value_of(&self, key: &str) -> Option<String> {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        Some(match key {
            "engine" => self.engine.to_string(),
            "K" => self.potential.strength().to_string(),
            "alpha" => self.potential.harmonic_weight().to_string(),
            "phi" => self.potential.phase().to_string(),
            "hbar" if self.hbar_source == HbarSource::Given => self.hbar.value().to_string(),
            "distance" if matches!(self.hbar_source, HbarSource::Distance(_)) => self.distance_m().to_string(),
            "hbar" | "distance" => return None,
            "lambda" => self.lambda.to_string(),
            "period" => self.period_m.to_string(),
            "focal" => self.focal_m.to_string(),
            "reflectivity" => self.reflectivity.to_string(),
            "periods" => self.grid.periods().to_string(),
            "points_per_period" => self.grid.points_per_period().to_string(),
            "beta" => self.initial.beta.to_string(),
            "beta_ensemble" => self.initial.ensemble.to_string(),
            "beam_width" => self.optical.beam_width_m.to_string(),
            "window_periods" => self.optical.window_periods.to_string(),
            "samples_per_period" => self.optical.samples_per_period.to_string(),
            "compare_beam_width" => self.comparison.beam_width_m.to_string(),
            "compare_window_periods" => self.comparison.window_periods.to_string(),
            "compare_samples_per_period" => self.comparison.samples_per_period.to_string(),
            "n_kicks" => self.n_kicks.to_string(),
            "n_levels" => self.n_levels.to_string(),
            "normalization" => self.optical.normalization.to_string(),
            "gamma" => self.gamma.to_string(),
            "scan_from" => self.scan_from.to_string(),
            "scan_to" => self.scan_to.to_string(),
            "scan_step" => self.scan_step.to_string(),
            "kicks_at" => join(&self.kicks_at),
            "scan_mode" => self.scan_mode.to_string(),
            "kick_phase" => self.kick_phase.to_string(),
            "out" => self.out.as_ref()?.display().to_string(),
            _ => return None,
        })
    }

    /// Flat `key=value` dump that [`parse_config`] reads back to an equal
    /// config. Derived quantities follow as comments.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            if let Some(v) = self.value_of(key) {
                let _ = writeln!(s, "{key}={v}");
            }
        }
        let _ = writeln!(s, "# derived hbar={}", self.hbar.value());
        let _ = writeln!(s, "# derived hbar_over_pi={}", self.hbar.value() / PI);
        let _ = writeln!(s, "# derived distance={}", self.distance_m());
        let _ = writeln!(s, "# derived order_spacing={}", self.lambda * self.focal_m / self.period_m);
        s
    }
}

/// Parses a float, accepting a trailing `pi` factor.
pub fn parse_real(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let value = match t.strip_suffix("pi") {
        Some("") => PI,
        Some("-") => -PI,
        Some(m) => m.trim().parse::<f64>().map_err(|e| e.to_string())? * PI,
        None => t.parse::<f64>().map_err(|e| e.to_string())?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{t}` is not finite"))
    }
}

/// Splits `key=value` lines into a map, rejecting unknown keys.
fn collect_pairs(text: &str, into: &mut BTreeMap<String, String>) -> Result<(), ConfigError> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Malformed(i + 1))?;
        insert_pair(into, k.trim(), v.trim())?;
    }
    Ok(())
}

fn insert_pair(into: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<(), ConfigError> {
    if !KEYS.contains(&key) {
        return Err(ConfigError::UnknownKey(key.to_string()));
    }
    into.insert(key.to_string(), value.to_string());
    Ok(())
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn bad(key: &str, reason: impl fmt::Display) -> ConfigError {
        ConfigError::InvalidValue {
            key: key.to_string(),
            reason: reason.to_string(),
        }
    }

    fn real(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.0.get(key) {
            Some(v) => parse_real(v).map_err(|e| Self::bad(key, e)),
            None => Ok(default),
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.real(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Self::bad(key, format!("must be > 0, got {v}")))
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.0.get(key) {
            Some(v) => v.parse::<usize>().map_err(|e| Self::bad(key, e)),
            None => Ok(default),
        }
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.0.get(key) {
            Some(v) => v.parse::<T>().map_err(|e| Self::bad(key, e)),
            None => Ok(default),
        }
    }
}

fn keyed(key: &str) -> impl Fn(RatchetError) -> ConfigError + '_ {
    move |e| match e {
        RatchetError::InvalidParameter { reason, .. } => Values::bad(key, reason),
        other => Values::bad(key, other),
    }
}

/// Builds a validated config from file text plus `(key, value)` overrides.
///
/// With `require_hbar`, one of `hbar` or `distance` must be present.
pub fn parse_config(text: &str, overrides: &[(String, String)], require_hbar: bool) -> Result<RunConfig, ConfigError> {
    let mut map = BTreeMap::new();
    collect_pairs(text, &mut map)?;
    for (k, v) in overrides {
        insert_pair(&mut map, k, v)?;
    }
    let v = Values(map);
    let d = RunConfig::default();

    let engine = v.parsed("engine", d.engine)?;
    let strength = v.real("K", d.potential.strength())?;
    if strength < 0.0 {
        return Err(Values::bad("K", "must be >= 0"));
    }
    let potential = RatchetPotential::new(
        strength,
        v.real("alpha", d.potential.harmonic_weight())?,
        v.real("phi", d.potential.phase())?,
    )
    .map_err(keyed("K"))?;

    let lambda = v.positive("lambda", d.lambda)?;
    let period_m = v.positive("period", d.period_m)?;
    let focal_m = v.positive("focal", d.focal_m)?;
    let reflectivity = v.real("reflectivity", d.reflectivity)?;
    if !(reflectivity > 0.0 && reflectivity <= 1.0) {
        return Err(Values::bad("reflectivity", format!("must lie in (0, 1], got {reflectivity}")));
    }

    let (hbar, hbar_source) = match (v.0.contains_key("hbar"), v.0.contains_key("distance")) {
        (true, true) => return Err(ConfigError::ConflictingHbar),
        (true, false) => (
            EffectivePlanck::new(v.positive("hbar", 0.0)?).map_err(keyed("hbar"))?,
            HbarSource::Given,
        ),
        (false, true) => {
            let distance = v.positive("distance", 0.0)?;
            let geom = OpticalGeometry::new(lambda, period_m, distance, focal_m, reflectivity).map_err(keyed("distance"))?;
            (geom.hbar(), HbarSource::Distance(distance))
        }
        (false, false) if require_hbar => return Err(ConfigError::MissingKey("hbar".into())),
        (false, false) => (d.hbar, HbarSource::Default),
    };

    let grid = SpatialGrid::new(
        v.count("periods", d.grid.periods())?,
        v.count("points_per_period", d.grid.points_per_period())?,
    )
    .map_err(|e| match &e {
        RatchetError::InvalidParameter { name, .. } if *name == "periods" => keyed("periods")(e),
        _ => keyed("points_per_period")(e),
    })?;

    let beta = v.real("beta", d.initial.beta)?;
    if !(0.0..1.0).contains(&beta) {
        return Err(Values::bad("beta", format!("must lie in [0, 1), got {beta}")));
    }
    let initial = InitialCondition {
        beta,
        ensemble: v.count("beta_ensemble", d.initial.ensemble)?,
    };

    let normalization: RowNormalization = v.parsed("normalization", d.optical.normalization)?;
    let optical = OpticalSetup {
        beam_width_m: v.positive("beam_width", d.optical.beam_width_m)?,
        window_periods: v.count("window_periods", d.optical.window_periods)?,
        samples_per_period: v.count("samples_per_period", d.optical.samples_per_period)?,
        normalization,
    };
    let comparison = OpticalSetup {
        beam_width_m: v.positive("compare_beam_width", d.comparison.beam_width_m)?,
        window_periods: v.count("compare_window_periods", d.comparison.window_periods)?,
        samples_per_period: v.count("compare_samples_per_period", d.comparison.samples_per_period)?,
        normalization: RowNormalization::PerRow,
    };
    for (key, setup) in [("window_periods", &optical), ("compare_window_periods", &comparison)] {
        if setup.window_periods < crate::optics::MIN_WINDOW_PERIODS {
            return Err(Values::bad(
                key,
                format!("need at least {} periods", crate::optics::MIN_WINDOW_PERIODS),
            ));
        }
    }
    for (key, setup) in [("samples_per_period", &optical), ("compare_samples_per_period", &comparison)] {
        if setup.samples_per_period < crate::optics::MIN_SAMPLES_PER_PERIOD {
            return Err(Values::bad(
                key,
                format!("need at least {} samples", crate::optics::MIN_SAMPLES_PER_PERIOD),
            ));
        }
    }

    let n_kicks = v.count("n_kicks", d.n_kicks)?;
    if n_kicks == 0 {
        return Err(Values::bad("n_kicks", "must be >= 1"));
    }
    let n_levels: Levels = v.parsed("n_levels", d.n_levels)?;
    let gamma = v.positive("gamma", d.gamma)?;

    let scan_from = v.positive("scan_from", d.scan_from)?;
    let scan_to = v.positive("scan_to", d.scan_to)?;
    let scan_step = v.positive("scan_step", d.scan_step)?;
    if scan_to < scan_from {
        return Err(Values::bad("scan_to", "must be >= scan_from"));
    }
    let kicks_at = match v.0.get("kicks_at") {
        Some(text) => text
            .split(',')
            .map(|k| k.trim().parse::<usize>().map_err(|e| Values::bad("kicks_at", e)))
            .collect::<Result<Vec<_>, _>>()?,
        None => d.kicks_at.clone(),
    };
    if kicks_at.is_empty() || kicks_at.contains(&0) {
        return Err(Values::bad("kicks_at", "need kick counts >= 1"));
    }
    let scan_mode: ScanMode = v.parsed("scan_mode", d.scan_mode)?;
    let kick_phase = v.real("kick_phase", d.kick_phase)?;
    if kick_phase < 0.0 {
        return Err(Values::bad("kick_phase", "must be >= 0"));
    }
    let out = v.0.get("out").map(PathBuf::from);

    Ok(RunConfig {
        engine,
        potential,
        hbar,
        hbar_source,
        lambda,
        period_m,
        focal_m,
        reflectivity,
        grid,
        initial,
        optical,
        comparison,
        n_kicks,
        n_levels,
        gamma,
        scan_from,
        scan_to,
        scan_step,
        kicks_at,
        scan_mode,
        kick_phase,
        out,
    })
}
