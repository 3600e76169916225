use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ratchet_core::evolution::{KickedRunParams, SpectrumRecord, WaveState, evolve};
use ratchet_core::experiments::{
    FIGURE_MAX_ORDER, compare_engines, grid_for, optical_trajectory, quantum_trajectory, ratchet_mirror, run_fig4,
    run_figs, write_fig4,
};
use ratchet_core::observables::{StepStats, write_stats_csv};
use ratchet_core::optics::render_ccd;
use ratchet_core::{ConfigError, RatchetError, RunConfig, parse_config};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Simulates the kicked quantum ratchet and its optical realization.
///
/// Any `--key=value` flag other than `--config` and `--out` overrides the
/// matching key of the configuration file.
#[derive(Parser, Debug)]
#[command(name = "ratchet-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key=value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq)]
enum Command {
    /// Quantum split-step run: per-kick spectra and moments.
    Evolve,
    /// Bounce simulation: far-field image and order distributions.
    Optical,
    /// Mean-momentum scan over hbar.
    Scan,
    /// Writes the mirror depth profile.
    Mirror,
    /// Quantum vs optical distances and the quantization sweep.
    Compare,
    /// Every figure reproduction plus the engine comparison.
    Figs,
}

impl Command {
    fn needs_hbar(self) -> bool {
        !matches!(self, Command::Scan | Command::Figs)
    }
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RatchetError> for Failure {
    fn from(e: RatchetError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else if e.is_configuration() {
            Failure::Config(e.to_string())
        } else {
            Failure::Io(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Splits `--key=value` overrides from the arguments clap understands.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        match arg.strip_prefix("--").and_then(|a| a.split_once('=')) {
            Some((key, value)) if key != "config" && key != "out" => {
                overrides.push((key.to_string(), value.to_string()));
            }
            _ => rest.push(arg),
        }
    }
    (rest, overrides)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>) -> Result<(), Failure> {
    w.flush()?;
    Ok(())
}

fn write_manifest(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let mut f = create(dir, "run_manifest")?;
    f.write_all(cfg.manifest().as_bytes())?;
    finish(f)
}

fn run_evolve(cfg: &RunConfig, dir: &Path) -> Result<(), Failure> {
    let params = KickedRunParams::new(cfg.potential, cfg.hbar, cfg.n_kicks)?;
    let grid = grid_for(&cfg.potential, cfg.hbar, cfg.n_kicks, cfg.grid)?;
    let mut spectra = create(dir, "spectra.ndjson")?;
    for beta in cfg.initial.betas() {
        let mut failed = None;
        evolve(WaveState::plane_wave(grid, 0, beta)?, &params, |kick, ladder| {
            if failed.is_none() {
                failed = SpectrumRecord::new(kick, ladder).write_line(&mut spectra).err();
            }
        })?;
        if let Some(e) = failed {
            return Err(e.into());
        }
    }
    finish(spectra)?;

    let traj = quantum_trajectory(&cfg.potential, cfg.hbar, cfg.n_kicks, cfg.initial, cfg.grid)?;
    let mut header = cfg.summary();
    header.push(("hbar", cfg.hbar.value().to_string()));
    let mut stats = create(dir, "stats.csv")?;
    write_stats_csv(&mut stats, &header, &traj.stats)?;
    finish(stats)
}

fn run_optical(cfg: &RunConfig, dir: &Path) -> Result<(), Failure> {
    let geom = cfg.geometry()?;
    let image = optical_trajectory(&geom, &cfg.potential, cfg.n_levels, &cfg.optical, cfg.n_kicks)?;

    let raster = render_ccd(&image.cropped(FIGURE_MAX_ORDER as usize), cfg.gamma)?;
    let mut pgm = create(dir, "optical.pgm")?;
    raster.write_pgm(&mut pgm)?;
    finish(pgm)?;

    let mut csv = create(dir, "optical.csv")?;
    image.write_order_csv(&mut csv, FIGURE_MAX_ORDER)?;
    finish(csv)?;

    let stats: Vec<StepStats> = (0..image.n_kicks())
        .map(|r| StepStats::from_ladder(r + 1, &image.order_distribution(r)))
        .collect();
    let mut header = cfg.summary();
    header.push(("hbar", geom.hbar().value().to_string()));
    header.push(("distance", geom.distance_m().to_string()));
    header.push(("n_levels", cfg.n_levels.to_string()));
    let mut f = create(dir, "optical_stats.csv")?;
    write_stats_csv(&mut f, &header, &stats)?;
    finish(f)
}

fn run_scan(cfg: &RunConfig, dir: &Path) -> Result<(), Failure> {
    let spec = cfg.scan_spec()?;
    let points = run_fig4(&spec)?;
    let mut f = create(dir, "fig4_scan.csv")?;
    write_fig4(&mut f, &spec, &points)?;
    finish(f)
}

fn run_mirror(cfg: &RunConfig, dir: &Path) -> Result<(), Failure> {
    let geom = cfg.geometry()?;
    let mirror = ratchet_mirror(&geom, &cfg.potential, cfg.n_levels, cfg.optical.samples_per_period)?;
    let mut f = create(dir, "mirror_profile.txt")?;
    mirror.write_text(&mut f)?;
    finish(f)
}

fn run_compare(cfg: &RunConfig, dir: &Path) -> Result<(), Failure> {
    let geom = cfg.geometry()?;
    let report = compare_engines(&geom, &cfg.potential, &cfg.comparison, cfg.n_kicks, cfg.grid)?;
    let mut f = create(dir, "compare_engines.csv")?;
    report.write_csv(&mut f)?;
    finish(f)
}

fn run(cli: Cli, overrides: Vec<(String, String)>) -> Result<(), Failure> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut overrides = overrides;
    if let Some(out) = &cli.out {
        overrides.push(("out".into(), out.display().to_string()));
    }
    let cfg = parse_config(&text, &overrides, cli.command.needs_hbar())?;
    let dir = cfg.out.clone().ok_or_else(|| ConfigError::MissingKey("out".into()))?;
    fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;

    match cli.command {
        Command::Evolve => run_evolve(&cfg, &dir)?,
        Command::Optical => run_optical(&cfg, &dir)?,
        Command::Scan => run_scan(&cfg, &dir)?,
        Command::Mirror => run_mirror(&cfg, &dir)?,
        Command::Compare => run_compare(&cfg, &dir)?,
        Command::Figs => {
            run_figs(&cfg, &dir)?;
            return Ok(());
        }
    }
    write_manifest(&dir, &cfg)
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("ratchet-lab: configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("ratchet-lab: numerical failure: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("ratchet-lab: {msg}");
            ExitCode::from(EXIT_IO)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(args: &[&str]) -> Vec<String> {
        args.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_are_split_from_flags() {
        let (rest, over) = split_overrides(strings(&[
            "ratchet-lab",
            "evolve",
            "--hbar=0.5pi",
            "--out=x",
            "--config",
            "c.txt",
            "--n_kicks=3",
        ]));
        assert_eq!(rest, strings(&["ratchet-lab", "evolve", "--out=x", "--config", "c.txt"]));
        assert_eq!(
            over,
            vec![("hbar".to_string(), "0.5pi".to_string()), ("n_kicks".to_string(), "3".to_string())]
        );
    }

    #[test]
    fn hbar_required_for_single_runs() {
        assert!(Command::Evolve.needs_hbar());
        assert!(Command::Compare.needs_hbar());
        assert!(!Command::Figs.needs_hbar());
        assert!(!Command::Scan.needs_hbar());
    }

    #[test]
    fn failures_map_to_exit_classes() {
        let drift = RatchetError::NormDrift { kick: 3, drift: 1e-6, limit: 1e-10 };
        assert!(matches!(Failure::from(drift), Failure::Numerical(_)));
        let bad = RatchetError::from(ConfigError::MissingKey("hbar".into()));
        assert!(matches!(Failure::from(bad), Failure::Config(_)));
        let io = RatchetError::from(std::io::Error::other("disk"));
        assert!(matches!(Failure::from(io), Failure::Io(_)));
    }
}
