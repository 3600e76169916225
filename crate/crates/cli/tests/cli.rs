use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratchet-lab"))
        .args(args)
        .env("RATCHET_LAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn out_arg(dir: &Path) -> String {
    format!("--out={}", dir.display())
}

#[test]
fn figs_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["figs", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in [
        "fig2_a.pgm",
        "fig2_a.csv",
        "fig2_b.pgm",
        "fig2_b.csv",
        "fig3_stats_res.csv",
        "fig3_stats_offres.csv",
        "fig3_fits.csv",
        "fig4_scan.csv",
        "compare_engines.csv",
        "run_manifest",
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let pgm = fs::read(dir.path().join("fig2_a.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
    let header = fs::read_to_string(dir.path().join("fig4_scan.csv")).unwrap();
    assert!(header.lines().any(|l| l == "hbar,hbar_over_pi,kicks,mode,mean_p,abs_mean_p"));
}

#[test]
fn bad_flag_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["evolve", "--frobnicate", "--hbar=0.5pi", &out_arg(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["evolve", "--hbar=0.5pi", "--kicks=3", &out_arg(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("kicks"));
    assert_eq!(stderr(&out).lines().count(), 1);
}

#[test]
fn unknown_subcommand_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&lab(&["plot", &out_arg(dir.path())])), 2);
}

#[test]
fn absurd_grid_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("run");
    let out = lab(&["evolve", "--hbar=0.5pi", "--points_per_period=2", &out_arg(&target)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("points_per_period"));
    assert!(!target.exists());
}

#[test]
fn conflicting_hbar_sources() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["mirror", "--hbar=0.5pi", "--distance=0.169172", &out_arg(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("exactly one of"));
}

#[test]
fn single_runs_need_hbar() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["evolve", &out_arg(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("hbar"));
}

#[test]
fn missing_output_directory() {
    let out = lab(&["evolve", "--hbar=0.5pi"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("out"));
}

#[test]
fn evolve_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# resonant run\nhbar=0.5pi\nn_kicks=5\n").unwrap();
    let target = dir.path().join("evolve");
    let out = lab(&["evolve", "--config", cfg.to_str().unwrap(), "--n_kicks=4", &out_arg(&target)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let spectra = fs::read_to_string(target.join("spectra.ndjson")).unwrap();
    assert_eq!(spectra.lines().count(), 4);
    assert!(spectra.lines().all(|l| l.starts_with("{\"kick\":")));

    let stats = fs::read_to_string(target.join("stats.csv")).unwrap();
    let rows: Vec<&str> = stats.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "kick,mean_p,mean_p2,participation");
    assert_eq!(rows.len(), 5);

    let manifest = fs::read_to_string(target.join("run_manifest")).unwrap();
    assert!(manifest.lines().any(|l| l == "n_kicks=4"));
}

#[test]
fn optical_mirror_and_compare_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--hbar=0.5pi", "--n_kicks=3"];

    let target = dir.path().join("optical");
    let mut args = vec!["optical", "--n_levels=16"];
    args.extend(base);
    let flag = out_arg(&target);
    args.push(&flag);
    let out = lab(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let pgm = fs::read(target.join("optical.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
    assert!(target.join("optical.csv").is_file());

    let target = dir.path().join("mirror");
    let flag = out_arg(&target);
    let out = lab(&["mirror", "--hbar=0.5pi", "--n_levels=4", &flag]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(target.join("mirror_profile.txt")).unwrap();
    assert!(text.starts_with("# period_m="));
    assert!(text.lines().next().unwrap().ends_with("n_levels=4"));

    let target = dir.path().join("compare");
    let flag = out_arg(&target);
    let out = lab(&["compare", "--distance=0.169172", "--n_kicks=3", &flag]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(target.join("compare_engines.csv")).unwrap();
    assert!(csv.starts_with("section,hbar,mirror,kick,tv,linf\n"));
    assert!(csv.lines().any(|l| l.starts_with("quantization,") && l.contains(",16,")));
}

#[test]
fn scan_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&[
        "scan",
        "--scan_from=0.1pi",
        "--scan_to=0.5pi",
        "--scan_step=0.1pi",
        "--kicks_at=5",
        &out_arg(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("fig4_scan.csv")).unwrap();
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    assert!(rows >= 6, "{csv}");
}
