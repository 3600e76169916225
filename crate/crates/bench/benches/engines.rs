use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, criterion_group, criterion_main};
use ratchet_core::evolution::{SplitStep, WaveState};
use ratchet_core::experiments::{OpticalSetup, ScanMode, ScanSpec, linear_hbar_grid, ratchet_mirror, run_fig4};
use ratchet_core::floquet::{DEFAULT_N_MAX, build_floquet};
use ratchet_core::optics::{RowNormalization, bounce_simulation};
use ratchet_core::{EffectivePlanck, Levels, OpticalGeometry, RatchetPotential, SpatialGrid};

fn hbar() -> EffectivePlanck {
    EffectivePlanck::pi_multiple(0.5).unwrap()
}

fn split_step_period(c: &mut Criterion) {
    let pot = RatchetPotential::experimental();
    let mut group = c.benchmark_group("split_step_period");
    for ppp in [256usize, 1024, 4096] {
        let grid = SpatialGrid::new(1, ppp).unwrap();
        let step = SplitStep::new(grid, &pot, hbar(), 0.0).unwrap();
        let mut state = WaveState::plane_wave(grid, 0, 0.0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(ppp), &ppp, |b, _| {
            b.iter(|| step.period(&mut state, |_, l| {
                black_box(l);
            }))
        });
    }
    group.finish();
}

fn floquet_build(c: &mut Criterion) {
    let pot = RatchetPotential::experimental();
    c.bench_function("floquet_build_n128", |b| {
        b.iter(|| build_floquet(black_box(&pot), hbar(), 0.0, DEFAULT_N_MAX).unwrap())
    });
}

fn optical_bounces(c: &mut Criterion) {
    let pot = RatchetPotential::experimental();
    let geom = OpticalGeometry::experimental(hbar());
    let setup = OpticalSetup::comparison();
    let mirror = ratchet_mirror(&geom, &pot, Levels::Continuous, setup.samples_per_period).unwrap();
    let input = setup.input(&geom).unwrap();
    let mut group = c.benchmark_group("bounce_simulation");
    group.sample_size(10);
    group.bench_function("22_kicks", |b| {
        b.iter(|| bounce_simulation(&geom, &mirror, black_box(&input), 22, RowNormalization::PerRow).unwrap())
    });
    group.finish();
}

fn hbar_scan(c: &mut Criterion) {
    let pot = RatchetPotential::experimental();
    let hbars = linear_hbar_grid(0.1 * std::f64::consts::PI, 2.0 * std::f64::consts::PI, 0.1 * std::f64::consts::PI)
        .unwrap();
    let spec = ScanSpec::new(hbars, vec![5, 21], pot, ScanMode::FixedStrength, 0.0).unwrap();
    let mut group = c.benchmark_group("hbar_scan");
    group.sample_size(10);
    group.bench_function("20_points", |b| b.iter(|| run_fig4(black_box(&spec)).unwrap()));
    group.finish();
}

criterion_group!(benches, split_step_period, floquet_build, optical_bounces, hbar_scan);
criterion_main!(benches);
