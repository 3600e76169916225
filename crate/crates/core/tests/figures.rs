use ratchet_core::config::RunConfig;
use ratchet_core::experiments::{OpticalSetup, compare_engines, row_centroids, run_fig2};
use ratchet_core::observables::mean_momentum;
use ratchet_core::{EffectivePlanck, Levels, OpticalGeometry, RatchetPotential, SpatialGrid};

fn quantum_centroids(cfg: &RunConfig) -> Vec<(f64, Vec<f64>)> {
    run_fig2(cfg)
        .unwrap()
        .iter()
        .map(|p| {
            let c = (0..p.quantum.n_kicks())
                .map(|r| mean_momentum(&p.quantum.order_distribution(r)))
                .collect();
            (p.hbar.value(), c)
        })
        .collect()
}

fn quantum_only() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.engine = ratchet_core::config::Engine::Quantum;
    cfg
}

#[test]
fn zero_strength_rows_repeat() {
    let mut cfg = RunConfig::default();
    cfg.potential = RatchetPotential::experimental().with_strength(0.0).unwrap();
    for panel in run_fig2(&cfg).unwrap() {
        let images = std::iter::once(&panel.quantum).chain(panel.optical.as_ref());
        for image in images {
            let first = &image.rows[0];
            for row in &image.rows {
                assert_eq!(row.len(), first.len());
                for (a, b) in row.iter().zip(first) {
                    assert!((a - b).abs() <= 1e-12 * first.iter().cloned().fold(0.0, f64::max));
                }
            }
        }
    }
}

#[test]
fn resonant_centroid_drifts_one_way() {
    let series = quantum_centroids(&quantum_only());
    let (_, c) = &series[0];
    let steps: Vec<f64> = c.windows(2).skip(1).map(|w| w[1] - w[0]).collect();
    let all_up = steps.iter().all(|&d| d >= 0.0);
    let all_down = steps.iter().all(|&d| d <= 0.0);
    assert!(all_up || all_down, "centroids {c:?}");
}

#[test]
fn off_resonant_centroid_stays_small() {
    let series = quantum_centroids(&quantum_only());
    let resonant = series[0].1.last().unwrap().abs();
    let off = series[1].1.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    assert!(off < 0.25 * resonant, "off-resonant max {off}, resonant kick-22 {resonant}");
}

#[test]
fn optical_panels_follow_quantum_direction() {
    let panels = run_fig2(&RunConfig::default()).unwrap();
    let p = &panels[0];
    let optical = row_centroids(p.optical.as_ref().unwrap());
    let quantum: Vec<f64> = (0..p.quantum.n_kicks())
        .map(|r| mean_momentum(&p.quantum.order_distribution(r)))
        .collect();
    let (o, q) = (optical.last().unwrap(), quantum.last().unwrap());
    assert!(o * q > 0.0, "optical {o}, quantum {q}");
}

#[test]
fn sixteen_levels_beat_eight() {
    let pot = RatchetPotential::experimental();
    for m in [0.5, 0.35] {
        let geom = OpticalGeometry::experimental(EffectivePlanck::pi_multiple(m).unwrap());
        let report = compare_engines(&geom, &pot, &OpticalSetup::comparison(), 22, SpatialGrid::default()).unwrap();
        let tv = report.quantization_tv(geom.hbar().value());
        let at = |n| tv.iter().find(|t| t.0 == n).unwrap().1;
        assert!(at(16) <= at(8), "{m}pi: {tv:?}");
        assert!(report.max_linf(geom.hbar().value(), Levels::Discrete(16)) > 0.0);
    }
}
