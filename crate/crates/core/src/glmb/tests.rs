use super::exhaustive::{canonical_children, exact_child_weights};
use super::*;
use crate::config::RunConfig;
use crate::geometry::{project_ellipsoid, CameraModel, Ellipsoid};
use crate::motion::{KinematicState, StateMatrix};
use crate::sensing::Measurement;
use crate::sim::look_at_camera;
use nalgebra::{DVector, Vector3};

fn rig(n: usize) -> Vec<CameraModel> {
    (0..n)
        .map(|i| {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / n as f64 + 0.3;
            look_at_camera(
                i,
                Vector3::new(5.0 + 10.0 * angle.cos(), 3.5 + 10.0 * angle.sin(), 3.0),
                Vector3::new(5.0, 3.5, 0.8),
                900.0,
                (1280.0, 960.0),
                5.0,
            )
        })
        .collect()
}

fn track_state(x: f64, y: f64) -> KinematicState {
    let mean = KinematicState::pack(
        Vector3::new(x, y, 0.9),
        Vector3::zeros(),
        Vector3::new(0.25f64.ln(), 0.25f64.ln(), 0.9f64.ln()),
    );
    let mut cov = StateMatrix::zeros();
    for i in [0, 2, 4] {
        cov[(i, i)] = 0.02;
    }
    for i in [1, 3, 5] {
        cov[(i, i)] = 0.01;
    }
    for i in [6, 7, 8] {
        cov[(i, i)] = 0.005;
    }
    KinematicState::new(mean, cov)
}

fn density_with_tracks(positions: &[(f64, f64)]) -> GlmbDensity {
    let mut d = GlmbDensity::empty();
    d.frame = Some(0);
    d.table = positions
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| TrackDensity {
            label: Label::new(0, i as u32),
            state: track_state(x, y),
        })
        .collect();
    d.hypotheses = vec![Hypothesis {
        weight: 1.0,
        tracks: (0..positions.len()).collect(),
        assoc: vec![vec![0, 0]; positions.len()],
    }];
    d
}

fn detection_of(cams: &[CameraModel], c: usize, pos: (f64, f64), index: usize) -> Measurement {
    let e = Ellipsoid::new(
        Vector3::new(pos.0, pos.1, 0.9),
        Vector3::new(0.25, 0.25, 0.9),
    );
    let b = project_ellipsoid(&cams[c], &e).unwrap();
    Measurement::new(b, DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]), c, index)
}

fn test_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.occlusion.model = crate::occlusion::OcclusionModel::Constant;
    cfg.occlusion.constant_pd = 0.95;
    cfg.glmb.weight_floor = 0.0;
    cfg.glmb.h_max = 100_000;
    cfg.glmb.gibbs_sweeps = 500;
    cfg
}

fn step_density(
    cams: &[CameraModel],
    cfg: &RunConfig,
    density: &GlmbDensity,
    frame: u32,
    meas: &[Vec<Measurement>],
) -> GlmbDensity {
    let mut tt = crate::reid::TtStore::default();
    let (out, _, _) = super::step::run_step(
        cams, cfg, density, &[], &mut tt, frame, meas, false, true,
    );
    out
}

#[test]
fn no_measurement_weights_match_hand_arithmetic() {
    let cams = rig(2);
    let cfg = test_config();
    let prior = density_with_tracks(&[(5.0, 3.5)]);
    let meas: Vec<Vec<Measurement>> = vec![vec![], vec![]];
    let out = step_density(&cams, &cfg, &prior, 1, &meas);

    // Survive+miss on both cameras vs death.
    let p_s = 0.99;
    let alive = p_s * (1.0f64 - 0.95).powi(2);
    let dead = 1.0 - p_s;
    let z = alive + dead;
    assert_eq!(out.hypotheses.len(), 2);
    let mut got: Vec<(usize, f64)> = out
        .hypotheses
        .iter()
        .map(|h| (h.tracks.len(), h.weight))
        .collect();
    got.sort_by_key(|(n, _)| *n);
    approx::assert_relative_eq!(got[0].1, dead / z, epsilon = 1e-9);
    approx::assert_relative_eq!(got[1].1, alive / z, epsilon = 1e-9);
}

#[test]
fn single_measurement_is_assigned_in_best_child() {
    let cams = rig(1);
    let cfg = test_config();
    let prior = density_with_tracks(&[(5.0, 3.5)]);
    let meas = vec![vec![detection_of(&cams, 0, (5.0, 3.5), 1)]];
    let out = step_density(&cams, &cfg, &prior, 1, &meas);

    // The exact posterior has three maps: death, alive-miss, alive-assigned;
    // the detection term dominates, so the best child assigns.
    let exact = exact_child_weights(&cams, &cfg, &prior, &[], 1, &meas);
    assert_eq!(exact.len(), 3);
    let best = out.best_hypothesis().unwrap();
    assert_eq!(best.tracks.len(), 1);
    assert_eq!(best.assoc[0], vec![1]);
    assert!(best.weight > 0.9);
    let best_key: Vec<(Label, AssocTuple)> = vec![(Label::new(0, 0), vec![1])];
    approx::assert_relative_eq!(
        exact.get(&best_key).copied().unwrap(),
        best.weight,
        max_relative = 0.01
    );
}

#[test]
fn truncated_weights_match_exhaustive_enumeration() {
    // 2 tracks, 2 cameras, 2 measurements per camera; full Gibbs mixing.
    let cams = rig(2);
    let mut cfg = test_config();
    cfg.glmb.gibbs_sweeps = 10_000;
    let prior = density_with_tracks(&[(4.2, 3.0), (5.8, 4.0)]);
    let meas: Vec<Vec<Measurement>> = (0..2)
        .map(|c| {
            vec![
                detection_of(&cams, c, (4.25, 3.05), 1),
                detection_of(&cams, c, (5.75, 3.98), 2),
            ]
        })
        .collect();

    let started = std::time::Instant::now();
    let exact = exact_child_weights(&cams, &cfg, &prior, &[], 1, &meas);
    let out = step_density(&cams, &cfg, &prior, 1, &meas);
    let elapsed = started.elapsed();
    let got = canonical_children(&out);

    let mut l1 = 0.0;
    for (key, w) in &exact {
        l1 += (w - got.get(key).copied().unwrap_or(0.0)).abs();
    }
    for (key, w) in &got {
        if !exact.contains_key(key) {
            l1 += w;
        }
    }
    assert!(l1 < 0.01, "L1 error {l1}");
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
}

#[test]
fn weights_remain_normalized_and_labels_unique() {
    let cams = rig(2);
    let cfg = test_config();
    let mut density = density_with_tracks(&[(4.0, 3.0), (6.0, 4.0)]);
    for frame in 1..5 {
        let meas: Vec<Vec<Measurement>> = (0..2)
            .map(|c| {
                vec![detection_of(
                    &cams,
                    c,
                    (4.0 + 0.05 * frame as f64, 3.0),
                    1,
                )]
            })
            .collect();
        density = step_density(&cams, &cfg, &density, frame, &meas);
        assert!((density.weight_sum() - 1.0).abs() < 1e-9);
        for h in &density.hypotheses {
            let labels = density.labels_of(h);
            let set: std::collections::BTreeSet<_> = labels.iter().collect();
            assert_eq!(set.len(), labels.len());
            // tracks sorted by label
            let mut sorted = labels.clone();
            sorted.sort();
            assert_eq!(labels, sorted);
        }
    }
}

#[test]
fn measurement_permutation_leaves_estimate_unchanged() {
    let cams = rig(2);
    let cfg = test_config();
    let prior = density_with_tracks(&[(4.2, 3.0), (5.8, 4.0)]);
    let mk = |order: [usize; 2]| -> Vec<Vec<Measurement>> {
        (0..2)
            .map(|c| {
                let positions = [(4.25, 3.05), (5.75, 3.98)];
                order
                    .iter()
                    .enumerate()
                    .map(|(i, &oi)| detection_of(&cams, c, positions[oi], i + 1))
                    .collect()
            })
            .collect()
    };
    let a = step_density(&cams, &cfg, &prior, 1, &mk([0, 1]));
    let b = step_density(&cams, &cfg, &prior, 1, &mk([1, 0]));
    let ea = a.extract_estimate();
    let eb = b.extract_estimate();
    assert_eq!(ea.len(), eb.len());
    for (x, y) in ea.iter().zip(&eb) {
        assert_eq!(x.label, y.label);
        for i in 0..3 {
            assert!((x.position[i] - y.position[i]).abs() < 1e-6);
        }
    }
}

#[test]
fn single_hypothesis_mode_keeps_one_component() {
    let cams = rig(2);
    let cfg = test_config();
    let prior = density_with_tracks(&[(4.2, 3.0), (5.8, 4.0)]);
    let meas: Vec<Vec<Measurement>> = (0..2)
        .map(|c| vec![detection_of(&cams, c, (4.25, 3.05), 1)])
        .collect();
    let mut tt = crate::reid::TtStore::default();
    let (out, _, _) = super::step::run_step(
        &cams, &cfg, &prior, &[], &mut tt, 1, &meas, true, true,
    );
    assert_eq!(out.hypotheses.len(), 1);
    approx::assert_relative_eq!(out.hypotheses[0].weight, 1.0);
}

#[test]
fn step_is_deterministic_under_seed() {
    let cams = rig(2);
    let cfg = test_config();
    let prior = density_with_tracks(&[(4.2, 3.0), (5.8, 4.0)]);
    let meas: Vec<Vec<Measurement>> = (0..2)
        .map(|c| {
            vec![
                detection_of(&cams, c, (4.25, 3.05), 1),
                detection_of(&cams, c, (5.75, 3.98), 2),
            ]
        })
        .collect();
    let a = step_density(&cams, &cfg, &prior, 1, &meas);
    let b = step_density(&cams, &cfg, &prior, 1, &meas);
    assert_eq!(a.hypotheses.len(), b.hypotheses.len());
    for (x, y) in a.hypotheses.iter().zip(&b.hypotheses) {
        assert_eq!(x.weight.to_bits(), y.weight.to_bits());
        assert_eq!(x.assoc, y.assoc);
    }
}

#[test]
fn predict_only_step_when_all_cameras_off() {
    let mut cams = rig(2);
    for c in &mut cams {
        c.schedule = vec![(0, 0)];
    }
    let cfg = test_config();
    let prior = density_with_tracks(&[(5.0, 3.5)]);
    let meas: Vec<Vec<Measurement>> = vec![vec![], vec![]];
    let mut tt = crate::reid::TtStore::default();
    let (out, _, stats) = super::step::run_step(
        &cams, &cfg, &prior, &[], &mut tt, 1, &meas, false, true,
    );
    assert!(stats.predict_only);
    assert_eq!(out.hypotheses.len(), 1);
    approx::assert_relative_eq!(out.hypotheses[0].weight, 1.0);
    assert_eq!(out.table.len(), 1);
}
