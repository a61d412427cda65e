//! Adaptive track birth: flat-kernel mean-shift clustering of the current
//! multi-camera detections on the ground plane into a multi-view association
//! map, and the empirical LMB fit of birth existence probabilities and
//! densities.
//!
//! Birth parameters are estimated from the measurements of one frame and the
//! posterior hypotheses over that same frame (whose association maps the
//! unused-probability term consumes); the fitted candidates enter the filter
//! at the next frame, with their densities already propagated one step.

use crate::geometry::{ground_point, CameraModel};
use crate::glmb::{GlmbDensity, Label};
use crate::motion::{self, KinematicState, MotionParams, StateMatrix};
use crate::reid::TtTrack;
use crate::sensing::{
    clutter_density, sigma_points, FeatureProfile, Measurement, SensorNoise,
};
use nalgebra::{DVector, Matrix4, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

/// Per-camera assignment of candidate clusters to measurement indices;
/// entry 0 means no detection from that camera, j >= 1 is the j-th
/// measurement. Each (camera, index) pair appears in at most one row and
/// every row has at least one nonzero entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiViewAssociationMap {
    pub n_cameras: usize,
    pub rows: Vec<Vec<usize>>,
}

impl MultiViewAssociationMap {
    pub fn is_valid(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        for row in &self.rows {
            if row.len() != self.n_cameras {
                return false;
            }
            if row.iter().all(|&j| j == 0) {
                return false;
            }
            for (c, &j) in row.iter().enumerate() {
                if j > 0 && !seen.insert((c, j)) {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BirthConfig {
    /// Maximum birth existence probability r*_B.
    pub r_max: f64,
    /// Expected number of births per frame.
    pub lambda: f64,
    /// Constant detection probability used in the birth fit.
    pub pd_birth: f64,
    /// Mean-shift kernel bandwidth in meters, shared default for all cameras.
    pub bandwidth: f64,
    /// Optional per-camera bandwidth override.
    #[serde(default)]
    pub bandwidths: Option<Vec<f64>>,
    /// Mean-shift convergence threshold, meters.
    pub mean_shift_eps: f64,
    /// Nominal half-lengths of a newborn object, meters.
    pub prior_extent: [f64; 3],
    /// Birth prior position variance per world axis.
    pub prior_pos_var: [f64; 3],
    /// Birth prior velocity variance per world axis.
    pub prior_vel_var: [f64; 3],
    /// Birth prior log-shape variance per axis.
    pub prior_shape_var: [f64; 3],
}

impl Default for BirthConfig {
    fn default() -> Self {
        Self {
            r_max: 0.5,
            lambda: 1.0,
            pd_birth: 0.9,
            bandwidth: 0.8,
            bandwidths: None,
            mean_shift_eps: 0.01,
            prior_extent: [0.3, 0.3, 0.9],
            prior_pos_var: [0.25, 0.25, 0.04],
            prior_vel_var: [0.01, 0.01, 0.0025],
            prior_shape_var: [0.02, 0.02, 0.02],
        }
    }
}

impl BirthConfig {
    pub fn bandwidth_for(&self, camera: usize) -> f64 {
        self.bandwidths
            .as_ref()
            .and_then(|b| b.get(camera).copied())
            .unwrap_or(self.bandwidth)
    }
}

/// One fitted birth track: label, existence probability, Gaussian density
/// (already propagated to the frame it will enter), its association-map row
/// and the raw features of its assigned detections.
#[derive(Debug, Clone)]
pub struct BirthCandidate {
    pub label: Label,
    pub existence: f64,
    pub density: KinematicState,
    pub assigned: Vec<usize>,
    pub features: Vec<Option<DVector<f64>>>,
    pub profile: FeatureProfile,
    pub cluster_centroid: Vector2<f64>,
    /// Present when re-identification renamed this candidate; holds the TT
    /// entry removed from the store so it can be restored if the candidate
    /// is never born.
    pub recalled_from: Option<TtTrack>,
}

struct GroundDetection {
    camera: usize,
    index: usize,
    point: Vector2<f64>,
}

/// Clusters the frame's detections on the ground plane (Step 1: flat-kernel
/// mean shift seeded at every projected detection; Step 2: greedy row
/// assignment with the one-detection-per-camera-per-row guard).
pub fn cluster_detections(
    frames: &[Vec<Measurement>],
    cams: &[CameraModel],
    frame: u32,
    cfg: &BirthConfig,
) -> MultiViewAssociationMap {
    let n_cameras = cams.len();
    let mut dets: Vec<GroundDetection> = Vec::new();
    for (c, cam) in cams.iter().enumerate() {
        if !cam.is_active(frame) {
            continue;
        }
        for m in &frames[c] {
            match ground_point(cam, &m.bbox) {
                Ok(p) => dets.push(GroundDetection {
                    camera: c,
                    index: m.index_in_frame,
                    point: p,
                }),
                Err(e) => log::debug!("frame {frame} cam {c}: ground projection failed: {e}"),
            }
        }
    }
    if dets.is_empty() {
        return MultiViewAssociationMap {
            n_cameras,
            rows: vec![],
        };
    }

    // Step 1: mean shift. Each mode moves to the centroid of all points
    // within the bandwidth of their own camera.
    let eps = cfg.mean_shift_eps.max(1e-9);
    let mut modes: Vec<Vector2<f64>> = dets.iter().map(|d| d.point).collect();
    let mut converged = vec![false; modes.len()];
    for _ in 0..200 {
        if converged.iter().all(|&c| c) {
            break;
        }
        for g in 0..modes.len() {
            if converged[g] {
                continue;
            }
            let mut sum = Vector2::zeros();
            let mut n = 0usize;
            for d in &dets {
                if (d.point - modes[g]).norm() < cfg.bandwidth_for(d.camera) {
                    sum += d.point;
                    n += 1;
                }
            }
            let new_mode = if n > 0 { sum / n as f64 } else { modes[g] };
            if (new_mode - modes[g]).norm() < eps {
                converged[g] = true;
            }
            modes[g] = new_mode;
        }
    }

    // Deduplicate coinciding modes; these become the candidate cluster
    // centroids for Step 2.
    let mut centroids: Vec<Vector2<f64>> = Vec::new();
    for m in &modes {
        if !centroids.iter().any(|c| (c - m).norm() <= eps) {
            centroids.push(*m);
        }
    }

    // Step 2: greedy assignment, cameras then indices ascending. A detection
    // joins the nearest row within bandwidth that has no entry for its
    // camera yet; otherwise it opens a new row.
    struct Row {
        centroid: Vector2<f64>,
        entries: Vec<usize>,
    }
    let mut rows: Vec<Row> = centroids
        .iter()
        .map(|&c| Row {
            centroid: c,
            entries: vec![0; n_cameras],
        })
        .collect();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by_key(|&i| (dets[i].camera, dets[i].index));
    for i in order {
        let d = &dets[i];
        let h = cfg.bandwidth_for(d.camera);
        let mut best: Option<(f64, usize)> = None;
        for (r, row) in rows.iter().enumerate() {
            if row.entries[d.camera] != 0 {
                continue;
            }
            let dist = (d.point - row.centroid).norm();
            if dist < h && best.map_or(true, |(bd, _)| dist < bd) {
                best = Some((dist, r));
            }
        }
        match best {
            Some((_, r)) => rows[r].entries[d.camera] = d.index,
            None => rows.push(Row {
                centroid: d.point,
                entries: {
                    let mut e = vec![0; n_cameras];
                    e[d.camera] = d.index;
                    e
                },
            }),
        }
    }

    let mut rows: Vec<Row> = rows
        .into_iter()
        .filter(|r| r.entries.iter().any(|&j| j > 0))
        .collect();

    // Consolidation: a detection landing just outside the bandwidth opens a
    // spurious twin row for the same object. Twin rows have disjoint camera
    // support (the per-camera guard forbids overlap), while distinct nearby
    // objects keep detections in the same cameras; merge only the former.
    let point_of = |c: usize, j: usize| {
        dets.iter()
            .find(|d| d.camera == c && d.index == j)
            .map(|d| d.point)
    };
    let row_centroid = |entries: &[usize]| {
        let pts: Vec<Vector2<f64>> = entries
            .iter()
            .enumerate()
            .filter(|(_, &j)| j > 0)
            .filter_map(|(c, &j)| point_of(c, j))
            .collect();
        pts.iter().sum::<Vector2<f64>>() / pts.len().max(1) as f64
    };
    let merge_radius = (0..n_cameras)
        .map(|c| cfg.bandwidth_for(c))
        .fold(0.0f64, f64::max);
    'merge: loop {
        for i in 0..rows.len() {
            for j in (i + 1)..rows.len() {
                let disjoint = (0..n_cameras)
                    .all(|c| !(rows[i].entries[c] > 0 && rows[j].entries[c] > 0));
                if !disjoint {
                    continue;
                }
                let ci = row_centroid(&rows[i].entries);
                let cj = row_centroid(&rows[j].entries);
                if (ci - cj).norm() < merge_radius {
                    for c in 0..n_cameras {
                        if rows[j].entries[c] > 0 {
                            rows[i].entries[c] = rows[j].entries[c];
                        }
                    }
                    rows.remove(j);
                    continue 'merge;
                }
            }
        }
        break;
    }

    MultiViewAssociationMap {
        n_cameras,
        rows: rows.into_iter().map(|r| r.entries).collect(),
    }
}

/// Probability that measurement `j` of camera `camera` is not associated to
/// any track: one minus the total weight of hypotheses whose latest
/// association map assigns it.
pub fn unused_probability(glmb: &GlmbDensity, camera: usize, j: usize) -> f64 {
    debug_assert!(j >= 1);
    let mut used = 0.0;
    for h in &glmb.hypotheses {
        if h.assoc.iter().any(|t| t[camera] as usize == j) {
            used += h.weight;
        }
    }
    (1.0 - used).clamp(0.0, 1.0)
}

fn row_unused_probability(glmb: &GlmbDensity, row: &[usize]) -> f64 {
    row.iter()
        .enumerate()
        .filter(|(_, &j)| j > 0)
        .map(|(c, &j)| unused_probability(glmb, c, j))
        .product()
}

fn birth_prior(centroid: &Vector2<f64>, cfg: &BirthConfig) -> KinematicState {
    let pos = Vector3::new(centroid.x, centroid.y, cfg.prior_extent[2]);
    let log_shape = Vector3::new(
        cfg.prior_extent[0].ln(),
        cfg.prior_extent[1].ln(),
        cfg.prior_extent[2].ln(),
    );
    let mean = KinematicState::pack(pos, Vector3::zeros(), log_shape);
    let mut cov = StateMatrix::zeros();
    for axis in 0..3 {
        cov[(2 * axis, 2 * axis)] = cfg.prior_pos_var[axis];
        cov[(2 * axis + 1, 2 * axis + 1)] = cfg.prior_vel_var[axis];
        cov[(6 + axis, 6 + axis)] = cfg.prior_shape_var[axis];
    }
    KinematicState::new(mean, cov)
}

/// Unscented quadrature of `<p_B0, psi_Z,B>`: the bounding-box-only
/// multi-view likelihood of the row's detections under the birth prior,
/// with the prescribed constant birth detection probability.
fn birth_psi_bar(
    prior: &KinematicState,
    row: &[usize],
    frames: &[Vec<Measurement>],
    cams: &[CameraModel],
    frame: u32,
    noise: &SensorNoise,
    extent_log_volume: f64,
    pd_birth: f64,
    kappa: f64,
) -> f64 {
    let sp = sigma_points(prior, kappa);
    let weight = |i: usize| if i == 0 { sp.w0 } else { sp.wi };
    let mut total = 0.0;
    for (i, point) in sp.points.iter().enumerate() {
        let state_e = crate::geometry::Ellipsoid {
            center: Vector3::new(point[0], point[2], point[4]),
            log_half_lengths: Vector3::new(point[6], point[7], point[8]),
        };
        let mut factor = 1.0;
        for (c, cam) in cams.iter().enumerate() {
            if !cam.is_active(frame) {
                continue;
            }
            let j = row[c];
            if j == 0 {
                factor *= 1.0 - pd_birth;
                continue;
            }
            let z = &frames[c][j - 1];
            match crate::geometry::project_ellipsoid(cam, &state_e) {
                Ok(b) => {
                    let r = noise.for_predicted(&b);
                    let cov = Matrix4::from_diagonal(&r);
                    let diff = z.bbox.as_vector() - b.as_vector();
                    let quad = Vector4::new(
                        diff.x * diff.x / r.x,
                        diff.y * diff.y / r.y,
                        diff.z * diff.z / r.z,
                        diff.w * diff.w / r.w,
                    )
                    .sum();
                    let det = cov.determinant();
                    let g = (-0.5 * quad).exp()
                        / ((2.0 * std::f64::consts::PI).powi(2) * det.sqrt());
                    let kap = clutter_density(cam, extent_log_volume).max(1e-300);
                    factor *= pd_birth * g / kap;
                }
                Err(_) => {
                    factor = 0.0;
                }
            }
            if factor == 0.0 {
                break;
            }
        }
        total += weight(i) * factor;
    }
    total.max(0.0)
}

pub struct BirthModelInputs<'a> {
    pub motion: &'a MotionParams,
    pub noise: &'a SensorNoise,
    pub extent_log_volume: f64,
    pub ut_kappa: f64,
    pub n_cameras: usize,
    pub feature_stable_weight: f64,
    pub feature_momentum: f64,
}

/// Fits the empirical LMB birth model to the clustered association map:
/// existence probabilities from the capped normalized `r_U * psi_bar`
/// formula, densities from a motion-predicted prior updated with the row's
/// boxes camera by camera.
///
/// `next_frame` is the frame at which the candidates will enter the filter
/// and becomes their labels' birth time.
pub fn fit_birth(
    map: &MultiViewAssociationMap,
    frames: &[Vec<Measurement>],
    cams: &[CameraModel],
    frame: u32,
    glmb: &GlmbDensity,
    cfg: &BirthConfig,
    inputs: &BirthModelInputs,
    next_frame: u32,
) -> Vec<BirthCandidate> {
    let mut fits: Vec<(usize, f64, f64, KinematicState, Vector2<f64>)> = Vec::new();
    for (row_idx, row) in map.rows.iter().enumerate() {
        let mut points = Vec::new();
        for (c, &j) in row.iter().enumerate() {
            if j == 0 {
                continue;
            }
            if let Ok(p) = ground_point(&cams[c], &frames[c][j - 1].bbox) {
                points.push(p);
            }
        }
        if points.is_empty() {
            continue;
        }
        let centroid = points.iter().sum::<Vector2<f64>>() / points.len() as f64;
        let prior = birth_prior(&centroid, cfg);
        let psi_bar = birth_psi_bar(
            &prior,
            row,
            frames,
            cams,
            frame,
            inputs.noise,
            inputs.extent_log_volume,
            cfg.pd_birth,
            inputs.ut_kappa,
        );
        if psi_bar < 1e-300 {
            log::debug!("birth row {row_idx} dropped: psi underflow");
            continue;
        }
        let r_u = row_unused_probability(glmb, row);
        fits.push((row_idx, r_u, psi_bar, prior, centroid));
    }

    let denom: f64 = fits.iter().map(|(_, ru, psi, _, _)| ru * psi).sum();
    let mut out = Vec::new();
    for (emit_idx, (row_idx, r_u, psi_bar, prior, centroid)) in fits.into_iter().enumerate() {
        let r = if denom > 0.0 {
            (cfg.lambda * r_u * psi_bar / denom).min(cfg.r_max)
        } else {
            0.0
        };
        // Predict the prior one step, then sequential per-camera box updates.
        let mut density = motion::predict(&prior, inputs.motion);
        let row = &map.rows[row_idx];
        for (c, &j) in row.iter().enumerate() {
            if j == 0 {
                continue;
            }
            let z = &frames[c][j - 1];
            match crate::sensing::ukf_update(
                &cams[c],
                &density,
                &z.bbox,
                inputs.noise,
                inputs.ut_kappa,
            ) {
                Ok(updated) => density = updated,
                Err(e) => log::debug!("birth row {row_idx} cam {c}: update failed: {e}"),
            }
        }
        let mut features: Vec<Option<DVector<f64>>> = vec![None; inputs.n_cameras];
        let mut profile = FeatureProfile::new(
            inputs.n_cameras,
            inputs.feature_stable_weight,
            inputs.feature_momentum,
        );
        for (c, &j) in row.iter().enumerate() {
            if j > 0 {
                let f = frames[c][j - 1].feature.clone();
                profile.update(c, &f);
                features[c] = Some(f);
            }
        }
        log::trace!(
            "birth row {row_idx} -> label ({next_frame},{emit_idx}): r={r:.4} ru={r_u:.3} psi={psi_bar:.3e} centroid=({:.2},{:.2}) row={:?}",
            centroid.x, centroid.y, map.rows[row_idx]
        );
        out.push(BirthCandidate {
            label: Label::new(next_frame, emit_idx as u32),
            existence: r,
            density,
            assigned: row.clone(),
            features,
            profile,
            cluster_centroid: centroid,
            recalled_from: None,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glmb::Hypothesis;
    use crate::sim::look_at_camera;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rig(n: usize) -> Vec<CameraModel> {
        (0..n)
            .map(|i| {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                look_at_camera(
                    i,
                    Vector3::new(5.0 + 9.0 * angle.cos(), 3.5 + 9.0 * angle.sin(), 3.0),
                    Vector3::new(5.0, 3.5, 0.8),
                    900.0,
                    (1280.0, 960.0),
                    5.0,
                )
            })
            .collect()
    }

    fn detection_at(cams: &[CameraModel], c: usize, g: Vector2<f64>, index: usize) -> Measurement {
        let e = crate::geometry::Ellipsoid::new(
            Vector3::new(g.x, g.y, 0.9),
            Vector3::new(0.25, 0.25, 0.9),
        );
        let b = crate::geometry::project_ellipsoid(&cams[c], &e).unwrap();
        Measurement::new(b, DVector::from_vec(vec![1.0, 0.0, 0.0]), c, index)
    }

    #[test]
    fn single_detection_single_camera() {
        let cams = rig(2);
        let frames = vec![vec![detection_at(&cams, 0, Vector2::new(5.0, 3.5), 1)], vec![]];
        let map = cluster_detections(&frames, &cams, 0, &BirthConfig::default());
        assert_eq!(map.rows.len(), 1);
        assert_eq!(map.rows[0], vec![1, 0]);
        assert!(map.is_valid());
    }

    #[test]
    fn nearby_detections_from_two_cameras_merge() {
        let cams = rig(2);
        let frames = vec![
            vec![detection_at(&cams, 0, Vector2::new(5.0, 3.5), 1)],
            vec![detection_at(&cams, 1, Vector2::new(5.05, 3.58), 1)],
        ];
        let map = cluster_detections(&frames, &cams, 0, &BirthConfig::default());
        assert_eq!(map.rows.len(), 1, "{:?}", map.rows);
        assert_eq!(map.rows[0], vec![1, 1]);
    }

    #[test]
    fn same_camera_detections_stay_separate() {
        let cams = rig(2);
        let frames = vec![
            vec![
                detection_at(&cams, 0, Vector2::new(5.0, 3.5), 1),
                detection_at(&cams, 0, Vector2::new(5.05, 3.55), 2),
            ],
            vec![],
        ];
        let map = cluster_detections(&frames, &cams, 0, &BirthConfig::default());
        assert_eq!(map.rows.len(), 2);
        assert!(map.is_valid());
    }

    #[test]
    fn empty_input_empty_map() {
        let cams = rig(2);
        let map = cluster_detections(&[vec![], vec![]], &cams, 0, &BirthConfig::default());
        assert!(map.rows.is_empty());
    }

    #[test]
    fn cluster_map_invariants_on_random_frames() {
        let cams = rig(3);
        let cfg = BirthConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let frames: Vec<Vec<Measurement>> = (0..3)
                .map(|c| {
                    let n = rng.random_range(0..5);
                    (0..n)
                        .map(|i| {
                            detection_at(
                                &cams,
                                c,
                                Vector2::new(
                                    rng.random_range(2.0..8.0),
                                    rng.random_range(1.0..6.0),
                                ),
                                i + 1,
                            )
                        })
                        .collect()
                })
                .collect();
            let map = cluster_detections(&frames, &cams, 0, &cfg);
            assert!(map.is_valid(), "{:?}", map.rows);
        }
    }

    fn glmb_with_assoc(weights: &[f64], assocs: Vec<Vec<Vec<u16>>>) -> GlmbDensity {
        let mut d = GlmbDensity::empty();
        d.table = vec![];
        d.hypotheses = weights
            .iter()
            .zip(assocs)
            .map(|(&w, a)| Hypothesis {
                weight: w,
                tracks: vec![],
                assoc: a,
            })
            .collect();
        d
    }

    #[test]
    fn unused_probability_weight_sums() {
        // Two hypotheses 0.7/0.3; only the first uses (cam 0, j=1).
        let d = glmb_with_assoc(&[0.7, 0.3], vec![vec![vec![1, 0]], vec![vec![0, 0]]]);
        assert_relative_eq!(unused_probability(&d, 0, 1), 0.3);

        let all = glmb_with_assoc(&[0.6, 0.4], vec![vec![vec![2, 0]], vec![vec![2, 0]]]);
        assert_relative_eq!(unused_probability(&all, 0, 2), 0.0);
        assert_relative_eq!(unused_probability(&all, 1, 1), 1.0);
    }

    fn birth_inputs<'a>(
        motion: &'a MotionParams,
        noise: &'a SensorNoise,
        n_cameras: usize,
    ) -> BirthModelInputs<'a> {
        BirthModelInputs {
            motion,
            noise,
            extent_log_volume: crate::sensing::ExtentLogRange::default().log_volume(),
            ut_kappa: 2.0,
            n_cameras,
            feature_stable_weight: 0.9,
            feature_momentum: 0.9,
        }
    }

    #[test]
    fn single_row_birth_is_capped_ratio() {
        let cams = rig(2);
        let frames = vec![
            vec![detection_at(&cams, 0, Vector2::new(5.0, 3.5), 1)],
            vec![detection_at(&cams, 1, Vector2::new(5.0, 3.5), 1)],
        ];
        let cfg = BirthConfig::default();
        let map = cluster_detections(&frames, &cams, 0, &cfg);
        assert_eq!(map.rows.len(), 1);
        let motion = MotionParams::default();
        let noise = SensorNoise::default();
        let glmb = GlmbDensity::empty();
        let cands = fit_birth(
            &map,
            &frames,
            &cams,
            0,
            &glmb,
            &cfg,
            &birth_inputs(&motion, &noise, 2),
            1,
        );
        assert_eq!(cands.len(), 1);
        // lambda * ru * psi / (ru * psi) = 1, capped at r_max = 0.5.
        assert_relative_eq!(cands[0].existence, 0.5);
        assert!(cands[0].recalled_from.is_none());
    }

    #[test]
    fn symmetric_rows_get_equal_existence() {
        let cams = rig(2);
        let frames = vec![
            vec![
                detection_at(&cams, 0, Vector2::new(3.0, 2.0), 1),
                detection_at(&cams, 0, Vector2::new(7.0, 5.0), 2),
            ],
            vec![
                detection_at(&cams, 1, Vector2::new(3.0, 2.0), 1),
                detection_at(&cams, 1, Vector2::new(7.0, 5.0), 2),
            ],
        ];
        let cfg = BirthConfig::default();
        let map = cluster_detections(&frames, &cams, 0, &cfg);
        assert_eq!(map.rows.len(), 2);
        let motion = MotionParams::default();
        let noise = SensorNoise::default();
        let glmb = GlmbDensity::empty();
        let cands = fit_birth(
            &map,
            &frames,
            &cams,
            0,
            &glmb,
            &cfg,
            &birth_inputs(&motion, &noise, 2),
            1,
        );
        assert_eq!(cands.len(), 2);
        assert_relative_eq!(cands[0].existence, cands[1].existence, max_relative = 0.2);
    }

    #[test]
    fn fully_used_measurements_produce_no_birth() {
        let cams = rig(1);
        let frames = vec![vec![detection_at(&cams, 0, Vector2::new(5.0, 3.5), 1)]];
        let cfg = BirthConfig::default();
        let map = cluster_detections(&frames, &cams, 0, &cfg);
        // Every hypothesis assigns (cam 0, j 1).
        let glmb = glmb_with_assoc(&[1.0], vec![vec![vec![1]]]);
        let motion = MotionParams::default();
        let noise = SensorNoise::default();
        let cands = fit_birth(
            &map,
            &frames,
            &cams,
            0,
            &glmb,
            &cfg,
            &birth_inputs(&motion, &noise, 1),
            1,
        );
        assert_eq!(cands.len(), 1);
        assert_relative_eq!(cands[0].existence, 0.0);
    }

    #[test]
    fn uncapped_existence_sums_to_lambda() {
        let cams = rig(2);
        let frames = vec![
            vec![
                detection_at(&cams, 0, Vector2::new(3.0, 2.0), 1),
                detection_at(&cams, 0, Vector2::new(7.0, 5.0), 2),
                detection_at(&cams, 0, Vector2::new(5.0, 5.5), 3),
            ],
            vec![],
        ];
        let cfg = BirthConfig {
            r_max: 1.0,
            lambda: 0.8,
            ..Default::default()
        };
        let map = cluster_detections(&frames, &cams, 0, &cfg);
        let motion = MotionParams::default();
        let noise = SensorNoise::default();
        let glmb = GlmbDensity::empty();
        let cands = fit_birth(
            &map,
            &frames,
            &cams,
            0,
            &glmb,
            &cfg,
            &birth_inputs(&motion, &noise, 2),
            1,
        );
        let total: f64 = cands.iter().map(|c| c.existence).sum();
        assert_relative_eq!(total, 0.8, epsilon = 1e-9);
    }

    #[test]
    fn fitted_means_stay_near_centroids() {
        let cams = rig(3);
        let cfg = BirthConfig::default();
        let motion = MotionParams::default();
        let noise = SensorNoise::default();
        let glmb = GlmbDensity::empty();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..20 {
            let g = Vector2::new(rng.random_range(3.0..7.0), rng.random_range(2.0..5.0));
            let frames: Vec<Vec<Measurement>> = (0..3)
                .map(|c| vec![detection_at(&cams, c, g, 1)])
                .collect();
            let map = cluster_detections(&frames, &cams, 0, &cfg);
            let cands = fit_birth(
                &map,
                &frames,
                &cams,
                0,
                &glmb,
                &cfg,
                &birth_inputs(&motion, &noise, 3),
                1,
            );
            for c in &cands {
                let p = c.density.position();
                let d = (Vector2::new(p.x, p.y) - c.cluster_centroid).norm();
                assert!(d <= cfg.bandwidth, "mean {d} m from centroid");
            }
        }
    }
}
