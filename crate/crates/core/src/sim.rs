//! Synthetic scenario generator: camera rigs around a ground-plane scene,
//! constant-velocity objects with log-shape jitter and optional fall events,
//! occlusion-aware Bernoulli detection, box/feature noise and Poisson
//! clutter. Deterministic under the scenario seed.

use crate::geometry::{project_ellipsoid, CameraModel, Ellipsoid, ProjectionMatrix};
use crate::io::{DetectionFrame, TrajectoryRow};
use crate::motion::SceneBounds;
use crate::occlusion::{detection_probability, OcclusionConfig};
use crate::sensing::{ExtentLogRange, Measurement, SensorNoise};
use nalgebra::{DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
}

/// Pinhole camera at `position` looking at `target`, ground homography
/// derived from the projection restricted to z = 0.
pub fn look_at_camera(
    id: usize,
    position: Vector3<f64>,
    target: Vector3<f64>,
    focal: f64,
    image: (f64, f64),
    clutter_rate: f64,
) -> CameraModel {
    let forward = (target - position).normalize();
    let up = Vector3::new(0.0, 0.0, 1.0);
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right).normalize();
    let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let t = -r * position;
    let k = Matrix3::new(focal, 0.0, image.0 / 2.0, 0.0, focal, image.1 / 2.0, 0.0, 0.0, 1.0);
    let mut p = ProjectionMatrix::zeros();
    let kr = k * r;
    let kt = k * t;
    for row in 0..3 {
        for col in 0..3 {
            p[(row, col)] = kr[(row, col)];
        }
        p[(row, 3)] = kt[row];
    }
    // Ground homography: the projection restricted to z = 0 is
    // [p1 p2 p4]; its inverse maps pixels to ground points.
    let m = Matrix3::from_columns(&[
        p.column(0).into_owned(),
        p.column(1).into_owned(),
        p.column(3).into_owned(),
    ]);
    let h_ground = m.try_inverse().expect("degenerate ground homography");
    CameraModel {
        id,
        projection: p,
        image_width: image.0,
        image_height: image.1,
        ground_homography: h_ground,
        clutter_rate,
        schedule: vec![],
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseEvent {
    pub object: usize,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraIntervals {
    pub camera: usize,
    pub intervals: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub height: f64,
    pub focal: f64,
    pub image: [f64; 2],
    /// Distance of cameras beyond the scene boundary.
    pub standoff: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            height: 3.0,
            focal: 900.0,
            image: [1280.0, 960.0],
            standoff: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    pub frames: u32,
    pub n_objects: usize,
    pub n_cameras: usize,
    pub scene: SceneBounds,
    /// Objects are born uniformly within this frame range.
    pub birth_frames: [u32; 2],
    /// Lifetime range in frames; absent means objects live to the end.
    pub lifetime: Option<[u32; 2]>,
    /// Speed range, meters per frame.
    pub speed_range: [f64; 2],
    pub feature_dim: usize,
    /// Minimum pairwise angle between object nominal features, degrees.
    pub min_feature_angle_deg: f64,
    /// Per-component Gaussian noise added to emitted features.
    pub feature_noise_std: f64,
    /// Fall windows per object (pose changes between upright and lying).
    pub pose_events: Vec<PoseEvent>,
    /// Lane motion: objects keep separate y-lanes and move along x only,
    /// so trajectories never approach (low-density scenes).
    pub lanes: bool,
    /// Tracker-known camera on/off schedule, written to the camera file.
    pub camera_intervals: Vec<CameraIntervals>,
    /// Tracker-unknown detector outages: cameras stay nominally on but emit
    /// nothing during these frame windows.
    pub outage_windows: Vec<[u32; 2]>,
    /// Detection probability model applied to the true states.
    pub detector: OcclusionConfig,
    pub noise: SensorNoise,
    pub extent_log_range: ExtentLogRange,
    pub clutter_rate: f64,
    pub rig: RigConfig,
    pub object_half_lengths: [f64; 3],
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seed: 0,
            frames: 200,
            n_objects: 3,
            n_cameras: 4,
            scene: SceneBounds::default(),
            birth_frames: [0, 0],
            lifetime: None,
            speed_range: [0.02, 0.06],
            feature_dim: 16,
            min_feature_angle_deg: 60.0,
            feature_noise_std: 0.05,
            pose_events: vec![],
            lanes: false,
            camera_intervals: vec![],
            outage_windows: vec![],
            detector: OcclusionConfig::default(),
            noise: SensorNoise::default(),
            extent_log_range: ExtentLogRange::default(),
            clutter_rate: 5.0,
            rig: RigConfig::default(),
            object_half_lengths: [0.25, 0.25, 0.9],
        }
    }
}

pub struct SimOutput {
    pub cameras: Vec<CameraModel>,
    pub truth: Vec<TrajectoryRow>,
    pub frames: Vec<DetectionFrame>,
}

struct SimObject {
    birth: u32,
    death: u32,
    pos: Vector2<f64>,
    vel: Vector2<f64>,
    half_lengths: Vector3<f64>,
    feature: DVector<f64>,
}

impl SimObject {
    fn ellipsoid(&self, fallen: bool) -> Ellipsoid {
        let h = if fallen {
            Vector3::new(self.half_lengths.z, self.half_lengths.y, self.half_lengths.x)
        } else {
            self.half_lengths
        };
        Ellipsoid::new(Vector3::new(self.pos.x, self.pos.y, h.z), h)
    }
}

fn sample_features(
    n: usize,
    dim: usize,
    min_angle_deg: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<DVector<f64>>, SimError> {
    if dim < 2 && n > 1 {
        return Err(SimError::Infeasible(
            "feature separation impossible in dimension < 2".into(),
        ));
    }
    let max_dot = min_angle_deg.to_radians().cos();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(n);
    'outer: for _ in 0..n {
        for _ in 0..5000 {
            let mut v = DVector::from_fn(dim, |_, _| normal.sample(rng));
            let norm = v.norm();
            if norm < 1e-9 {
                continue;
            }
            v /= norm;
            if out.iter().all(|u| u.dot(&v) <= max_dot) {
                out.push(v);
                continue 'outer;
            }
        }
        return Err(SimError::Infeasible(format!(
            "could not place {n} features with pairwise angle >= {min_angle_deg} deg in dimension {dim}"
        )));
    }
    Ok(out)
}

pub fn simulate(spec: &ScenarioSpec) -> Result<SimOutput, SimError> {
    if spec.n_objects == 0 || spec.n_cameras == 0 || spec.frames == 0 {
        return Err(SimError::Infeasible("empty scenario".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);

    // Camera ring around the scene center.
    let cx = 0.5 * (spec.scene.min[0] + spec.scene.max[0]);
    let cy = 0.5 * (spec.scene.min[1] + spec.scene.max[1]);
    let half_w = 0.5 * (spec.scene.max[0] - spec.scene.min[0]);
    let half_h = 0.5 * (spec.scene.max[1] - spec.scene.min[1]);
    let radius = (half_w.powi(2) + half_h.powi(2)).sqrt() + spec.rig.standoff;
    let mut cameras: Vec<CameraModel> = (0..spec.n_cameras)
        .map(|i| {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / spec.n_cameras as f64
                + std::f64::consts::FRAC_PI_8;
            look_at_camera(
                i,
                Vector3::new(cx + radius * angle.cos(), cy + radius * angle.sin(), spec.rig.height),
                Vector3::new(cx, cy, 0.8),
                spec.rig.focal,
                (spec.rig.image[0], spec.rig.image[1]),
                spec.clutter_rate,
            )
        })
        .collect();
    for ci in &spec.camera_intervals {
        if ci.camera < cameras.len() {
            cameras[ci.camera].schedule =
                ci.intervals.iter().map(|w| (w[0], w[1])).collect();
        }
    }

    let features = sample_features(
        spec.n_objects,
        spec.feature_dim,
        spec.min_feature_angle_deg,
        &mut rng,
    )?;

    let normal = Normal::new(0.0, 1.0).unwrap();
    let margin = spec.scene.margin;
    let mut objects: Vec<SimObject> = Vec::with_capacity(spec.n_objects);
    for features_i in features.into_iter() {
        let birth = rng.random_range(spec.birth_frames[0]..=spec.birth_frames[1]);
        let death = match spec.lifetime {
            Some([lo, hi]) => (birth + rng.random_range(lo..=hi)).min(spec.frames),
            None => spec.frames,
        };
        let lane_idx = objects.len();
        let pos = if spec.lanes {
            let lanes = spec.n_objects.max(1) as f64;
            let y = spec.scene.min[1]
                + margin
                + (spec.scene.max[1] - spec.scene.min[1] - 2.0 * margin)
                    * ((lane_idx as f64 + 0.5) / lanes);
            Vector2::new(
                rng.random_range(spec.scene.min[0] + margin..spec.scene.max[0] - margin),
                y,
            )
        } else {
            Vector2::new(
                rng.random_range(spec.scene.min[0] + margin..spec.scene.max[0] - margin),
                rng.random_range(spec.scene.min[1] + margin..spec.scene.max[1] - margin),
            )
        };
        let speed = rng.random_range(spec.speed_range[0]..=spec.speed_range[1]);
        let heading = if spec.lanes {
            if lane_idx % 2 == 0 {
                0.0
            } else {
                std::f64::consts::PI
            }
        } else {
            rng.random_range(0.0..2.0 * std::f64::consts::PI)
        };
        let jitter = |rng: &mut ChaCha12Rng| 1.0 + rng.random_range(-0.1..0.1);
        objects.push(SimObject {
            birth,
            death,
            pos,
            vel: Vector2::new(speed * heading.cos(), speed * heading.sin()),
            half_lengths: Vector3::new(
                spec.object_half_lengths[0] * jitter(&mut rng),
                spec.object_half_lengths[1] * jitter(&mut rng),
                spec.object_half_lengths[2] * jitter(&mut rng),
            ),
            feature: features_i,
        });
    }

    let in_outage = |k: u32| spec.outage_windows.iter().any(|w| k >= w[0] && k <= w[1]);
    let is_fallen = |obj: usize, k: u32| {
        spec.pose_events
            .iter()
            .any(|e| e.object == obj && k >= e.start && k <= e.end)
    };

    let mut truth: Vec<TrajectoryRow> = Vec::new();
    let mut frames: Vec<DetectionFrame> = Vec::with_capacity(spec.frames as usize);
    for k in 0..spec.frames {
        // Advance object kinematics.
        for obj in objects.iter_mut() {
            if k < obj.birth || k >= obj.death {
                continue;
            }
            if k > obj.birth {
                obj.pos += obj.vel;
                obj.vel.x += 0.005 * normal.sample(&mut rng);
                if !spec.lanes {
                    obj.vel.y += 0.005 * normal.sample(&mut rng);
                }
                // Reflect at the interior boundary to stay in scene.
                for (axis, (lo, hi)) in [
                    (0usize, (spec.scene.min[0] + margin, spec.scene.max[0] - margin)),
                    (1usize, (spec.scene.min[1] + margin, spec.scene.max[1] - margin)),
                ] {
                    if obj.pos[axis] < lo {
                        obj.pos[axis] = 2.0 * lo - obj.pos[axis];
                        obj.vel[axis] = obj.vel[axis].abs();
                    } else if obj.pos[axis] > hi {
                        obj.pos[axis] = 2.0 * hi - obj.pos[axis];
                        obj.vel[axis] = -obj.vel[axis].abs();
                    }
                }
            }
        }

        let alive: Vec<usize> = (0..objects.len())
            .filter(|&i| k >= objects[i].birth && k < objects[i].death)
            .collect();
        let ellipsoids: Vec<(usize, Ellipsoid)> = alive
            .iter()
            .map(|&i| (i, objects[i].ellipsoid(is_fallen(i, k))))
            .collect();

        for &(i, e) in &ellipsoids {
            truth.push(TrajectoryRow {
                id: format!("t{i}"),
                frame: k,
                pos: [e.center.x, e.center.y, e.center.z],
                ext: {
                    let h = e.half_lengths();
                    [h.x, h.y, h.z]
                },
                vel: [objects[i].vel.x, objects[i].vel.y, 0.0],
            });
        }

        let mut per_camera: Vec<Vec<Measurement>> = vec![vec![]; cameras.len()];
        let outage = in_outage(k);
        for (c, cam) in cameras.iter().enumerate() {
            if !cam.is_active(k) || outage {
                continue;
            }
            let mut dets: Vec<(crate::geometry::BoundingBox, DVector<f64>)> = Vec::new();
            for (idx, &(i, e)) in ellipsoids.iter().enumerate() {
                let Ok(bbox) = project_ellipsoid(cam, &e) else {
                    continue;
                };
                let others: Vec<Ellipsoid> = ellipsoids
                    .iter()
                    .enumerate()
                    .filter(|(oi, _)| *oi != idx)
                    .map(|(_, (_, oe))| *oe)
                    .collect();
                let pd = detection_probability(cam, &e, &others, &spec.detector);
                if rng.random_range(0.0..1.0) >= pd {
                    continue;
                }
                let fallen = is_fallen(i, k);
                let ev = if fallen {
                    spec.noise.extent_var_fallen
                } else {
                    spec.noise.extent_var_upright
                };
                let noisy = crate::geometry::BoundingBox {
                    center: Vector2::new(
                        bbox.center.x + spec.noise.center_var[0].sqrt() * normal.sample(&mut rng),
                        bbox.center.y + spec.noise.center_var[1].sqrt() * normal.sample(&mut rng),
                    ),
                    log_extent: Vector2::new(
                        bbox.log_extent.x + ev[0].sqrt() * normal.sample(&mut rng),
                        bbox.log_extent.y + ev[1].sqrt() * normal.sample(&mut rng),
                    ),
                };
                let mut f = objects[i].feature.clone();
                for v in f.iter_mut() {
                    *v += spec.feature_noise_std * normal.sample(&mut rng);
                }
                dets.push((noisy, f));
            }
            // Poisson clutter, uniform over image and log-extent range.
            if cam.clutter_rate > 0.0 {
                let n_clutter = Poisson::new(cam.clutter_rate).unwrap().sample(&mut rng) as usize;
                for _ in 0..n_clutter {
                    let lw = rng.random_range(
                        spec.extent_log_range.width[0].ln()..spec.extent_log_range.width[1].ln(),
                    );
                    let lh = rng.random_range(
                        spec.extent_log_range.height[0].ln()..spec.extent_log_range.height[1].ln(),
                    );
                    let bbox = crate::geometry::BoundingBox {
                        center: Vector2::new(
                            rng.random_range(0.0..cam.image_width),
                            rng.random_range(0.0..cam.image_height),
                        ),
                        log_extent: Vector2::new(lw, lh),
                    };
                    let mut f = DVector::from_fn(spec.feature_dim, |_, _| normal.sample(&mut rng));
                    let norm = f.norm();
                    if norm > 1e-9 {
                        f /= norm;
                    }
                    dets.push((bbox, f));
                }
            }
            per_camera[c] = dets
                .into_iter()
                .enumerate()
                .map(|(i, (bbox, f))| Measurement::new(bbox, f, c, i + 1))
                .collect();
        }
        frames.push(DetectionFrame {
            frame: k,
            per_camera,
        });
    }

    Ok(SimOutput {
        cameras,
        truth,
        frames,
    })
}
