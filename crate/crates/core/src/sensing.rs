//! Single-view single-object measurement model: Gaussian bounding-box
//! likelihood evaluated through an unscented projection of the state density,
//! the two-mode feature likelihood with EMA-maintained nominal features, and
//! the uniform clutter intensity.

use crate::geometry::{project_ellipsoid, BoundingBox, CameraModel, Ellipsoid, GeometryError};
use crate::motion::{KinematicState, StateMatrix, StateVector, STATE_DIM};
use nalgebra::{Cholesky, DVector, Matrix4, SMatrix, Vector4};
use serde::{Deserialize, Serialize};

/// One detection: box, unit-norm appearance feature, camera and 1-based
/// index within its (frame, camera) list.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub bbox: BoundingBox,
    pub feature: DVector<f64>,
    pub camera: usize,
    pub index_in_frame: usize,
}

impl Measurement {
    pub fn new(bbox: BoundingBox, feature: DVector<f64>, camera: usize, index: usize) -> Self {
        let norm = feature.norm();
        let feature = if norm > 1e-12 { feature / norm } else { feature };
        Self {
            bbox,
            feature,
            camera,
            index_in_frame: index,
        }
    }
}

/// Box observation noise variances; extent noise has an upright and a fallen
/// variant, selected by the predicted box aspect.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoise {
    /// Center variance per axis, px^2.
    pub center_var: [f64; 2],
    /// Log-extent variance (width, height) for upright objects.
    pub extent_var_upright: [f64; 2],
    /// Log-extent variance for fallen objects.
    pub extent_var_fallen: [f64; 2],
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            center_var: [400.0, 400.0],
            extent_var_upright: [0.00995, 0.0025],
            extent_var_fallen: [0.0025, 0.00995],
        }
    }
}

impl SensorNoise {
    /// Diagonal of the 4-D measurement noise for a predicted box; boxes wider
    /// than tall use the fallen variant.
    pub fn for_predicted(&self, predicted: &BoundingBox) -> Vector4<f64> {
        let e = if predicted.width() > predicted.height() {
            self.extent_var_fallen
        } else {
            self.extent_var_upright
        };
        Vector4::new(self.center_var[0], self.center_var[1], e[0], e[1])
    }
}

/// Log-extent box over which clutter boxes are uniform.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtentLogRange {
    /// Min/max clutter box width, px.
    pub width: [f64; 2],
    /// Min/max clutter box height, px.
    pub height: [f64; 2],
}

impl Default for ExtentLogRange {
    fn default() -> Self {
        Self {
            width: [8.0, 512.0],
            height: [8.0, 512.0],
        }
    }
}

impl ExtentLogRange {
    pub fn log_volume(&self) -> f64 {
        (self.width[1].ln() - self.width[0].ln()) * (self.height[1].ln() - self.height[0].ln())
    }
}

/// Clutter intensity: `clutter_rate` spread uniformly over image area times
/// the log-extent volume. The feature factor is uniform and cancels against
/// the birth-feature convention.
pub fn clutter_density(cam: &CameraModel, extent_log_volume: f64) -> f64 {
    if cam.clutter_rate == 0.0 {
        return 0.0;
    }
    cam.clutter_rate / (cam.image_width * cam.image_height * extent_log_volume)
}

/// Similarity on unit vectors, `(1 + cos)/2`, monotone in cosine similarity
/// with range [0, 1].
pub fn feature_similarity(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    0.5 * (1.0 + a.dot(b))
}

/// Per-camera nominal features: a stable mode maintained as an exponential
/// moving average and an unstable mode tracking the latest observation.
#[derive(Debug, Clone)]
pub struct FeatureProfile {
    pub stable: Vec<Option<DVector<f64>>>,
    pub recent: Vec<Option<DVector<f64>>>,
    /// Weight of the stable mode; the unstable mode gets the complement.
    pub stable_weight: f64,
    /// EMA momentum for the stable mode.
    pub momentum: f64,
}

impl FeatureProfile {
    pub fn new(n_cameras: usize, stable_weight: f64, momentum: f64) -> Self {
        Self {
            stable: vec![None; n_cameras],
            recent: vec![None; n_cameras],
            stable_weight,
            momentum,
        }
    }

    pub fn is_initialized(&self, camera: usize) -> bool {
        self.stable.get(camera).is_some_and(|s| s.is_some())
    }

    /// Two-mode feature likelihood; returns 1 (the uniform convention used
    /// at birth) when no nominal feature exists for this camera.
    pub fn likelihood(&self, camera: usize, z_f: &DVector<f64>) -> f64 {
        let Some(stable) = self.stable.get(camera).and_then(|s| s.as_ref()) else {
            return 1.0;
        };
        let recent = self.recent[camera].as_ref().unwrap_or(stable);
        self.stable_weight * feature_similarity(z_f, stable)
            + (1.0 - self.stable_weight) * feature_similarity(z_f, recent)
    }

    /// Stable mode <- normalize(momentum * old + (1 - momentum) * z); the
    /// unstable mode snaps to the raw observation.
    pub fn update(&mut self, camera: usize, z_f: &DVector<f64>) {
        match &self.stable[camera] {
            Some(alpha) => {
                let mixed = alpha * self.momentum + z_f * (1.0 - self.momentum);
                let norm = mixed.norm();
                self.stable[camera] = Some(if norm > 1e-12 { mixed / norm } else { z_f.clone() });
            }
            None => self.stable[camera] = Some(z_f.clone()),
        }
        self.recent[camera] = Some(z_f.clone());
    }

    /// Stable-mode snapshot per camera, used by the TT store.
    pub fn snapshot(&self) -> Vec<Option<DVector<f64>>> {
        self.stable.clone()
    }
}

/// Symmetric sigma points: mean plus/minus the columns of sqrt((n+kappa) P),
/// with w0 = kappa/(n+kappa) and wi = 1/(2(n+kappa)).
pub struct SigmaPoints {
    pub points: Vec<StateVector>,
    pub w0: f64,
    pub wi: f64,
}

pub fn sigma_points(state: &KinematicState, kappa: f64) -> SigmaPoints {
    let n = STATE_DIM as f64;
    let scale = n + kappa;
    let chol = cholesky_with_jitter(&(state.cov * scale));
    let mut points = Vec::with_capacity(2 * STATE_DIM + 1);
    points.push(state.mean);
    let l = chol.l();
    for i in 0..STATE_DIM {
        let col: StateVector = l.column(i).into_owned();
        points.push(state.mean + col);
        points.push(state.mean - col);
    }
    SigmaPoints {
        points,
        w0: kappa / scale,
        wi: 0.5 / scale,
    }
}

fn cholesky_with_jitter(m: &StateMatrix) -> Cholesky<f64, nalgebra::Const<STATE_DIM>> {
    let mut jitter = 0.0;
    loop {
        let mut a = *m;
        if jitter > 0.0 {
            for i in 0..STATE_DIM {
                a[(i, i)] += jitter;
            }
        }
        if let Some(c) = Cholesky::new(a) {
            return c;
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 100.0 };
        assert!(jitter < 1.0, "covariance irreparably non-PSD");
    }
}

/// Unscented moments of the projected box measurement: predictive mean,
/// innovation covariance (without measurement noise) and state-measurement
/// cross covariance.
pub struct ProjectedMoments {
    pub z_mean: Vector4<f64>,
    pub s_zz: Matrix4<f64>,
    pub c_xz: SMatrix<f64, STATE_DIM, 4>,
    pub mean_box: BoundingBox,
}

pub fn project_state_moments(
    cam: &CameraModel,
    state: &KinematicState,
    kappa: f64,
) -> Result<ProjectedMoments, GeometryError> {
    let sp = sigma_points(state, kappa);
    let mut boxes = Vec::with_capacity(sp.points.len());
    for p in &sp.points {
        let e = Ellipsoid {
            center: nalgebra::Vector3::new(p[0], p[2], p[4]),
            log_half_lengths: nalgebra::Vector3::new(p[6], p[7], p[8]),
        };
        boxes.push(project_ellipsoid(cam, &e)?.as_vector());
    }
    let weight = |i: usize| if i == 0 { sp.w0 } else { sp.wi };
    let mut z_mean = Vector4::zeros();
    for (i, z) in boxes.iter().enumerate() {
        z_mean += weight(i) * z;
    }
    let mut s_zz = Matrix4::zeros();
    let mut c_xz = SMatrix::<f64, STATE_DIM, 4>::zeros();
    for (i, z) in boxes.iter().enumerate() {
        let dz = z - z_mean;
        let dx = sp.points[i] - state.mean;
        s_zz += weight(i) * dz * dz.transpose();
        c_xz += weight(i) * dx * dz.transpose();
    }
    Ok(ProjectedMoments {
        z_mean,
        s_zz,
        c_xz,
        mean_box: BoundingBox::from_vector(&boxes[0]),
    })
}

fn gaussian4_logpdf(z: &Vector4<f64>, mean: &Vector4<f64>, cov: &Matrix4<f64>) -> f64 {
    let chol = match Cholesky::new(*cov) {
        Some(c) => c,
        None => {
            let mut a = *cov;
            for i in 0..4 {
                a[(i, i)] += 1e-9;
            }
            Cholesky::new(a).expect("measurement covariance non-PSD")
        }
    };
    let diff = z - mean;
    let sol = chol.solve(&diff);
    let quad = diff.dot(&sol);
    let logdet: f64 = (0..4).map(|i| chol.l()[(i, i)].ln()).sum::<f64>() * 2.0;
    -0.5 * (quad + logdet) - 2.0 * (2.0 * std::f64::consts::PI).ln()
}

/// Predictive log-likelihood of a box measurement under the state density:
/// `log N(z; z_hat, S_UT + R)`. Unprojectable states yield `-inf`
/// (likelihood zero).
pub fn box_log_likelihood(
    cam: &CameraModel,
    state: &KinematicState,
    z: &BoundingBox,
    noise: &SensorNoise,
    kappa: f64,
) -> f64 {
    match project_state_moments(cam, state, kappa) {
        Ok(m) => {
            let r = noise.for_predicted(&m.mean_box);
            let s = m.s_zz + Matrix4::from_diagonal(&r);
            gaussian4_logpdf(&z.as_vector(), &m.z_mean, &s)
        }
        Err(_) => f64::NEG_INFINITY,
    }
}

pub fn box_likelihood(
    cam: &CameraModel,
    state: &KinematicState,
    z: &BoundingBox,
    noise: &SensorNoise,
    kappa: f64,
) -> f64 {
    box_log_likelihood(cam, state, z, noise, kappa).exp()
}

/// Unscented Kalman update of the state with one box measurement.
pub fn ukf_update(
    cam: &CameraModel,
    state: &KinematicState,
    z: &BoundingBox,
    noise: &SensorNoise,
    kappa: f64,
) -> Result<KinematicState, GeometryError> {
    let m = project_state_moments(cam, state, kappa)?;
    let r = noise.for_predicted(&m.mean_box);
    let s = m.s_zz + Matrix4::from_diagonal(&r);
    let chol = Cholesky::new(s).ok_or(GeometryError::DegenerateConic { camera: cam.id })?;
    // K = C_xz S^-1 via solving S K^T = C_xz^T.
    let kt = chol.solve(&m.c_xz.transpose());
    let k = kt.transpose();
    let innov = z.as_vector() - m.z_mean;
    let mean = state.mean + k * innov;
    let cov = state.cov - k * s * k.transpose();
    let mut out = KinematicState::new(mean, cov);
    out.symmetrize();
    Ok(out)
}
