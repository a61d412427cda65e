//! Single-object dynamics: nearly constant-velocity kinematics plus a
//! random-walk over log half-lengths, and the survival probability model.
//!
//! The 9-D attribute vector is ordered `[px, vx, py, vy, pz, vz, s1, s2, s3]`
//! (positions/velocities interleaved per axis, then log shape). This ordering
//! is a hard contract for serialization and matches the block structure of
//! the transition matrix `I3 (x) [[1, T], [0, 1]]`.

use crate::geometry::Ellipsoid;
use nalgebra::{SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

pub const STATE_DIM: usize = 9;
pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;

/// Gaussian attribute density over the 9-D state.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    pub mean: StateVector,
    pub cov: StateMatrix,
}

impl KinematicState {
    pub fn new(mean: StateVector, cov: StateMatrix) -> Self {
        Self { mean, cov }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.mean[0], self.mean[2], self.mean[4])
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.mean[1], self.mean[3], self.mean[5])
    }

    pub fn log_shape(&self) -> Vector3<f64> {
        Vector3::new(self.mean[6], self.mean[7], self.mean[8])
    }

    pub fn ellipsoid(&self) -> Ellipsoid {
        Ellipsoid {
            center: self.position(),
            log_half_lengths: self.log_shape(),
        }
    }

    /// Builds a state vector from position, velocity and log shape.
    pub fn pack(pos: Vector3<f64>, vel: Vector3<f64>, log_shape: Vector3<f64>) -> StateVector {
        StateVector::from_column_slice(&[
            pos.x, vel.x, pos.y, vel.y, pos.z, vel.z, log_shape.x, log_shape.y, log_shape.z,
        ])
    }

    pub fn symmetrize(&mut self) {
        self.cov = 0.5 * (self.cov + self.cov.transpose());
    }
}

/// Parameters of the transition density and survival model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionParams {
    /// Sampling period T in seconds (frames are one period apart).
    pub period: f64,
    /// Position process-noise variances per axis, m^2.
    pub pos_noise_var: [f64; 3],
    /// Log-shape noise variances per axis.
    pub shape_noise_var: [f64; 3],
    /// Constant survival probability inside the scene.
    pub survival_probability: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            period: 1.0,
            pos_noise_var: [0.0012, 0.0012, 0.0012],
            shape_noise_var: [0.0036, 0.0036, 0.0004],
            survival_probability: 0.99,
        }
    }
}

impl MotionParams {
    /// Transition matrix F: per-axis [[1, T], [0, 1]] blocks, identity on the
    /// shape block.
    pub fn transition_matrix(&self) -> StateMatrix {
        let mut f = StateMatrix::identity();
        for axis in 0..3 {
            f[(2 * axis, 2 * axis + 1)] = self.period;
        }
        f
    }

    /// Drift b = [0_6; -shape_var/2]. The negative half-variance drift makes
    /// the multiplicative half-length factor exp(ds) unit-mean.
    pub fn drift(&self) -> StateVector {
        let mut b = StateVector::zeros();
        for i in 0..3 {
            b[6 + i] = -0.5 * self.shape_noise_var[i];
        }
        b
    }

    /// Process noise Q: per-axis var * [T^2/2; T][T^2/2, T] kinematic blocks
    /// and diag(shape_var) on the shape block.
    pub fn process_noise(&self) -> StateMatrix {
        let t = self.period;
        let g = Vector2::new(0.5 * t * t, t);
        let block = g * g.transpose();
        let mut q = StateMatrix::zeros();
        for axis in 0..3 {
            let v = self.pos_noise_var[axis];
            for r in 0..2 {
                for c in 0..2 {
                    q[(2 * axis + r, 2 * axis + c)] = v * block[(r, c)];
                }
            }
            q[(6 + axis, 6 + axis)] = self.shape_noise_var[axis];
        }
        q
    }
}

/// One step of the linear-Gaussian transition: mean <- F x + b,
/// cov <- F P Fᵀ + Q.
pub fn predict(state: &KinematicState, params: &MotionParams) -> KinematicState {
    let f = params.transition_matrix();
    let mean = f * state.mean + params.drift();
    let cov = f * state.cov * f.transpose() + params.process_noise();
    let mut out = KinematicState::new(mean, cov);
    out.symmetrize();
    out
}

/// Rectangular scene bounds on the ground plane with a boundary margin.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
    /// Objects closer than this to the boundary (or outside) get half the
    /// survival probability.
    pub margin: f64,
}

impl Default for SceneBounds {
    fn default() -> Self {
        Self {
            min: [0.0, 0.0],
            max: [10.0, 7.0],
            margin: 0.5,
        }
    }
}

impl SceneBounds {
    pub fn interior_contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] + self.margin
            && x <= self.max[0] - self.margin
            && y >= self.min[1] + self.margin
            && y <= self.max[1] - self.margin
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }
}

/// Survival probability: the configured constant in the scene interior,
/// halved within the boundary margin or outside.
pub fn survival_probability(
    state: &KinematicState,
    params: &MotionParams,
    bounds: &SceneBounds,
) -> f64 {
    let p = state.position();
    if bounds.interior_contains(p.x, p.y) {
        params.survival_probability
    } else {
        0.5 * params.survival_probability
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn drift_vanishes_without_shape_noise() {
        let params = MotionParams {
            shape_noise_var: [0.0, 0.0, 0.0],
            ..Default::default()
        };
        let mean = KinematicState::pack(
            Vector3::new(1.0, 2.0, 0.9),
            Vector3::zeros(),
            Vector3::new(-1.2, -1.2, -0.1),
        );
        let s = KinematicState::new(mean, StateMatrix::identity() * 0.01);
        let out = predict(&s, &params);
        assert_relative_eq!(out.position(), s.position(), epsilon = 1e-12);
        assert_relative_eq!(out.log_shape(), s.log_shape(), epsilon = 1e-12);
    }

    #[test]
    fn process_noise_matches_kronecker_form() {
        // Default indoor-scale noise settings.
        let params = MotionParams {
            period: 1.0,
            pos_noise_var: [0.0012, 0.0012, 0.0012],
            shape_noise_var: [0.0036, 0.0036, 0.0004],
            survival_probability: 0.99,
        };
        let q = params.process_noise();
        let t: f64 = 1.0;
        for axis in 0..3 {
            let v = params.pos_noise_var[axis];
            let expect = [
                [v * t.powi(4) / 4.0, v * t.powi(3) / 2.0],
                [v * t.powi(3) / 2.0, v * t * t],
            ];
            for r in 0..2 {
                for c in 0..2 {
                    assert_relative_eq!(q[(2 * axis + r, 2 * axis + c)], expect[r][c]);
                }
            }
            assert_relative_eq!(q[(6 + axis, 6 + axis)], params.shape_noise_var[axis]);
        }
        // Off-block entries are zero.
        assert_eq!(q[(0, 2)], 0.0);
        assert_eq!(q[(5, 6)], 0.0);
    }

    #[test]
    fn shape_noise_is_unit_mean_multiplicative() {
        // Monte Carlo check of E[exp(ds)] = 1 per component.
        let params = MotionParams::default();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for i in 0..3 {
            let v = params.shape_noise_var[i];
            let dist = Normal::new(-0.5 * v, v.sqrt()).unwrap();
            let n = 1_000_000;
            let mean: f64 = (0..n).map(|_| dist.sample(&mut rng).exp()).sum::<f64>() / n as f64;
            assert!(
                (mean - 1.0).abs() < 0.005,
                "component {i}: mean factor {mean}"
            );
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let params = MotionParams::default();
        let mut s = KinematicState::new(StateVector::zeros(), StateMatrix::identity() * 0.5);
        for _ in 0..50 {
            s = predict(&s, &params);
        }
        let sym = s.cov - s.cov.transpose();
        assert!(sym.norm() < 1e-12);
        let eig = s.cov.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e > -1e-9));
    }

    #[test]
    fn predict_is_linear_gaussian_in_covariance() {
        let params = MotionParams::default();
        let cov = StateMatrix::identity() * 0.3;
        let a = KinematicState::new(StateVector::zeros(), cov);
        let mut m2 = StateVector::zeros();
        m2[0] = 4.0;
        m2[1] = -1.0;
        let b = KinematicState::new(m2, cov);
        assert_eq!(predict(&a, &params).cov, predict(&b, &params).cov);
    }

    #[test]
    fn survival_zones() {
        let params = MotionParams::default();
        let bounds = SceneBounds::default();
        let center = KinematicState::new(
            KinematicState::pack(
                Vector3::new(5.0, 3.5, 0.9),
                Vector3::zeros(),
                Vector3::zeros(),
            ),
            StateMatrix::identity() * 0.01,
        );
        assert_relative_eq!(
            survival_probability(&center, &params, &bounds),
            params.survival_probability
        );
        let outside = KinematicState::new(
            KinematicState::pack(
                Vector3::new(14.0, 3.5, 0.9),
                Vector3::zeros(),
                Vector3::zeros(),
            ),
            StateMatrix::identity() * 0.01,
        );
        assert_relative_eq!(
            survival_probability(&outside, &params, &bounds),
            0.5 * params.survival_probability
        );
        let near_edge = KinematicState::new(
            KinematicState::pack(
                Vector3::new(0.2, 3.5, 0.9),
                Vector3::zeros(),
                Vector3::zeros(),
            ),
            StateMatrix::identity() * 0.01,
        );
        assert_relative_eq!(
            survival_probability(&near_edge, &params, &bounds),
            0.5 * params.survival_probability
        );
    }
}
