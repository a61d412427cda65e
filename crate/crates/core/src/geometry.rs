//! Camera models, ellipsoid-to-box projection and ground-plane back-projection.
//!
//! Objects are axis-aligned 3D ellipsoids in the world frame; a camera
//! observes the axis-aligned bounding box of the projected ellipsoid outline.
//! The projection goes through the dual quadric: the ellipsoid's dual
//! `Q*` maps to the dual image conic `C* = P Q* Pᵀ`, whose axis-aligned
//! tangent lines give the box bounds in closed form.

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ProjectionMatrix = nalgebra::SMatrix<f64, 3, 4>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    /// Ellipsoid center is on or behind the camera's principal plane.
    #[error("ellipsoid center has non-positive depth in camera {camera}")]
    NonPositiveDepth { camera: usize },
    /// The projected dual conic has no real axis-aligned tangents
    /// (part of the ellipsoid crosses the principal plane).
    #[error("degenerate conic projection in camera {camera}")]
    DegenerateConic { camera: usize },
    /// Homogeneous w-component vanished during back-projection.
    #[error("back-projected point at infinity")]
    PointAtInfinity,
}

/// Axis-aligned image bounding box with log-parameterized extent.
///
/// `log_extent` holds the natural logs of width and height in pixels, so the
/// extent is strictly positive by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub center: Vector2<f64>,
    pub log_extent: Vector2<f64>,
}

impl BoundingBox {
    pub fn from_center_size(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            center: Vector2::new(cx, cy),
            log_extent: Vector2::new(w.ln(), h.ln()),
        }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::from_center_size(0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0)
    }

    pub fn width(&self) -> f64 {
        self.log_extent.x.exp()
    }

    pub fn height(&self) -> f64 {
        self.log_extent.y.exp()
    }

    pub fn x_min(&self) -> f64 {
        self.center.x - 0.5 * self.width()
    }

    pub fn x_max(&self) -> f64 {
        self.center.x + 0.5 * self.width()
    }

    pub fn y_min(&self) -> f64 {
        self.center.y - 0.5 * self.height()
    }

    pub fn y_max(&self) -> f64 {
        self.center.y + 0.5 * self.height()
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Bottom-center point `(cx, cy + h/2)`; image y grows downward, so this
    /// is where the object meets the ground.
    pub fn bottom_center(&self) -> Vector2<f64> {
        Vector2::new(self.center.x, self.center.y + 0.5 * self.height())
    }

    /// Measurement-space vector `[cx, cy, log w, log h]`.
    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(
            self.center.x,
            self.center.y,
            self.log_extent.x,
            self.log_extent.y,
        )
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            center: Vector2::new(v.x, v.y),
            log_extent: Vector2::new(v.z, v.w),
        }
    }
}

/// Axis-aligned ellipsoid: center plus log half-lengths of the principal axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub center: Vector3<f64>,
    pub log_half_lengths: Vector3<f64>,
}

impl Ellipsoid {
    pub fn new(center: Vector3<f64>, half_lengths: Vector3<f64>) -> Self {
        Self {
            center,
            log_half_lengths: half_lengths.map(f64::ln),
        }
    }

    pub fn half_lengths(&self) -> Vector3<f64> {
        self.log_half_lengths.map(f64::exp)
    }
}

/// Calibrated camera: projection matrix, image bounds, ground-plane
/// homography, clutter rate and an on/off frame schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraModel {
    pub id: usize,
    /// 3x4 projection, world meters (homogeneous) to pixels.
    pub projection: ProjectionMatrix,
    pub image_width: f64,
    pub image_height: f64,
    /// 3x3 homography, image pixels (homogeneous) to ground-plane meters.
    pub ground_homography: Matrix3<f64>,
    /// Expected false positives per frame.
    pub clutter_rate: f64,
    /// Inclusive `[start, end]` frame intervals during which the camera is
    /// on. Empty means always on.
    #[serde(default)]
    pub schedule: Vec<(u32, u32)>,
}

impl CameraModel {
    pub fn is_active(&self, frame: u32) -> bool {
        self.schedule.is_empty() || self.schedule.iter().any(|&(s, e)| frame >= s && frame <= e)
    }

    /// Camera center in world coordinates, `-M⁻¹ p4` for `P = [M | p4]`.
    pub fn center(&self) -> Option<Vector3<f64>> {
        let m = self.projection.fixed_view::<3, 3>(0, 0).into_owned();
        let p4 = self.projection.column(3).into_owned();
        m.try_inverse().map(|mi| -(mi * p4))
    }

    /// Depth of a world point along the principal axis (third row of P).
    pub fn depth(&self, point: &Vector3<f64>) -> f64 {
        let r = self.projection.row(2);
        r[0] * point.x + r[1] * point.y + r[2] * point.z + r[3]
    }

    /// Checks that `ground_homography` inverts the restriction of the
    /// projection to the z=0 plane, within `tol` meters, over a small grid of
    /// ground points in front of the camera.
    pub fn validate_ground_consistency(&self, tol: f64) -> Result<(), String> {
        let mut checked = 0usize;
        for &x in &[-4.0, -1.0, 0.5, 2.0, 5.0] {
            for &y in &[-4.0, -0.5, 1.0, 3.0, 6.0] {
                let g = Vector3::new(x, y, 0.0);
                if self.depth(&g) <= 1e-6 {
                    continue;
                }
                let px = self.projection * Vector4::new(x, y, 0.0, 1.0);
                if px.z.abs() < 1e-12 {
                    continue;
                }
                let img = Vector3::new(px.x / px.z, px.y / px.z, 1.0);
                let back = self.ground_homography * img;
                if back.z.abs() < 1e-12 {
                    return Err(format!("camera {}: homography degenerate at ({x},{y})", self.id));
                }
                let gx = back.x / back.z;
                let gy = back.y / back.z;
                if (gx - x).abs() > tol || (gy - y).abs() > tol {
                    return Err(format!(
                        "camera {}: P/H ground round trip off by ({:.2e},{:.2e}) at ({x},{y})",
                        self.id,
                        gx - x,
                        gy - y
                    ));
                }
                checked += 1;
            }
        }
        if checked == 0 {
            return Err(format!("camera {}: no testable ground points", self.id));
        }
        Ok(())
    }
}

/// Projects an ellipsoid to the axis-aligned bounding box of its image
/// outline via the dual quadric.
///
/// Fails if the ellipsoid center is behind the camera or the outline conic
/// has no real axis-aligned tangents.
pub fn project_ellipsoid(cam: &CameraModel, e: &Ellipsoid) -> Result<BoundingBox, GeometryError> {
    if cam.depth(&e.center) <= 1e-9 {
        return Err(GeometryError::NonPositiveDepth { camera: cam.id });
    }

    let h = e.half_lengths();
    // Dual quadric of the centered ellipsoid, then translated:
    // Q* = T diag(a^2, b^2, c^2, -1) T^T with T = [[I, c], [0, 1]].
    let mut q = Matrix4::zeros();
    q[(0, 0)] = h.x * h.x;
    q[(1, 1)] = h.y * h.y;
    q[(2, 2)] = h.z * h.z;
    q[(3, 3)] = -1.0;
    let mut t = Matrix4::identity();
    t[(0, 3)] = e.center.x;
    t[(1, 3)] = e.center.y;
    t[(2, 3)] = e.center.z;
    let q_world = t * q * t.transpose();

    let c = cam.projection * q_world * cam.projection.transpose();

    // Tangent lines x = const satisfy l^T C* l = 0 with l = (1, 0, -x);
    // likewise for y with l = (0, 1, -y).
    let c22 = c[(2, 2)];
    if c22.abs() < 1e-12 {
        return Err(GeometryError::DegenerateConic { camera: cam.id });
    }
    let disc_x = c[(0, 2)] * c[(0, 2)] - c[(0, 0)] * c22;
    let disc_y = c[(1, 2)] * c[(1, 2)] - c[(1, 1)] * c22;
    if disc_x <= 0.0 || disc_y <= 0.0 {
        return Err(GeometryError::DegenerateConic { camera: cam.id });
    }
    let sx = disc_x.sqrt();
    let sy = disc_y.sqrt();
    let x0 = (c[(0, 2)] - sx) / c22;
    let x1 = (c[(0, 2)] + sx) / c22;
    let y0 = (c[(1, 2)] - sy) / c22;
    let y1 = (c[(1, 2)] + sy) / c22;

    Ok(BoundingBox::from_corners(
        x0.min(x1),
        y0.min(y1),
        x0.max(x1),
        y0.max(y1),
    ))
}

/// Maps the bottom-center of a box through the ground homography, returning
/// ground-plane `(x, y)` in meters.
pub fn ground_point(cam: &CameraModel, b: &BoundingBox) -> Result<Vector2<f64>, GeometryError> {
    let bc = b.bottom_center();
    let g = cam.ground_homography * Vector3::new(bc.x, bc.y, 1.0);
    if g.z.abs() < 1e-12 {
        return Err(GeometryError::PointAtInfinity);
    }
    Ok(Vector2::new(g.x / g.z, g.y / g.z))
}
