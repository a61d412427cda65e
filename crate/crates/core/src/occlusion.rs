//! State-dependent detection probability: the box-overlap (IoA) occlusion
//! model, plus line-of-sight and constant baselines for ablations.
//!
//! An object can only be occluded by objects in front of it. The occlusion
//! score is the fraction of its projected box covered by the union of the
//! front objects' boxes; the detection probability decreases with that
//! score, capped to `[epsilon, 1 - epsilon]`.

use crate::geometry::{project_ellipsoid, BoundingBox, CameraModel, Ellipsoid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionModel {
    /// Intersection-over-area of front boxes (partial occlusion aware).
    Ioa,
    /// Line-of-sight baseline: occluded iff the box center lies inside a
    /// front box.
    Los,
    /// State-independent constant.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontRule {
    /// Boxes with lower bottom edges (larger image y) are closer to the
    /// camera; valid when objects share the ground plane.
    BottomCorner,
    /// Compare Euclidean distances to the camera center.
    CameraDistance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OcclusionConfig {
    pub model: OcclusionModel,
    /// Detection probability cap parameter, in (0, 0.5).
    pub epsilon: f64,
    /// Used by the constant model.
    pub constant_pd: f64,
    pub front_rule: FrontRule,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            model: OcclusionModel::Ioa,
            epsilon: 0.05,
            constant_pd: 0.95,
            front_rule: FrontRule::BottomCorner,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn from_box(b: &BoundingBox) -> Self {
        Self {
            x0: b.x_min(),
            x1: b.x_max(),
            y0: b.y_min(),
            y1: b.y_max(),
        }
    }

    fn clip_to(&self, other: &Rect) -> Option<Rect> {
        let r = Rect {
            x0: self.x0.max(other.x0),
            x1: self.x1.min(other.x1),
            y0: self.y0.max(other.y0),
            y1: self.y1.min(other.y1),
        };
        (r.x0 < r.x1 && r.y0 < r.y1).then_some(r)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }
}

/// Fraction of `target` covered by the union of `front` rectangles, exact to
/// float precision via a coordinate sweep over x-slabs.
pub fn coverage_fraction(target: &Rect, front: &[Rect]) -> f64 {
    let t_area = target.area();
    if t_area <= 0.0 {
        return 0.0;
    }
    let clipped: Vec<Rect> = front.iter().filter_map(|r| r.clip_to(target)).collect();
    if clipped.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = clipped.iter().flat_map(|r| [r.x0, r.x1]).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();

    let mut covered = 0.0;
    for w in xs.windows(2) {
        let (xa, xb) = (w[0], w[1]);
        if xb <= xa {
            continue;
        }
        let xm = 0.5 * (xa + xb);
        // Union of y-intervals of rects spanning this slab.
        let mut ys: Vec<(f64, f64)> = clipped
            .iter()
            .filter(|r| r.x0 <= xm && xm < r.x1)
            .map(|r| (r.y0, r.y1))
            .collect();
        if ys.is_empty() {
            continue;
        }
        ys.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut len = 0.0;
        let (mut lo, mut hi) = ys[0];
        for &(a, b) in &ys[1..] {
            if a > hi {
                len += hi - lo;
                lo = a;
                hi = b;
            } else {
                hi = hi.max(b);
            }
        }
        len += hi - lo;
        covered += len * (xb - xa);
    }
    (covered / t_area).clamp(0.0, 1.0)
}

/// Indices of `others` that are in front of `target` with respect to the
/// camera. Unprojectable objects are excluded.
pub fn front_set(
    cam: &CameraModel,
    target: &Ellipsoid,
    others: &[Ellipsoid],
    rule: FrontRule,
) -> Vec<usize> {
    match rule {
        FrontRule::BottomCorner => {
            let Ok(tb) = project_ellipsoid(cam, target) else {
                return vec![];
            };
            others
                .iter()
                .enumerate()
                .filter_map(|(i, o)| {
                    project_ellipsoid(cam, o)
                        .ok()
                        .filter(|b| b.y_max() > tb.y_max())
                        .map(|_| i)
                })
                .collect()
        }
        FrontRule::CameraDistance => {
            let Some(c) = cam.center() else {
                return vec![];
            };
            let td = (target.center - c).norm();
            others
                .iter()
                .enumerate()
                .filter(|(_, o)| {
                    project_ellipsoid(cam, o).is_ok() && (o.center - c).norm() < td
                })
                .map(|(i, _)| i)
                .collect()
        }
    }
}

/// Occlusion score O in [0, 1]: covered fraction of the target's projected
/// box by the boxes of the objects in front of it.
pub fn occlusion_score(
    cam: &CameraModel,
    target: &Ellipsoid,
    others: &[Ellipsoid],
    rule: FrontRule,
) -> f64 {
    let Ok(tb) = project_ellipsoid(cam, target) else {
        return 0.0;
    };
    let front = front_set(cam, target, others, rule);
    let rects: Vec<Rect> = front
        .iter()
        .filter_map(|&i| project_ellipsoid(cam, &others[i]).ok())
        .map(|b| Rect::from_box(&b))
        .collect();
    coverage_fraction(&Rect::from_box(&tb), &rects)
}

/// Detection probability of `target` among `others` for one camera.
pub fn detection_probability(
    cam: &CameraModel,
    target: &Ellipsoid,
    others: &[Ellipsoid],
    cfg: &OcclusionConfig,
) -> f64 {
    let eps = cfg.epsilon;
    match cfg.model {
        OcclusionModel::Constant => cfg.constant_pd,
        OcclusionModel::Ioa => {
            let o = occlusion_score(cam, target, others, cfg.front_rule);
            (1.0 - eps - o).max(eps)
        }
        OcclusionModel::Los => {
            let Ok(tb) = project_ellipsoid(cam, target) else {
                return eps;
            };
            let c = tb.center;
            let blocked = front_set(cam, target, others, cfg.front_rule)
                .into_iter()
                .filter_map(|i| project_ellipsoid(cam, &others[i]).ok())
                .any(|b| Rect::from_box(&b).contains(c.x, c.y));
            if blocked {
                eps
            } else {
                1.0 - eps
            }
        }
    }
}
