//! Trajectory evaluation: OSPA(2) with Euclidean or normalized 3D-GIoU base
//! distances, CLEAR-MOT (MOTA/FP/FN/IDS plus MT/PT/ML), and IDF1.

use crate::assignment::{max_score_assignment, min_cost_assignment};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub position: Vector3<f64>,
    pub half_lengths: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub id: String,
    pub points: BTreeMap<u32, TrajectoryPoint>,
}

impl Trajectory {
    pub fn first_frame(&self) -> Option<u32> {
        self.points.keys().next().copied()
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.points.keys().next_back().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseDistance {
    Euclidean,
    Giou3d,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub base: BaseDistance,
    /// OSPA cutoff c: 1 m Euclidean, 1.0 GIoU.
    pub cutoff: f64,
    /// Frame-matching threshold: 1 m Euclidean, 0.5 GIoU distance.
    pub assoc_threshold: f64,
    /// Evaluate 2D ground-plane positions instead of 3D.
    pub ground_plane: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            base: BaseDistance::Euclidean,
            cutoff: 1.0,
            assoc_threshold: 1.0,
            ground_plane: false,
        }
    }
}

impl EvalConfig {
    pub fn giou() -> Self {
        Self {
            base: BaseDistance::Giou3d,
            cutoff: 1.0,
            assoc_threshold: 0.5,
            ground_plane: false,
        }
    }
}

/// Axis-aligned 3D box.
#[derive(Debug, Clone, Copy)]
pub struct Box3 {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Box3 {
    pub fn from_ellipsoid(p: &TrajectoryPoint) -> Self {
        Self {
            min: p.position - p.half_lengths,
            max: p.position + p.half_lengths,
        }
    }

    fn volume(&self) -> f64 {
        (self.max - self.min).iter().map(|d| d.max(0.0)).product()
    }
}

/// Normalized GIoU distance `(1 - GIoU)/2` in [0, 1] between axis-aligned
/// 3D boxes, with `GIoU = IoU - |hull \ union| / |hull|`.
pub fn giou_distance(a: &Box3, b: &Box3) -> f64 {
    let inter = Box3 {
        min: a.min.sup(&b.min),
        max: a.max.inf(&b.max),
    };
    let vi = inter.volume();
    let union = a.volume() + b.volume() - vi;
    let hull = Box3 {
        min: a.min.inf(&b.min),
        max: a.max.sup(&b.max),
    };
    let vh = hull.volume();
    if union <= 0.0 || vh <= 0.0 {
        return 1.0;
    }
    let giou = vi / union - (vh - union) / vh;
    ((1.0 - giou) / 2.0).clamp(0.0, 1.0)
}

fn point_distance(a: &TrajectoryPoint, b: &TrajectoryPoint, cfg: &EvalConfig) -> f64 {
    match cfg.base {
        BaseDistance::Euclidean => {
            if cfg.ground_plane {
                let d = a.position.xy() - b.position.xy();
                d.norm()
            } else {
                (a.position - b.position).norm()
            }
        }
        BaseDistance::Giou3d => {
            giou_distance(&Box3::from_ellipsoid(a), &Box3::from_ellipsoid(b))
        }
    }
}

/// Time-averaged per-pair base distance over the window: cutoff where
/// exactly one of the pair exists, zero where neither does.
fn track_pair_distance(a: &Trajectory, b: &Trajectory, window: (u32, u32), cfg: &EvalConfig) -> f64 {
    let (k0, k1) = window;
    debug_assert!(k1 >= k0);
    let mut total = 0.0;
    for k in k0..=k1 {
        match (a.points.get(&k), b.points.get(&k)) {
            (Some(pa), Some(pb)) => total += point_distance(pa, pb, cfg).min(cfg.cutoff),
            (None, None) => {}
            _ => total += cfg.cutoff,
        }
    }
    total / (k1 - k0 + 1) as f64
}

/// OSPA(2) of order 1 between trajectory sets over a frame window.
pub fn ospa2(est: &[Trajectory], truth: &[Trajectory], window: (u32, u32), cfg: &EvalConfig) -> f64 {
    let present = |t: &&Trajectory| {
        t.points
            .range(window.0..=window.1)
            .next()
            .is_some()
    };
    let est: Vec<&Trajectory> = est.iter().filter(present).collect();
    let truth: Vec<&Trajectory> = truth.iter().filter(present).collect();
    let (m, n) = (est.len(), truth.len());
    if m == 0 && n == 0 {
        return 0.0;
    }
    let n_max = m.max(n) as f64;
    if m == 0 || n == 0 {
        return cfg.cutoff;
    }
    let cost: Vec<Vec<f64>> = est
        .iter()
        .map(|e| {
            truth
                .iter()
                .map(|t| track_pair_distance(e, t, window, cfg))
                .collect()
        })
        .collect();
    let assign = min_cost_assignment(&cost);
    let matched: f64 = assign
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[r][c]))
        .sum();
    (matched + cfg.cutoff * (n_max - m.min(n) as f64)) / n_max
}

/// OSPA(2) evaluated over the growing window from `k0` to each frame.
pub fn ospa2_curve(
    est: &[Trajectory],
    truth: &[Trajectory],
    k0: u32,
    k1: u32,
    cfg: &EvalConfig,
) -> Vec<(u32, f64)> {
    (k0..=k1)
        .map(|k| (k, ospa2(est, truth, (k0, k), cfg)))
        .collect()
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct ClearMotResult {
    pub mota: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ids: usize,
    pub mt: usize,
    pub pt: usize,
    pub ml: usize,
    pub n_truth: usize,
    pub total_truth_points: usize,
}

const GATE: f64 = 1e9;

/// Frame-wise CLEAR-MOT with sticky matching: existing pairs persist while
/// within the threshold, the rest rematch by min-cost assignment per frame.
pub fn clear_mot(est: &[Trajectory], truth: &[Trajectory], cfg: &EvalConfig) -> ClearMotResult {
    let frames: std::collections::BTreeSet<u32> = truth
        .iter()
        .chain(est.iter())
        .flat_map(|t| t.points.keys().copied())
        .collect();
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut ids = 0usize;
    let mut total_truth = 0usize;
    // truth id -> currently matched est id
    let mut current: BTreeMap<usize, usize> = BTreeMap::new();
    // truth id -> last est id ever matched (for ID switch counting)
    let mut last_match: BTreeMap<usize, usize> = BTreeMap::new();
    // truth id -> frames covered by a match
    let mut covered: BTreeMap<usize, usize> = BTreeMap::new();

    for &k in &frames {
        let t_here: Vec<usize> = truth
            .iter()
            .enumerate()
            .filter(|(_, t)| t.points.contains_key(&k))
            .map(|(i, _)| i)
            .collect();
        let e_here: Vec<usize> = est
            .iter()
            .enumerate()
            .filter(|(_, e)| e.points.contains_key(&k))
            .map(|(i, _)| i)
            .collect();
        total_truth += t_here.len();

        let dist = |ti: usize, ei: usize| {
            point_distance(&truth[ti].points[&k], &est[ei].points[&k], cfg)
        };

        // Keep sticky pairs that are still valid.
        let mut matched_t: BTreeMap<usize, usize> = BTreeMap::new();
        let mut used_e: std::collections::BTreeSet<usize> = std::collections::BTreeSet::new();
        for (&ti, &ei) in current.iter() {
            if t_here.contains(&ti)
                && e_here.contains(&ei)
                && dist(ti, ei) <= cfg.assoc_threshold
            {
                matched_t.insert(ti, ei);
                used_e.insert(ei);
            }
        }
        // Assign the rest.
        let free_t: Vec<usize> = t_here
            .iter()
            .copied()
            .filter(|t| !matched_t.contains_key(t))
            .collect();
        let free_e: Vec<usize> = e_here
            .iter()
            .copied()
            .filter(|e| !used_e.contains(e))
            .collect();
        if !free_t.is_empty() && !free_e.is_empty() {
            let cost: Vec<Vec<f64>> = free_t
                .iter()
                .map(|&ti| {
                    free_e
                        .iter()
                        .map(|&ei| {
                            let d = dist(ti, ei);
                            if d <= cfg.assoc_threshold {
                                d
                            } else {
                                GATE
                            }
                        })
                        .collect()
                })
                .collect();
            for (r, c) in min_cost_assignment(&cost).iter().enumerate() {
                if let Some(c) = c {
                    if cost[r][*c] < GATE {
                        matched_t.insert(free_t[r], free_e[*c]);
                        used_e.insert(free_e[*c]);
                    }
                }
            }
        }

        for (&ti, &ei) in &matched_t {
            if let Some(&prev) = last_match.get(&ti) {
                if prev != ei {
                    ids += 1;
                }
            }
            last_match.insert(ti, ei);
            *covered.entry(ti).or_insert(0) += 1;
        }
        fn_ += t_here.len() - matched_t.len();
        fp += e_here.len() - used_e.len();
        current = matched_t;
    }

    let mut mt = 0;
    let mut pt = 0;
    let mut ml = 0;
    for (ti, t) in truth.iter().enumerate() {
        let n = t.points.len();
        if n == 0 {
            continue;
        }
        let cov = *covered.get(&ti).unwrap_or(&0) as f64 / n as f64;
        if cov >= 0.8 {
            mt += 1;
        } else if cov <= 0.2 {
            ml += 1;
        } else {
            pt += 1;
        }
    }

    let mota = if total_truth > 0 {
        1.0 - (fp + fn_ + ids) as f64 / total_truth as f64
    } else {
        1.0
    };
    ClearMotResult {
        mota,
        fp,
        fn_,
        ids,
        mt,
        pt,
        ml,
        n_truth: truth.len(),
        total_truth_points: total_truth,
    }
}

/// IDF1: global one-to-one identity matching maximizing per-pair frame
/// overlap within the threshold.
pub fn idf1(est: &[Trajectory], truth: &[Trajectory], cfg: &EvalConfig) -> f64 {
    let total_truth: usize = truth.iter().map(|t| t.points.len()).sum();
    let total_est: usize = est.iter().map(|t| t.points.len()).sum();
    if total_truth + total_est == 0 {
        return 1.0;
    }
    if truth.is_empty() || est.is_empty() {
        return 0.0;
    }
    let overlap: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| {
            est.iter()
                .map(|e| {
                    t.points
                        .iter()
                        .filter(|(k, tp)| {
                            e.points
                                .get(k)
                                .is_some_and(|ep| point_distance(tp, ep, cfg) <= cfg.assoc_threshold)
                        })
                        .count() as f64
                })
                .collect()
        })
        .collect();
    let assign = max_score_assignment(&overlap);
    let idtp: f64 = assign
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| overlap[r][c]))
        .sum();
    2.0 * idtp / (total_truth + total_est) as f64
}

/// Full metric report for one run.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub clear: ClearMotResult,
    pub idf1: f64,
    pub ospa2: f64,
    pub window: (u32, u32),
}

pub fn evaluate(est: &[Trajectory], truth: &[Trajectory], cfg: &EvalConfig) -> MetricsReport {
    let k0 = truth
        .iter()
        .chain(est.iter())
        .filter_map(|t| t.first_frame())
        .min()
        .unwrap_or(0);
    let k1 = truth
        .iter()
        .chain(est.iter())
        .filter_map(|t| t.last_frame())
        .max()
        .unwrap_or(0);
    MetricsReport {
        clear: clear_mot(est, truth, cfg),
        idf1: idf1(est, truth, cfg),
        ospa2: ospa2(est, truth, (k0, k1), cfg),
        window: (k0, k1),
    }
}
