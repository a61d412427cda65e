//! The multi-view GLMB filtering recursion: hypothesis bookkeeping, the
//! joint prediction-update step with Gibbs-sampled multi-view association,
//! the multi-object estimator, and an exhaustive reference enumeration for
//! small instances.

pub mod exhaustive;
mod filter;
mod gibbs;
mod step;
#[cfg(test)]
mod tests;

pub use filter::{MvGlmbFilter, StepReport};

use crate::motion::KinematicState;
use crate::sensing::FeatureProfile;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Time-invariant track label `(birth frame, index within frame)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub birth_frame: u32,
    pub birth_index: u32,
}

impl Label {
    pub fn new(birth_frame: u32, birth_index: u32) -> Self {
        Self {
            birth_frame,
            birth_index,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.birth_frame, self.birth_index)
    }
}

/// Per-camera measurement assignment of one live track; 0 is a miss, j >= 1
/// is the j-th measurement of that camera. Inactive cameras hold 0.
pub type AssocTuple = Vec<u16>;

/// One Gaussian track density in the shared table.
#[derive(Debug, Clone)]
pub struct TrackDensity {
    pub label: Label,
    pub state: KinematicState,
}

/// One GLMB component: a weight, a label set (as table indices) and the
/// latest multi-view association map restricted to that set.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub weight: f64,
    /// Indices into [`GlmbDensity::table`], sorted by label.
    pub tracks: Vec<usize>,
    /// Aligned with `tracks`.
    pub assoc: Vec<AssocTuple>,
}

/// Per-label bookkeeping shared across hypotheses. Feature profiles are
/// committed only from the best hypothesis, so one profile per label.
#[derive(Debug, Clone)]
pub struct TrackMeta {
    pub profile: FeatureProfile,
    /// Number of steps the label has been in the density (never as TT).
    pub e_count: u32,
    pub last_update: u32,
}

/// Weighted set of hypotheses with a shared track-density table.
#[derive(Debug, Clone)]
pub struct GlmbDensity {
    /// Last processed frame.
    pub frame: Option<u32>,
    pub hypotheses: Vec<Hypothesis>,
    pub table: Vec<TrackDensity>,
    pub meta: BTreeMap<Label, TrackMeta>,
}

/// One estimated object: label, ellipsoid mean and velocity.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub label: Label,
    pub position: [f64; 3],
    pub half_lengths: [f64; 3],
    pub velocity: [f64; 3],
}

impl GlmbDensity {
    /// Empty density: one hypothesis with weight one and no tracks.
    pub fn empty() -> Self {
        Self {
            frame: None,
            hypotheses: vec![Hypothesis {
                weight: 1.0,
                tracks: vec![],
                assoc: vec![],
            }],
            table: vec![],
            meta: BTreeMap::new(),
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.hypotheses.iter().map(|h| h.weight).sum()
    }

    pub fn normalize(&mut self) {
        let s = self.weight_sum();
        if s > 0.0 {
            for h in &mut self.hypotheses {
                h.weight /= s;
            }
        }
    }

    pub fn labels_of(&self, hyp: &Hypothesis) -> Vec<Label> {
        hyp.tracks.iter().map(|&i| self.table[i].label).collect()
    }

    /// All labels live in at least one hypothesis.
    pub fn live_labels(&self) -> std::collections::BTreeSet<Label> {
        self.hypotheses
            .iter()
            .flat_map(|h| h.tracks.iter().map(|&i| self.table[i].label))
            .collect()
    }

    /// Prob(|X| = n) for n up to the largest hypothesis.
    pub fn cardinality_distribution(&self) -> Vec<f64> {
        let max_n = self
            .hypotheses
            .iter()
            .map(|h| h.tracks.len())
            .max()
            .unwrap_or(0);
        let mut card = vec![0.0; max_n + 1];
        for h in &self.hypotheses {
            card[h.tracks.len()] += h.weight;
        }
        card
    }

    /// MaM-style estimator: most probable cardinality n* (ties to the
    /// smaller n), then the heaviest hypothesis with |I| = n*, whose track
    /// means become the estimates.
    pub fn extract_estimate(&self) -> Vec<Estimate> {
        if self.hypotheses.is_empty() {
            return vec![];
        }
        let card = self.cardinality_distribution();
        let mut n_star = 0;
        let mut best_p = f64::NEG_INFINITY;
        for (n, &p) in card.iter().enumerate() {
            if p > best_p {
                best_p = p;
                n_star = n;
            }
        }
        let best = self
            .hypotheses
            .iter()
            .filter(|h| h.tracks.len() == n_star)
            .max_by(|a, b| a.weight.partial_cmp(&b.weight).unwrap());
        let Some(best) = best else {
            return vec![];
        };
        let mut out: Vec<Estimate> = best
            .tracks
            .iter()
            .map(|&i| {
                let t = &self.table[i];
                let p = t.state.position();
                let h = t.state.log_shape().map(f64::exp);
                let v = t.state.velocity();
                Estimate {
                    label: t.label,
                    position: [p.x, p.y, p.z],
                    half_lengths: [h.x, h.y, h.z],
                    velocity: [v.x, v.y, v.z],
                }
            })
            .collect();
        out.sort_by_key(|e| e.label);
        out
    }

    /// Highest-weight hypothesis (first on ties, which is deterministic
    /// because hypotheses are stored in sorted order).
    pub fn best_hypothesis(&self) -> Option<&Hypothesis> {
        self.hypotheses
            .iter()
            .max_by(|a, b| a.weight.partial_cmp(&b.weight).unwrap())
    }
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// SplitMix64-style seed mixing for per-(frame, hypothesis) substreams.
pub(crate) fn mix_seed(master: u64, frame: u32, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(frame as u64 + 1))
        .wrapping_add(stream.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn mean_ellipsoid(state: &KinematicState) -> crate::geometry::Ellipsoid {
    crate::geometry::Ellipsoid {
        center: state.position(),
        log_half_lengths: Vector3::new(state.mean[6], state.mean[7], state.mean[8]),
    }
}

#[cfg(test)]
mod density_tests {
    use super::*;
    use crate::motion::{KinematicState, StateMatrix, StateVector};

    fn track(label: Label) -> TrackDensity {
        TrackDensity {
            label,
            state: KinematicState::new(StateVector::zeros(), StateMatrix::identity()),
        }
    }

    #[test]
    fn estimator_single_hypothesis_returns_all_tracks() {
        let mut d = GlmbDensity::empty();
        d.table = vec![
            track(Label::new(0, 0)),
            track(Label::new(0, 1)),
            track(Label::new(1, 0)),
        ];
        d.hypotheses = vec![Hypothesis {
            weight: 1.0,
            tracks: vec![0, 1, 2],
            assoc: vec![vec![0], vec![0], vec![0]],
        }];
        assert_eq!(d.extract_estimate().len(), 3);
    }

    #[test]
    fn estimator_picks_most_probable_cardinality() {
        let mut d = GlmbDensity::empty();
        d.table = (0..3).map(|i| track(Label::new(0, i))).collect();
        d.hypotheses = vec![
            Hypothesis {
                weight: 0.4,
                tracks: vec![0, 1],
                assoc: vec![vec![0], vec![0]],
            },
            Hypothesis {
                weight: 0.35,
                tracks: vec![0, 1, 2],
                assoc: vec![vec![0], vec![0], vec![0]],
            },
            Hypothesis {
                weight: 0.25,
                tracks: vec![0, 2, 1],
                assoc: vec![vec![0], vec![0], vec![0]],
            },
        ];
        // Prob(n=3) = 0.6 > Prob(n=2) = 0.4; the heaviest |I|=3 hypothesis
        // has weight 0.35.
        let est = d.extract_estimate();
        assert_eq!(est.len(), 3);
    }

    #[test]
    fn estimator_empty_hypotheses_yield_empty_estimate() {
        let mut d = GlmbDensity::empty();
        d.hypotheses = vec![
            Hypothesis {
                weight: 0.7,
                tracks: vec![],
                assoc: vec![],
            },
            Hypothesis {
                weight: 0.3,
                tracks: vec![],
                assoc: vec![],
            },
        ];
        assert!(d.extract_estimate().is_empty());
    }

    #[test]
    fn cardinality_ties_resolve_to_smaller_n() {
        let mut d = GlmbDensity::empty();
        d.table = vec![track(Label::new(0, 0))];
        d.hypotheses = vec![
            Hypothesis {
                weight: 0.5,
                tracks: vec![],
                assoc: vec![],
            },
            Hypothesis {
                weight: 0.5,
                tracks: vec![0],
                assoc: vec![vec![0]],
            },
        ];
        assert!(d.extract_estimate().is_empty());
    }

    #[test]
    fn log_helpers() {
        let v = log_sum_exp([0.0f64.ln(), 1.0f64.ln(), 2.0f64.ln()].into_iter());
        approx::assert_relative_eq!(v.exp(), 3.0, epsilon = 1e-12);
        approx::assert_relative_eq!(log_add_exp(0.0, f64::NEG_INFINITY), 0.0);
    }
}
