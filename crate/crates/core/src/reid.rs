//! Tentatively terminated (TT) track store and feature-based relabeling of
//! birth candidates.
//!
//! Labels dropped from the GLMB density by truncation are retained here with
//! their per-camera nominal features. New birth candidates are matched
//! against the store by optimal assignment on the recall score; matches
//! above the recall threshold resume the old label.

use crate::assignment::max_score_assignment;
use crate::birth::BirthCandidate;
use crate::glmb::Label;
use crate::sensing::feature_similarity;
use nalgebra::DVector;

/// A track removed from the density but kept for possible re-identification.
#[derive(Debug, Clone)]
pub struct TtTrack {
    pub label: Label,
    /// Stable-mode nominal feature per camera, from the best hypothesis at
    /// termination time.
    pub features: Vec<Option<DVector<f64>>>,
    /// Steps the label spent in the density (not as TT).
    pub e_count: u32,
    pub terminated_at: u32,
    pub expires_at: u32,
}

#[derive(Debug, Clone, Default)]
pub struct TtStore {
    pub tracks: Vec<TtTrack>,
}

impl TtStore {
    pub fn insert(&mut self, track: TtTrack) {
        debug_assert!(track.expires_at > track.terminated_at);
        self.tracks.push(track);
    }

    /// Drops entries whose recall window has passed; `expires_at == k` is
    /// still retained.
    pub fn expire(&mut self, k: u32) {
        self.tracks.retain(|t| t.expires_at >= k);
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.tracks.iter().any(|t| t.label == *label)
    }
}

/// Recall score `(k - s)/e * max_c s_f(z_f, alpha)` between a birth
/// candidate's raw detection features and a TT track's stored nominal
/// features; cameras without both sides are skipped, no common camera
/// scores zero.
pub fn recall_score(candidate: &BirthCandidate, tt: &TtTrack, k: u32) -> f64 {
    let mut best_sim: Option<f64> = None;
    for (cand_f, tt_f) in candidate.features.iter().zip(&tt.features) {
        if let (Some(a), Some(b)) = (cand_f, tt_f) {
            let s = feature_similarity(a, b);
            best_sim = Some(best_sim.map_or(s, |cur: f64| cur.max(s)));
        }
    }
    let Some(sim) = best_sim else {
        return 0.0;
    };
    if tt.e_count == 0 {
        return 0.0;
    }
    let age = k.saturating_sub(tt.label.birth_frame) as f64;
    age / tt.e_count as f64 * sim
}

/// Solves max-score one-to-one assignment between candidates and TT tracks;
/// pairs scoring above `tau_r` transfer the TT label to the candidate and
/// leave the store. Relabeling renames only: existence and density are
/// untouched.
pub fn relabel(candidates: &mut [BirthCandidate], store: &mut TtStore, k: u32, tau_r: f64) {
    if candidates.is_empty() || store.is_empty() {
        return;
    }
    let score: Vec<Vec<f64>> = candidates
        .iter()
        .map(|c| store.tracks.iter().map(|t| recall_score(c, t, k)).collect())
        .collect();
    let assign = max_score_assignment(&score);
    let mut taken: Vec<usize> = vec![];
    for (ci, slot) in assign.iter().enumerate() {
        let Some(ti) = slot else { continue };
        if score[ci][*ti] > tau_r {
            taken.push(*ti);
            let tt = store.tracks[*ti].clone();
            log::debug!(
                "frame {k}: candidate {} recalled as {} (score {:.3})",
                candidates[ci].label,
                tt.label,
                score[ci][*ti]
            );
            candidates[ci].label = tt.label;
            // Resume the stored appearance; the candidate's fresh detections
            // fold in through the usual EMA.
            for (cam, f) in tt.features.iter().enumerate() {
                if let Some(f) = f {
                    if candidates[ci].profile.stable[cam].is_none() {
                        candidates[ci].profile.stable[cam] = Some(f.clone());
                    } else {
                        // Keep the stored stable mode, treat the fresh
                        // detection as the recent mode.
                        let fresh = candidates[ci].profile.stable[cam].clone();
                        candidates[ci].profile.stable[cam] = Some(f.clone());
                        candidates[ci].profile.recent[cam] = fresh;
                    }
                }
            }
            candidates[ci].recalled_from = Some(tt);
        }
    }
    taken.sort_unstable();
    for ti in taken.into_iter().rev() {
        store.tracks.remove(ti);
    }
}
