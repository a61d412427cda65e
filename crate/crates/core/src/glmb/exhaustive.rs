//! Exact enumeration of the one-step posterior over joint multi-view
//! association maps, feasible on small instances only. Reference
//! implementation for validating the Gibbs truncation.

use super::step::{eta, prepare, EtaMemo};
use super::{log_add_exp, AssocTuple, GlmbDensity, Label};
use crate::birth::BirthCandidate;
use crate::config::RunConfig;
use crate::geometry::CameraModel;
use crate::sensing::Measurement;
use std::collections::BTreeMap;

/// Canonical child identity: label-sorted (label, per-camera tuple) pairs.
pub type ChildId = Vec<(Label, AssocTuple)>;

/// Canonicalizes a posterior density's hypotheses for comparison.
pub fn canonical_children(density: &GlmbDensity) -> BTreeMap<ChildId, f64> {
    let mut out = BTreeMap::new();
    for h in &density.hypotheses {
        let mut id: ChildId = h
            .tracks
            .iter()
            .zip(&h.assoc)
            .map(|(&t, a)| (density.table[t].label, a.clone()))
            .collect();
        id.sort_by_key(|(l, _)| *l);
        *out.entry(id).or_insert(0.0) += h.weight;
    }
    out
}

/// Enumerates every valid joint association map of every parent hypothesis,
/// scores them exactly and returns the normalized child weights keyed by
/// (label, tuple) sets.
pub fn exact_child_weights(
    cams: &[CameraModel],
    cfg: &RunConfig,
    density: &GlmbDensity,
    pending: &[BirthCandidate],
    frame: u32,
    meas: &[Vec<Measurement>],
) -> BTreeMap<ChildId, f64> {
    let p = prepare(cams, cfg, density, pending, frame, meas);
    let mut memo = EtaMemo::new();
    let n_cams = cams.len();

    let mut log_children: BTreeMap<ChildId, f64> = BTreeMap::new();
    for hyp in &p.hyps {
        let n = hyp.locals.len();
        // Backtracking over sources; taken[c] marks held measurements.
        let mut taken: Vec<Vec<bool>> = (0..n_cams)
            .map(|c| vec![false; if p.active[c] { meas[c].len() } else { 0 }])
            .collect();
        let mut assignment: Vec<Option<AssocTuple>> = vec![None; n];

        fn tuples_for(
            p: &super::step::Prepared,
            taken: &[Vec<bool>],
            out: &mut Vec<AssocTuple>,
            current: &mut AssocTuple,
            cam: usize,
        ) {
            if cam == taken.len() {
                out.push(current.clone());
                return;
            }
            current.push(0);
            tuples_for(p, taken, out, current, cam + 1);
            current.pop();
            if p.active[cam] {
                for j in 1..=taken[cam].len() {
                    if !taken[cam][j - 1] {
                        current.push(j as u16);
                        tuples_for(p, taken, out, current, cam + 1);
                        current.pop();
                    }
                }
            }
        }

        #[allow(clippy::too_many_arguments)]
        fn rec(
            p: &super::step::Prepared,
            memo: &mut EtaMemo,
            hyp: &super::step::PreparedHyp,
            s: usize,
            n: usize,
            logw: f64,
            taken: &mut Vec<Vec<bool>>,
            assignment: &mut Vec<Option<AssocTuple>>,
            out: &mut BTreeMap<ChildId, f64>,
        ) {
            if s == n {
                let mut id: ChildId = assignment
                    .iter()
                    .enumerate()
                    .filter_map(|(local, a)| {
                        a.as_ref()
                            .map(|t| (p.sources[hyp.locals[local]].label, t.clone()))
                    })
                    .collect();
                id.sort_by_key(|(l, _)| *l);
                out.entry(id)
                    .and_modify(|w| *w = log_add_exp(*w, logw))
                    .or_insert(logw);
                return;
            }
            // Death.
            let dead = eta(p, memo, hyp, s, None);
            if dead > f64::NEG_INFINITY {
                assignment[s] = None;
                rec(p, memo, hyp, s + 1, n, logw + dead, taken, assignment, out);
            }
            // Every feasible tuple.
            let mut tuples = Vec::new();
            tuples_for(p, taken, &mut tuples, &mut Vec::new(), 0);
            for t in tuples {
                let lw = eta(p, memo, hyp, s, Some(&t));
                if lw == f64::NEG_INFINITY {
                    continue;
                }
                for (c, &j) in t.iter().enumerate() {
                    if j > 0 {
                        taken[c][j as usize - 1] = true;
                    }
                }
                assignment[s] = Some(t.clone());
                rec(p, memo, hyp, s + 1, n, logw + lw, taken, assignment, out);
                for (c, &j) in t.iter().enumerate() {
                    if j > 0 {
                        taken[c][j as usize - 1] = false;
                    }
                }
            }
            assignment[s] = None;
        }

        rec(
            &p,
            &mut memo,
            hyp,
            0,
            n,
            hyp.parent_log_weight,
            &mut taken,
            &mut assignment,
            &mut log_children,
        );
    }

    let lse = super::log_sum_exp(log_children.values().copied());
    log_children
        .into_iter()
        .map(|(k, w)| (k, (w - lse).exp()))
        .collect()
}
