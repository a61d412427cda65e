//! One cycle of the MV-GLMB recursion: predict survivors, inject pending
//! birth candidates, freeze per-hypothesis detection probabilities, sample
//! multi-view association maps per hypothesis, score children exactly,
//! merge/truncate/normalize, commit posteriors and route dropped labels to
//! the TT store, then fit the next frame's birth model from this frame's
//! measurements and posterior association maps.

use super::gibbs::{run_chain, SiteTable};
use super::{
    log_add_exp, log_sum_exp, mean_ellipsoid, mix_seed, AssocTuple, GlmbDensity, Hypothesis,
    Label, TrackDensity, TrackMeta,
};
use crate::birth::{self, BirthCandidate, BirthModelInputs};
use crate::config::RunConfig;
use crate::geometry::{CameraModel, Ellipsoid};
use crate::motion::{self, KinematicState};
use crate::occlusion::detection_probability;
use crate::reid::{self, TtStore, TtTrack};
use crate::sensing::{
    box_log_likelihood, clutter_density, project_state_moments, ukf_update, Measurement,
};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::{BTreeSet, HashMap};

/// Per-source, per-camera prior-marginal log psi values used by the Gibbs
/// proposals: `ln(q_z * feature / kappa)` per measurement.
struct CamCache {
    log_psi: Vec<f64>,
}

/// One association-ready track: a predicted survivor or a birth candidate.
pub(crate) struct SourceEntry {
    pub label: Label,
    pub state: KinematicState,
    pub log_alive: f64,
    pub log_dead: f64,
    pub is_birth: bool,
    cams: Vec<Option<CamCache>>,
    mean_ellipsoid: Ellipsoid,
    /// Birth candidates carry their own profile until committed.
    birth_index: Option<usize>,
}

pub(crate) struct PreparedHyp {
    pub parent_log_weight: f64,
    /// Global source indices: the hypothesis's tracks then all births.
    pub locals: Vec<usize>,
    /// pd[local][camera], frozen from this hypothesis's predicted means.
    pub pd: Vec<Vec<f64>>,
}

pub(crate) struct Prepared<'a> {
    pub cfg: &'a RunConfig,
    pub cams: &'a [CameraModel],
    pub meas: &'a [Vec<Measurement>],
    pub active: Vec<bool>,
    pub log_kappa: Vec<f64>,
    pub sources: Vec<SourceEntry>,
    pub hyps: Vec<PreparedHyp>,
    use_features: bool,
    pending: &'a [BirthCandidate],
    prior_meta: &'a std::collections::BTreeMap<Label, TrackMeta>,
}

/// Memoized exact per-tuple outcome: sequential-chain detection log
/// likelihood (feature and clutter terms included) and the posterior state.
pub(crate) struct EtaMemo {
    map: HashMap<(usize, AssocTuple), (f64, KinematicState)>,
}

impl EtaMemo {
    pub(crate) fn new() -> Self {
        Self {
            map: HashMap::new(),
        }
    }

    fn chain(&mut self, p: &Prepared, src: usize, tuple: &[u16]) -> &(f64, KinematicState) {
        let key = (src, tuple.to_vec());
        if !self.map.contains_key(&key) {
            let out = compute_chain(p, src, tuple);
            self.map.insert(key.clone(), out);
        }
        &self.map[&key]
    }
}

fn feature_factor(p: &Prepared, src: &SourceEntry, cam: usize, z: &Measurement) -> f64 {
    if !p.use_features {
        return 1.0;
    }
    match src.birth_index {
        Some(b) => p.pending[b].profile.likelihood(cam, &z.feature),
        None => match p.prior_meta.get(&src.label) {
            Some(meta) => meta.profile.likelihood(cam, &z.feature),
            None => 1.0,
        },
    }
}

/// Sequential per-camera chain: predictive box likelihood under the
/// partially updated density, then the UKF update, camera by camera. This
/// factorizes the exact multi-view detection term by the chain rule.
fn compute_chain(p: &Prepared, src: usize, tuple: &[u16]) -> (f64, KinematicState) {
    let source = &p.sources[src];
    let mut state = source.state.clone();
    let mut logp = 0.0;
    let kappa_ut = p.cfg.sensing.ut_kappa;
    for (c, cam) in p.cams.iter().enumerate() {
        let j = tuple[c] as usize;
        if j == 0 {
            continue;
        }
        let z = &p.meas[c][j - 1];
        let lp = box_log_likelihood(cam, &state, &z.bbox, &p.cfg.sensing.noise, kappa_ut);
        if lp == f64::NEG_INFINITY {
            return (f64::NEG_INFINITY, state);
        }
        logp += lp + feature_factor(p, source, c, z).max(1e-300).ln() - p.log_kappa[c];
        match ukf_update(cam, &state, &z.bbox, &p.cfg.sensing.noise, kappa_ut) {
            Ok(updated) => state = updated,
            Err(_) => return (f64::NEG_INFINITY, state),
        }
    }
    (logp, state)
}

/// Exact log score of one source's assignment within a hypothesis.
pub(crate) fn eta(
    p: &Prepared,
    memo: &mut EtaMemo,
    hyp: &PreparedHyp,
    local: usize,
    tuple: Option<&[u16]>,
) -> f64 {
    let src_idx = hyp.locals[local];
    let source = &p.sources[src_idx];
    let Some(tuple) = tuple else {
        return source.log_dead;
    };
    let mut logp = source.log_alive;
    for c in 0..p.cams.len() {
        if !p.active[c] {
            continue;
        }
        let pd = hyp.pd[local][c];
        if tuple[c] == 0 {
            logp += (1.0 - pd).max(1e-300).ln();
        } else {
            logp += pd.max(1e-300).ln();
        }
    }
    let (chain, _) = memo.chain(p, src_idx, tuple);
    logp + chain
}

pub(crate) fn prepare<'a>(
    cams: &'a [CameraModel],
    cfg: &'a RunConfig,
    density: &'a GlmbDensity,
    pending: &'a [BirthCandidate],
    frame: u32,
    meas: &'a [Vec<Measurement>],
) -> Prepared<'a> {
    let n_cams = cams.len();
    assert_eq!(meas.len(), n_cams, "one measurement list per camera");
    let active: Vec<bool> = cams.iter().map(|c| c.is_active(frame)).collect();
    let ve = cfg.sensing.extent_log_range.log_volume();
    let log_kappa: Vec<f64> = cams
        .iter()
        .map(|c| clutter_density(c, ve).max(1e-300).ln())
        .collect();

    let mut sources: Vec<SourceEntry> = Vec::with_capacity(density.table.len() + pending.len());
    for entry in &density.table {
        let p_s = motion::survival_probability(&entry.state, &cfg.motion, &cfg.scene);
        let predicted = motion::predict(&entry.state, &cfg.motion);
        sources.push(SourceEntry {
            label: entry.label,
            mean_ellipsoid: mean_ellipsoid(&predicted),
            state: predicted,
            log_alive: p_s.max(1e-300).ln(),
            log_dead: (1.0 - p_s).max(1e-300).ln(),
            is_birth: false,
            cams: vec![],
            birth_index: None,
        });
    }
    let n_survivors = sources.len();
    for (b, cand) in pending.iter().enumerate() {
        let r = cand.existence.clamp(0.0, 1.0 - 1e-12);
        sources.push(SourceEntry {
            label: cand.label,
            mean_ellipsoid: mean_ellipsoid(&cand.density),
            state: cand.density.clone(),
            log_alive: r.max(1e-300).ln(),
            log_dead: (1.0 - r).ln(),
            is_birth: true,
            cams: vec![],
            birth_index: Some(b),
        });
    }

    // Prior-marginal likelihood caches for the Gibbs proposals.
    let kappa_ut = cfg.sensing.ut_kappa;
    for src in 0..sources.len() {
        let mut per_cam: Vec<Option<CamCache>> = Vec::with_capacity(n_cams);
        for (c, cam) in cams.iter().enumerate() {
            if !active[c] {
                per_cam.push(None);
                continue;
            }
            let moments = match project_state_moments(cam, &sources[src].state, kappa_ut) {
                Ok(m) => m,
                Err(_) => {
                    per_cam.push(None);
                    continue;
                }
            };
            let r = cfg.sensing.noise.for_predicted(&moments.mean_box);
            let s_cov = moments.s_zz + nalgebra::Matrix4::from_diagonal(&r);
            let chol = match nalgebra::Cholesky::new(s_cov) {
                Some(ch) => ch,
                None => {
                    per_cam.push(None);
                    continue;
                }
            };
            let logdet: f64 = (0..4).map(|i| chol.l()[(i, i)].ln()).sum::<f64>() * 2.0;
            let norm = -0.5 * logdet - 2.0 * (2.0 * std::f64::consts::PI).ln();
            let log_psi: Vec<f64> = meas[c]
                .iter()
                .map(|z| {
                    let diff = z.bbox.as_vector() - moments.z_mean;
                    let sol = chol.solve(&diff);
                    let lq = norm - 0.5 * diff.dot(&sol);
                    lq + feature_factor_raw(cfg, density, pending, &sources[src], c, z)
                        .max(1e-300)
                        .ln()
                        - log_kappa[c]
                })
                .collect();
            per_cam.push(Some(CamCache { log_psi }));
        }
        sources[src].cams = per_cam;
    }

    // Per-hypothesis frozen detection probabilities, cached by label set.
    let birth_ids: Vec<usize> = (n_survivors..sources.len()).collect();
    let mut pd_cache: HashMap<Vec<usize>, Vec<Vec<f64>>> = HashMap::new();
    let mut hyps = Vec::with_capacity(density.hypotheses.len());
    for h in &density.hypotheses {
        let mut locals: Vec<usize> = h.tracks.clone();
        locals.extend(birth_ids.iter().copied());
        let pd = pd_cache
            .entry(locals.clone())
            .or_insert_with(|| {
                let ellipsoids: Vec<Ellipsoid> = locals
                    .iter()
                    .map(|&s| sources[s].mean_ellipsoid)
                    .collect();
                locals
                    .iter()
                    .enumerate()
                    .map(|(li, &s)| {
                        let others: Vec<Ellipsoid> = ellipsoids
                            .iter()
                            .enumerate()
                            .filter(|(oi, _)| *oi != li)
                            .map(|(_, e)| *e)
                            .collect();
                        (0..n_cams)
                            .map(|c| {
                                if !active[c] || sources[s].cams[c].is_none() {
                                    0.0
                                } else {
                                    detection_probability(
                                        &cams[c],
                                        &ellipsoids[li],
                                        &others,
                                        &cfg.occlusion,
                                    )
                                    .min(1.0 - 1e-12)
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .clone();
        hyps.push(PreparedHyp {
            parent_log_weight: h.weight.max(1e-300).ln(),
            locals,
            pd,
        });
    }

    Prepared {
        cfg,
        cams,
        meas,
        active,
        log_kappa,
        sources,
        hyps,
        use_features: cfg.sensing.use_features,
        pending,
        prior_meta: &density.meta,
    }
}

// Same feature factor as `feature_factor`, usable before Prepared exists.
fn feature_factor_raw(
    cfg: &RunConfig,
    density: &GlmbDensity,
    pending: &[BirthCandidate],
    src: &SourceEntry,
    cam: usize,
    z: &Measurement,
) -> f64 {
    if !cfg.sensing.use_features {
        return 1.0;
    }
    match src.birth_index {
        Some(b) => pending[b].profile.likelihood(cam, &z.feature),
        None => match density.meta.get(&src.label) {
            Some(meta) => meta.profile.likelihood(cam, &z.feature),
            None => 1.0,
        },
    }
}

/// Child identity: alive (source, tuple) pairs sorted by source index.
/// Sources are deduplicated across parents, so identical keys imply
/// identical label sets and posterior densities and may be merged exactly.
pub(crate) type ChildKey = Vec<(usize, AssocTuple)>;

fn child_key_from_map(hyp: &PreparedHyp, key: &[i16], n_cams: usize) -> ChildKey {
    let mut out: ChildKey = Vec::new();
    for (local, chunk) in key.chunks(n_cams).enumerate() {
        if chunk[0] < 0 {
            continue;
        }
        out.push((
            hyp.locals[local],
            chunk.iter().map(|&j| j as u16).collect(),
        ));
    }
    out.sort_by_key(|(s, _)| *s);
    out
}

fn score_map(
    p: &Prepared,
    memo: &mut EtaMemo,
    hyp: &PreparedHyp,
    key: &[i16],
    n_cams: usize,
) -> f64 {
    let mut logw = hyp.parent_log_weight;
    for (local, chunk) in key.chunks(n_cams).enumerate() {
        let tuple: Option<Vec<u16>> = if chunk[0] < 0 {
            None
        } else {
            Some(chunk.iter().map(|&j| j as u16).collect())
        };
        logw += eta(p, memo, hyp, local, tuple.as_deref());
        if logw == f64::NEG_INFINITY {
            break;
        }
    }
    logw
}

pub(crate) struct StepStats {
    pub predict_only: bool,
    pub children_generated: usize,
}

pub(crate) fn run_step(
    cams: &[CameraModel],
    cfg: &RunConfig,
    density: &GlmbDensity,
    pending: &[BirthCandidate],
    tt: &mut TtStore,
    frame: u32,
    meas: &[Vec<Measurement>],
    single_hypothesis: bool,
    reid_enabled: bool,
) -> (GlmbDensity, Vec<BirthCandidate>, StepStats) {
    let n_cams = cams.len();
    let any_active = cams.iter().any(|c| c.is_active(frame));
    if !any_active {
        // Predict-only: no measurement opportunity anywhere, weights stay.
        let mut out = density.clone();
        for t in &mut out.table {
            t.state = motion::predict(&t.state, &cfg.motion);
        }
        for meta in out.meta.values_mut() {
            meta.e_count += 1;
        }
        out.frame = Some(frame);
        let carried: Vec<BirthCandidate> = pending
            .iter()
            .cloned()
            .map(|mut c| {
                c.density = motion::predict(&c.density, &cfg.motion);
                c
            })
            .collect();
        let stats = StepStats {
            predict_only: true,
            children_generated: 0,
        };
        return (out, carried, stats);
    }

    let p = prepare(cams, cfg, density, pending, frame, meas);
    let mut memo = EtaMemo::new();

    // Gibbs per hypothesis, exact scoring of visited maps, merged children.
    let mut children: IndexMap<ChildKey, f64> = IndexMap::new();
    for (h_idx, hyp) in p.hyps.iter().enumerate() {
        let table = build_site_table(&p, hyp);
        let init_alive: Vec<bool> = hyp
            .locals
            .iter()
            .map(|&s| !p.sources[s].is_birth)
            .collect();
        let seed = mix_seed(cfg.glmb.seed, frame, h_idx as u64);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let visited = run_chain(&table, &init_alive, cfg.glmb.gibbs_sweeps, &mut rng);
        for key in visited.keys() {
            let logw = score_map(&p, &mut memo, hyp, key, n_cams);
            if logw == f64::NEG_INFINITY {
                continue;
            }
            let ck = child_key_from_map(hyp, key, n_cams);
            match children.get_mut(&ck) {
                Some(w) => *w = log_add_exp(*w, logw),
                None => {
                    children.insert(ck, logw);
                }
            }
        }
    }

    let children_generated = children.len();
    let mut items: Vec<(ChildKey, f64)> = children.into_iter().collect();
    items.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    let cap = if single_hypothesis { 1 } else { cfg.glmb.h_max };
    items.truncate(cap.max(1));
    let lse = log_sum_exp(items.iter().map(|(_, w)| *w));
    let mut kept: Vec<(ChildKey, f64)> = items
        .into_iter()
        .map(|(k, w)| (k, (w - lse).exp()))
        .collect();
    if cfg.glmb.weight_floor > 0.0 && kept.len() > 1 {
        // The floor applies to normalized weights; the heaviest child always
        // survives.
        let max_w = kept.iter().map(|(_, w)| *w).fold(0.0, f64::max);
        kept.retain(|(_, w)| *w >= cfg.glmb.weight_floor.min(max_w));
    }
    let total: f64 = kept.iter().map(|(_, w)| *w).sum();
    if total > 0.0 {
        for (_, w) in &mut kept {
            *w /= total;
        }
    }

    // Materialize the new density with structural sharing of posteriors.
    let mut new_table: Vec<TrackDensity> = Vec::new();
    let mut entry_index: HashMap<(usize, AssocTuple), usize> = HashMap::new();
    let mut hypotheses: Vec<Hypothesis> = Vec::with_capacity(kept.len());
    for (key, weight) in &kept {
        let mut rows: Vec<(Label, usize, AssocTuple)> = Vec::with_capacity(key.len());
        for (src, tuple) in key {
            let idx = *entry_index
                .entry((*src, tuple.clone()))
                .or_insert_with(|| {
                    let (_, posterior) = memo.chain(&p, *src, tuple).clone();
                    new_table.push(TrackDensity {
                        label: p.sources[*src].label,
                        state: posterior,
                    });
                    new_table.len() - 1
                });
            rows.push((p.sources[*src].label, idx, tuple.clone()));
        }
        rows.sort_by_key(|(l, _, _)| *l);
        hypotheses.push(Hypothesis {
            weight: *weight,
            tracks: rows.iter().map(|(_, i, _)| *i).collect(),
            assoc: rows.into_iter().map(|(_, _, t)| t).collect(),
        });
    }

    let mut out = GlmbDensity {
        frame: Some(frame),
        hypotheses,
        table: new_table,
        meta: density.meta.clone(),
    };
    out.normalize();
    debug_assert!((out.weight_sum() - 1.0).abs() < 1e-9);

    // Label bookkeeping: births committed, dropped labels to TT, e-counts.
    let prev_live: BTreeSet<Label> = density.live_labels();
    let retained: BTreeSet<Label> = out.live_labels();
    for cand in pending {
        if retained.contains(&cand.label) {
            let e0 = cand.recalled_from.as_ref().map_or(0, |t| t.e_count);
            out.meta.insert(
                cand.label,
                TrackMeta {
                    profile: cand.profile.clone(),
                    e_count: e0,
                    last_update: frame,
                },
            );
        } else if let Some(old) = &cand.recalled_from {
            if reid_enabled {
                tt.insert(old.clone());
            }
        }
    }
    for label in prev_live.difference(&retained) {
        if let Some(meta) = out.meta.remove(label) {
            if reid_enabled && meta.e_count >= cfg.reid.min_e_count {
                log::debug!("frame {frame}: label {label} tentatively terminated (e={})", meta.e_count);
                tt.insert(TtTrack {
                    label: *label,
                    features: meta.profile.snapshot(),
                    e_count: meta.e_count,
                    terminated_at: frame,
                    expires_at: frame + cfg.reid.t_recall,
                });
            }
        }
    }
    for label in &retained {
        if let Some(meta) = out.meta.get_mut(label) {
            meta.e_count += 1;
            meta.last_update = frame;
        }
    }

    // Feature EMA commit from the best hypothesis only.
    if cfg.sensing.use_features {
        if let Some(best) = out
            .hypotheses
            .iter()
            .max_by(|a, b| a.weight.partial_cmp(&b.weight).unwrap())
        {
            let commits: Vec<(Label, usize, usize)> = best
                .tracks
                .iter()
                .zip(&best.assoc)
                .flat_map(|(&t_idx, tuple)| {
                    let label = out.table[t_idx].label;
                    tuple
                        .iter()
                        .enumerate()
                        .filter(|(_, &j)| j > 0)
                        .map(move |(c, &j)| (label, c, j as usize))
                        .collect::<Vec<_>>()
                })
                .collect();
            for (label, c, j) in commits {
                if let Some(meta) = out.meta.get_mut(&label) {
                    meta.profile.update(c, &meas[c][j - 1].feature);
                }
            }
        }
    }

    // Birth model for the next frame, from this frame's measurements and
    // the posterior association maps.
    if reid_enabled {
        tt.expire(frame);
    }
    let map = birth::cluster_detections(meas, cams, frame, &cfg.birth);
    let inputs = BirthModelInputs {
        motion: &cfg.motion,
        noise: &cfg.sensing.noise,
        extent_log_volume: cfg.sensing.extent_log_range.log_volume(),
        ut_kappa: cfg.sensing.ut_kappa,
        n_cameras: n_cams,
        feature_stable_weight: cfg.sensing.feature_stable_weight,
        feature_momentum: cfg.sensing.feature_momentum,
    };
    let mut candidates = birth::fit_birth(
        &map,
        meas,
        cams,
        frame,
        &out,
        &cfg.birth,
        &inputs,
        frame + 1,
    );
    candidates.retain(|c| c.existence > 1e-9);
    if reid_enabled {
        reid::relabel(&mut candidates, tt, frame, cfg.reid.tau_r);
    }

    let stats = StepStats {
        predict_only: false,
        children_generated,
    };
    (out, candidates, stats)
}

fn build_site_table(p: &Prepared, hyp: &PreparedHyp) -> SiteTable {
    let n_cams = p.cams.len();
    let mut log_vals = Vec::with_capacity(hyp.locals.len());
    for (local, &src) in hyp.locals.iter().enumerate() {
        let mut per_cam = Vec::with_capacity(n_cams);
        for c in 0..n_cams {
            match (&p.sources[src].cams[c], p.active[c]) {
                (Some(cache), true) => {
                    let pd = hyp.pd[local][c];
                    let mut vals = Vec::with_capacity(cache.log_psi.len() + 1);
                    vals.push((1.0 - pd).max(1e-300).ln());
                    let lpd = pd.max(1e-300).ln();
                    vals.extend(cache.log_psi.iter().map(|lp| lpd + lp));
                    per_cam.push(vals);
                }
                _ => per_cam.push(vec![0.0]),
            }
        }
        log_vals.push(per_cam);
    }
    SiteTable {
        log_vals,
        log_alive: hyp
            .locals
            .iter()
            .map(|&s| p.sources[s].log_alive)
            .collect(),
        log_dead: hyp.locals.iter().map(|&s| p.sources[s].log_dead).collect(),
        n_cams,
        n_meas: (0..n_cams)
            .map(|c| {
                if p.active[c] {
                    p.meas[c].len()
                } else {
                    0
                }
            })
            .collect(),
    }
}
