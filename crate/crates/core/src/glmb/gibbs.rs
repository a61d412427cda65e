//! Gibbs chain over per-track multi-view assignment tuples.
//!
//! Each site resamples one track's tuple (or death) conditional on all other
//! tracks' assignments, respecting the per-camera one-to-one constraint.
//! Given aliveness and the other tracks, the per-camera components are
//! independent, so they are sampled camera by camera. The chain is an
//! exploration device: visited maps are re-scored exactly afterwards, so the
//! site conditionals may use prior-marginal likelihood values.

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Per-hypothesis sampling table. `log_vals[s][c]` holds option values for
/// local source `s` at camera `c`, indexed by 0 (miss) then measurement j;
/// cameras where the source cannot be observed hold a single miss entry.
pub(crate) struct SiteTable {
    pub log_vals: Vec<Vec<Vec<f64>>>,
    pub log_alive: Vec<f64>,
    pub log_dead: Vec<f64>,
    pub n_cams: usize,
    pub n_meas: Vec<usize>,
}

impl SiteTable {
    pub fn n_sources(&self) -> usize {
        self.log_alive.len()
    }
}

/// Chain state: per local source, per camera assignment (-1 encodes death on
/// every camera of that source).
pub(crate) struct ChainState {
    pub assign: Vec<Vec<i16>>,
    /// owner[c][j-1] = local source currently holding measurement j.
    pub owner: Vec<Vec<Option<usize>>>,
}

impl ChainState {
    fn new(table: &SiteTable, init_alive: &[bool]) -> Self {
        let assign: Vec<Vec<i16>> = init_alive
            .iter()
            .map(|&alive| vec![if alive { 0 } else { -1 }; table.n_cams])
            .collect();
        let owner = table.n_meas.iter().map(|&m| vec![None; m]).collect();
        Self { assign, owner }
    }

    fn key(&self) -> Vec<i16> {
        self.assign.iter().flatten().copied().collect()
    }

    fn release(&mut self, s: usize) {
        for (c, &j) in self.assign[s].iter().enumerate() {
            if j > 0 {
                self.owner[c][j as usize - 1] = None;
            }
        }
    }

    fn claim(&mut self, s: usize) {
        for (c, &j) in self.assign[s].iter().enumerate() {
            if j > 0 {
                debug_assert!(self.owner[c][j as usize - 1].is_none());
                self.owner[c][j as usize - 1] = Some(s);
            }
        }
    }
}

fn resample_site(table: &SiteTable, state: &mut ChainState, s: usize, rng: &mut ChaCha12Rng) {
    state.release(s);

    // Per-camera log-normalizers over the available options.
    let mut cam_lse = Vec::with_capacity(table.n_cams);
    for c in 0..table.n_cams {
        let vals = &table.log_vals[s][c];
        let mut m = f64::NEG_INFINITY;
        for (j, &v) in vals.iter().enumerate() {
            if j == 0 || state.owner[c][j - 1].is_none() {
                m = m.max(v);
            }
        }
        let mut sum = 0.0;
        if m > f64::NEG_INFINITY {
            for (j, &v) in vals.iter().enumerate() {
                if j == 0 || state.owner[c][j - 1].is_none() {
                    sum += (v - m).exp();
                }
            }
        }
        cam_lse.push(if sum > 0.0 {
            m + sum.ln()
        } else {
            f64::NEG_INFINITY
        });
    }

    let alive_mass = table.log_alive[s] + cam_lse.iter().sum::<f64>();
    let dead_mass = table.log_dead[s];
    let total = super::log_add_exp(alive_mass, dead_mass);
    let p_alive = if total == f64::NEG_INFINITY {
        0.0
    } else {
        (alive_mass - total).exp()
    };

    if rng.random_range(0.0..1.0) >= p_alive {
        state.assign[s] = vec![-1; table.n_cams];
        return;
    }

    for c in 0..table.n_cams {
        let vals = &table.log_vals[s][c];
        let mut options: Vec<(usize, f64)> = Vec::with_capacity(vals.len());
        let mut m = f64::NEG_INFINITY;
        for (j, &v) in vals.iter().enumerate() {
            if j == 0 || state.owner[c][j - 1].is_none() {
                options.push((j, v));
                m = m.max(v);
            }
        }
        let weights: Vec<f64> = options.iter().map(|&(_, v)| (v - m).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random_range(0.0..1.0) * total;
        let mut pick = options[0].0;
        for (k, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                pick = options[k].0;
                break;
            }
        }
        state.assign[s][c] = pick as i16;
    }
    state.claim(s);
}

/// Runs the chain and returns distinct visited maps with visit counts, in
/// visit order. The initial state counts as visited.
pub(crate) fn run_chain(
    table: &SiteTable,
    init_alive: &[bool],
    sweeps: usize,
    rng: &mut ChaCha12Rng,
) -> IndexMap<Vec<i16>, u32> {
    let n = table.n_sources();
    let mut state = ChainState::new(table, init_alive);
    let mut visited: IndexMap<Vec<i16>, u32> = IndexMap::new();
    *visited.entry(state.key()).or_insert(0) += 1;
    for _ in 0..sweeps {
        for s in 0..n {
            resample_site(table, &mut state, s, rng);
        }
        *visited.entry(state.key()).or_insert(0) += 1;
    }
    visited
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn single_track_no_measurements_visits_both_maps() {
        let table = SiteTable {
            log_vals: vec![vec![vec![(0.05f64).ln()]]],
            log_alive: vec![(0.99f64).ln()],
            log_dead: vec![(0.01f64).ln()],
            n_cams: 1,
            n_meas: vec![0],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let visited = run_chain(&table, &[true], 2000, &mut rng);
        assert!(visited.contains_key(&vec![0i16]));
        assert!(visited.contains_key(&vec![-1i16]));
        assert_eq!(visited.len(), 2);
    }

    #[test]
    fn site_conditional_matches_hand_enumeration() {
        // One track, one camera, two measurements. Hand-computed posterior
        // over {dead, miss, z1, z2}:
        //   dead ~ 0.2
        //   alive-miss ~ 0.8 * 0.1
        //   alive-z1 ~ 0.8 * 2.0
        //   alive-z2 ~ 0.8 * 0.5
        let table = SiteTable {
            log_vals: vec![vec![vec![(0.1f64).ln(), (2.0f64).ln(), (0.5f64).ln()]]],
            log_alive: vec![(0.8f64).ln()],
            log_dead: vec![(0.2f64).ln()],
            n_cams: 1,
            n_meas: vec![2],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let visited = run_chain(&table, &[true], 200_000, &mut rng);
        let total: u32 = visited.values().sum();
        let freq = |key: Vec<i16>| *visited.get(&key).unwrap_or(&0) as f64 / total as f64;
        let z = 0.2 + 0.8 * (0.1 + 2.0 + 0.5);
        assert!((freq(vec![-1]) - 0.2 / z).abs() < 0.01);
        assert!((freq(vec![0]) - 0.8 * 0.1 / z).abs() < 0.01);
        assert!((freq(vec![1]) - 0.8 * 2.0 / z).abs() < 0.01);
        assert!((freq(vec![2]) - 0.8 * 0.5 / z).abs() < 0.01);
    }

    #[test]
    fn one_to_one_constraint_is_never_violated() {
        // Two tracks, one camera, one measurement.
        let mk_vals = || vec![vec![(0.05f64).ln(), (3.0f64).ln()]];
        let table = SiteTable {
            log_vals: vec![mk_vals(), mk_vals()],
            log_alive: vec![(0.9f64).ln(), (0.9f64).ln()],
            log_dead: vec![(0.1f64).ln(), (0.1f64).ln()],
            n_cams: 1,
            n_meas: vec![1],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let visited = run_chain(&table, &[true, true], 5000, &mut rng);
        for key in visited.keys() {
            assert!(
                !(key[0] == 1 && key[1] == 1),
                "double assignment in {key:?}"
            );
        }
        // The legal assignment states should all be reachable.
        assert!(visited.len() >= 5);
    }
}
