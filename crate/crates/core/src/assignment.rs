//! Exact min-cost rectangular assignment via shortest augmenting paths with
//! potentials (Jonker-Volgenant style, O(n^2 m)).
//!
//! All rows are matched when `rows <= cols`, otherwise all columns. Costs
//! must be finite; callers gate infeasible pairs with a large finite cost
//! and strip those matches afterward.

/// Minimizes total cost over one-to-one row/column matches.
///
/// Returns `assign[r] = Some(c)` for matched rows. With `rows <= cols` every
/// row is matched; otherwise exactly `cols` rows are.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return vec![];
    }
    let cols = cost[0].len();
    if cols == 0 {
        return vec![None; rows];
    }
    debug_assert!(cost.iter().all(|r| r.len() == cols));
    debug_assert!(cost.iter().flatten().all(|c| c.is_finite()));

    if rows <= cols {
        solve(rows, cols, |i, j| cost[i][j])
    } else {
        let col_assign = solve(cols, rows, |i, j| cost[j][i]);
        let mut assign = vec![None; rows];
        for (c, r) in col_assign.iter().enumerate() {
            if let Some(r) = r {
                assign[*r] = Some(c);
            }
        }
        assign
    }
}

/// Maximizes total score; same matching semantics as [`min_cost_assignment`].
pub fn max_score_assignment(score: &[Vec<f64>]) -> Vec<Option<usize>> {
    let neg: Vec<Vec<f64>> = score
        .iter()
        .map(|row| row.iter().map(|s| -s).collect())
        .collect();
    min_cost_assignment(&neg)
}

pub fn assignment_cost(cost: &[Vec<f64>], assign: &[Option<usize>]) -> f64 {
    assign
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[r][c]))
        .sum()
}

fn solve<F: Fn(usize, usize) -> f64>(n: usize, m: usize, cost: F) -> Vec<Option<usize>> {
    // 1-indexed potentials; p[j] is the row matched to column j.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = Some(j - 1);
        }
    }
    assign
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
        let rows = cost.len();
        let cols = cost[0].len();
        let (small, large) = (rows.min(cols), rows.max(cols));
        let mut indices: Vec<usize> = (0..large).collect();
        let mut best = f64::INFINITY;
        permute(&mut indices, small, &mut |perm| {
            let total: f64 = (0..small)
                .map(|i| {
                    if rows <= cols {
                        cost[i][perm[i]]
                    } else {
                        cost[perm[i]][i]
                    }
                })
                .sum();
            best = best.min(total);
        });
        best
    }

    fn permute<F: FnMut(&[usize])>(items: &mut Vec<usize>, take: usize, f: &mut F) {
        fn rec<F: FnMut(&[usize])>(items: &mut Vec<usize>, pos: usize, take: usize, f: &mut F) {
            if pos == take {
                f(&items[..take]);
                return;
            }
            for i in pos..items.len() {
                items.swap(pos, i);
                rec(items, pos + 1, take, f);
                items.swap(pos, i);
            }
        }
        rec(items, 0, take, f);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for trial in 0..200 {
            let rows = rng.random_range(1..=6);
            let cols = rng.random_range(1..=6);
            let cost: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let assign = min_cost_assignment(&cost);
            let got = assignment_cost(&cost, &assign);
            let want = brute_force_min(&cost);
            assert!(
                (got - want).abs() < 1e-9,
                "trial {trial}: {got} vs {want} for {cost:?}"
            );
            // one-to-one
            let mut seen = std::collections::HashSet::new();
            for c in assign.iter().flatten() {
                assert!(seen.insert(*c));
            }
        }
    }

    #[test]
    fn simple_known_case() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let assign = min_cost_assignment(&cost);
        assert_eq!(assignment_cost(&cost, &assign), 5.0);
    }

    #[test]
    fn empty_inputs() {
        assert!(min_cost_assignment(&[]).is_empty());
        let cost: Vec<Vec<f64>> = vec![vec![], vec![]];
        assert_eq!(min_cost_assignment(&cost), vec![None, None]);
    }
}
