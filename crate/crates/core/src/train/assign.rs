//! Optimal assignment (Hungarian algorithm).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Minimum-cost assignment for a square `cost` matrix given as rows.
///
/// Returns `perm` with row `i` assigned to column `perm[i]`. Among optimal
/// assignments the lexicographically smallest `perm` is returned.
pub fn hungarian_assign(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if cost.iter().any(|r| r.len() != n) || cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidCost);
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let best = assignment_cost(cost, &solve(cost));
    let tol = 1e-12 * (1.0 + best.abs());

    // Fix rows one at a time to the smallest column that keeps the optimum.
    let mut perm = vec![usize::MAX; n];
    let mut fixed_cost = 0.0;
    for row in 0..n {
        for col in 0..n {
            if perm[..row].contains(&col) {
                continue;
            }
            let rows: Vec<usize> = (row + 1..n).collect();
            let cols: Vec<usize> = (0..n).filter(|c| *c != col && !perm[..row].contains(c)).collect();
            let sub: Vec<Vec<f64>> = rows.iter().map(|&r| cols.iter().map(|&c| cost[r][c]).collect()).collect();
            let rest = if sub.is_empty() { 0.0 } else { assignment_cost(&sub, &solve(&sub)) };
            if fixed_cost + cost[row][col] + rest <= best + tol {
                perm[row] = col;
                fixed_cost += cost[row][col];
                break;
            }
        }
    }
    Ok(perm)
}

pub fn assignment_cost(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Shortest augmenting path formulation with row and column potentials,
/// `O(n³)`.
fn solve(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // owner[j]: 1-based row matched to column j, 0 for none.
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    perm
}
