//! Hungarian method for rectangular assignment problems.

/// Minimum-cost assignment of rows to distinct columns.
///
/// Works on any `n x m` matrix: when `n > m` some rows stay unassigned.
/// Returns the column for each row. Shortest augmenting paths with
/// dual potentials, `O(n^2 m)`.
pub fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<Option<usize>> {
    let n = cost.len();
    if n == 0 {
        return vec![];
    }
    let m = cost[0].len();
    assert!(cost.iter().all(|r| r.len() == m), "ragged cost matrix");
    if m == 0 {
        return vec![None; n];
    }
    if n > m {
        let transposed: Vec<Vec<i64>> = (0..m)
            .map(|j| (0..n).map(|i| cost[i][j]).collect())
            .collect();
        let cols = min_cost_assignment(&transposed);
        let mut rows = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            if let Some(i) = i {
                rows[i] = Some(j);
            }
        }
        return rows;
    }
    // 1-based potentials; column 0 is the virtual start
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
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
            for j in 0..=m {
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
    let mut rows = vec![None; n];
    for j in 1..=m {
        if owner[j] != 0 {
            rows[owner[j] - 1] = Some(j - 1);
        }
    }
    rows
}

/// Maximum-weight assignment, the negated minimum-cost problem.
pub fn max_weight_assignment(weights: &[Vec<i64>]) -> Vec<Option<usize>> {
    let neg: Vec<Vec<i64>> = weights
        .iter()
        .map(|r| r.iter().map(|w| -w).collect())
        .collect();
    min_cost_assignment(&neg)
}

pub fn assignment_weight(weights: &[Vec<i64>], rows: &[Option<usize>]) -> i64 {
    rows.iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|j| weights[i][j]))
        .sum()
}
