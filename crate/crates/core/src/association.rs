//! Appearance-based association: cost construction, an exact rectangular
//! Hungarian solver and similarity gating.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::{similarity_matrix, FeatureVec};

/// Track-by-detection costs, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(DMatrix<f64>);

impl CostMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        Ok(CostMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument("ragged cost matrix".into()));
        }
        Self::new(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
    }

    /// `C = 1 - S`.
    pub fn from_similarity(s: &DMatrix<f64>) -> Result<Self> {
        Self::new(s.map(|v| 1.0 - v))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// One-to-one matching between tracks (rows) and detections (columns).
/// All index lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_dets: Vec<usize>,
}

impl Assignment {
    pub fn unmatched(rows: usize, cols: usize) -> Self {
        Assignment {
            pairs: Vec::new(),
            unmatched_tracks: (0..rows).collect(),
            unmatched_dets: (0..cols).collect(),
        }
    }

    fn from_pairs(mut pairs: Vec<(usize, usize)>, rows: usize, cols: usize) -> Self {
        pairs.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(i, j) in &pairs {
            row_used[i] = true;
            col_used[j] = true;
        }
        Assignment {
            pairs,
            unmatched_tracks: (0..rows).filter(|&i| !row_used[i]).collect(),
            unmatched_dets: (0..cols).filter(|&j| !col_used[j]).collect(),
        }
    }

    /// Sum of the matched entries, accumulated in pair order.
    pub fn total_cost(&self, cost: &CostMatrix) -> f64 {
        self.pairs.iter().map(|&(i, j)| cost.get(i, j)).sum()
    }
}

/// Shortest-augmenting-path Hungarian on a square matrix. Returns the row
/// potentials `u` and column potentials `v` of an optimal dual solution
/// (`u[i] + v[j] <= a[i][j]`, equality on an optimal assignment).
fn square_duals(a: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1, j - 1)] - u[i0] - v[j];
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
    (u[1..].to_vec(), v[1..].to_vec())
}

/// Kuhn augmenting path restricted to `rows` and to columns not in `taken`.
fn try_augment(
    row: usize,
    adj: &[Vec<usize>],
    taken: &[bool],
    seen: &mut [bool],
    col_owner: &mut [Option<usize>],
) -> bool {
    for &j in &adj[row] {
        if taken[j] || seen[j] {
            continue;
        }
        seen[j] = true;
        if col_owner[j].is_none_or(|r| try_augment(r, adj, taken, seen, col_owner)) {
            col_owner[j] = Some(row);
            return true;
        }
    }
    false
}

fn has_perfect_matching(rows: std::ops::Range<usize>, adj: &[Vec<usize>], taken: &[bool]) -> bool {
    let n = taken.len();
    let mut col_owner = vec![None; n];
    rows.into_iter().all(|r| {
        let mut seen = vec![false; n];
        try_augment(r, adj, taken, &mut seen, &mut col_owner)
    })
}

/// Minimum-cost one-to-one assignment of `min(rows, cols)` pairs.
///
/// Rectangular inputs are padded to square with a dummy cost of
/// `max_entry + 1`. Among equal-cost optima the lexicographically smallest
/// pair list is returned.
pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let (r, c) = (cost.rows(), cost.cols());
    if r == 0 || c == 0 {
        return Assignment::unmatched(r, c);
    }
    let n = r.max(c);
    let max_entry = cost.0.max();
    let dummy = max_entry + 1.0;
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i < r && j < c {
            cost.0[(i, j)]
        } else {
            dummy
        }
    });
    let (u, v) = square_duals(&a);

    // Every optimal assignment lives on the tight edges of an optimal dual;
    // pick the lexicographically smallest perfect matching among them.
    let scale = a.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let eps = 1e-9 * scale;
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| a[(i, j)] - u[i] - v[j] <= eps).collect())
        .collect();
    let mut taken = vec![false; n];
    let mut pairs = Vec::with_capacity(r.min(c));
    for i in 0..n {
        let choice = adj[i].iter().copied().find(|&j| {
            if taken[j] {
                return false;
            }
            taken[j] = true;
            let ok = has_perfect_matching(i + 1..n, &adj, &taken);
            taken[j] = false;
            ok
        });
        let j = choice.expect("tight subgraph of an optimal dual has a perfect matching");
        taken[j] = true;
        if i < r && j < c {
            pairs.push((i, j));
        }
    }
    Assignment::from_pairs(pairs, r, c)
}

/// Drop matched pairs whose similarity is below `theta`. Any `theta <= -1`
/// disables the gate, since cosine similarity never falls below -1.
pub fn gate(assignment: &Assignment, s: &DMatrix<f64>, theta: f64) -> Assignment {
    if theta <= -1.0 {
        return assignment.clone();
    }
    let mut out = Assignment {
        pairs: Vec::with_capacity(assignment.pairs.len()),
        unmatched_tracks: assignment.unmatched_tracks.clone(),
        unmatched_dets: assignment.unmatched_dets.clone(),
    };
    for &(i, j) in &assignment.pairs {
        if s[(i, j)] < theta {
            out.unmatched_tracks.push(i);
            out.unmatched_dets.push(j);
        } else {
            out.pairs.push((i, j));
        }
    }
    out.unmatched_tracks.sort_unstable();
    out.unmatched_dets.sort_unstable();
    out
}

/// Cosine similarity, `1 - S` costs, Hungarian, then gating.
pub fn associate(tracks: &[FeatureVec], dets: &[FeatureVec], theta: f64) -> Result<Assignment> {
    let s = similarity_matrix(tracks, dets)?;
    let cost = CostMatrix::from_similarity(&s)?;
    Ok(gate(&hungarian(&cost), &s, theta))
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Exhaustive minimum over every maximal injective map, ties broken by the
    /// lexicographically smallest sorted pair list.
    pub fn brute_force(cost: &CostMatrix) -> (f64, Vec<(usize, usize)>) {
        let (r, c) = (cost.rows(), cost.cols());
        let k = r.min(c);
        let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
        let mut cols_used = vec![false; c];
        let mut pairs = Vec::new();
        fn rec(
            cost: &CostMatrix,
            row: usize,
            k: usize,
            pairs: &mut Vec<(usize, usize)>,
            cols_used: &mut Vec<bool>,
            best: &mut Option<(f64, Vec<(usize, usize)>)>,
        ) {
            if pairs.len() == k {
                let mut sorted = pairs.clone();
                sorted.sort_unstable();
                let total: f64 = sorted.iter().map(|&(i, j)| cost.get(i, j)).sum();
                let better = match best {
                    None => true,
                    Some((b, bp)) => total < *b || (total == *b && sorted < *bp),
                };
                if better {
                    *best = Some((total, sorted));
                }
                return;
            }
            if row >= cost.rows() || cost.rows() - row < k - pairs.len() {
                return;
            }
            for j in 0..cost.cols() {
                if !cols_used[j] {
                    cols_used[j] = true;
                    pairs.push((row, j));
                    rec(cost, row + 1, k, pairs, cols_used, best);
                    pairs.pop();
                    cols_used[j] = false;
                }
            }
            rec(cost, row + 1, k, pairs, cols_used, best);
        }
        rec(cost, 0, k, &mut pairs, &mut cols_used, &mut best);
        best.unwrap_or((0.0, Vec::new()))
    }
}
