//! Rectangular minimum-cost bipartite assignment (Hungarian method with
//! potentials, O(n^2 m)).
//!
//! Pairs may be forbidden. The solver first maximizes the number of allowed
//! pairs and, among those matchings, minimizes total cost.

/// Allowed pairs carry `Some(cost)`, forbidden pairs `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Option<f64>>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![None; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c).filter(|v| v.is_finite()));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, cost: Option<f64>) {
        self.data[r * self.cols + c] = cost.filter(|v| v.is_finite());
    }

    /// Sum of the costs of `pairs`; `None` if any pair is forbidden.
    pub fn total(&self, pairs: &[(usize, usize)]) -> Option<f64> {
        pairs.iter().map(|&(r, c)| self.get(r, c)).sum()
    }
}

/// Matched `(row, col)` pairs sorted by row. Forbidden pairs never appear.
pub fn solve(costs: &CostMatrix) -> Vec<(usize, usize)> {
    let allowed_abs: f64 = costs.data.iter().flatten().map(|c| c.abs()).sum();
    if costs.data.iter().all(Option::is_none) {
        return Vec::new();
    }
    // any matching using fewer forbidden pairs is strictly cheaper
    let big = 2.0 * allowed_abs + 1.0;
    let transpose = costs.rows > costs.cols;
    let (n, m) = if transpose { (costs.cols, costs.rows) } else { (costs.rows, costs.cols) };
    let cost = |i: usize, j: usize| -> f64 {
        let c = if transpose { costs.get(j, i) } else { costs.get(i, j) };
        c.unwrap_or(big)
    };

    // 1-indexed potentials; column 0 is the virtual start
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
                if used[j] {
                    continue;
                }
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

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| if transpose { (j - 1, p[j] - 1) } else { (p[j] - 1, j - 1) })
        .filter(|&(r, c)| costs.get(r, c).is_some())
        .collect();
    pairs.sort_unstable();
    pairs
}
