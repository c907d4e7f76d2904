//! Optimal rectangular assignment (Hungarian / Kuhn–Munkres).
//!
//! The solver maximizes the number of finite pairs first and minimizes their
//! total cost second; `+∞` (and NaN) entries are unmatchable. Among all optimal
//! assignments it returns the lexicographically smallest row → column map,
//! found by walking the equality subgraph of the optimal dual.

/// Dense cost matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    /// All entries start unmatchable.
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![f64::INFINITY; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut m = Self::new(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged cost matrix");
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    fn finite(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.get(i, j);
        v.is_finite().then_some(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row, if any.
    pub row_to_col: Vec<Option<usize>>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|j| (i, j)))
    }

    pub fn col_to_row(&self, cols: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; cols];
        for (i, j) in self.pairs() {
            out[j] = Some(i);
        }
        out
    }
}

pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let (r, c) = (cost.rows, cost.cols);
    let empty = Assignment {
        row_to_col: vec![None; r],
        total_cost: 0.0,
    };
    if r == 0 || c == 0 {
        return empty;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in cost.data.iter().copied().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return empty;
    }
    let n = r.max(c);
    let span = hi - lo;
    // Any assignment using one more finite pair beats every assignment using
    // fewer, regardless of the finite costs involved.
    let big = (n as f64 + 1.0) * (span + 1.0);
    let mut a = vec![big; n * n];
    for i in 0..r {
        for j in 0..c {
            if let Some(v) = cost.finite(i, j) {
                a[i * n + j] = v - lo;
            }
        }
    }

    let (row_of_col, u, v) = solve_square(&a, n);
    let mut col_of_row = vec![0usize; n];
    for (j, &i) in row_of_col.iter().enumerate() {
        col_of_row[i] = j;
    }
    let tol = 1e-9 * (span + 1.0);
    lexicographic_refine(&a, n, &u, &v, tol, &mut col_of_row);

    let mut row_to_col = vec![None; r];
    let mut total = 0.0;
    for (i, slot) in row_to_col.iter_mut().enumerate() {
        let j = col_of_row[i];
        if j < c {
            if let Some(x) = cost.finite(i, j) {
                *slot = Some(j);
                total += x;
            }
        }
    }
    Assignment {
        row_to_col,
        total_cost: total,
    }
}

/// O(n³) shortest-augmenting-path Hungarian on a square matrix. Returns the
/// row matched to each column and the dual potentials (row, column) such that
/// `a[i][j] - u[i] - v[j] >= 0` with equality on matched pairs.
fn solve_square(a: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based working arrays; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
    let row_of_col = (1..=n).map(|j| p[j] - 1).collect();
    (row_of_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrites `col_of_row` into the lexicographically smallest perfect matching
/// of the equality subgraph. Every perfect matching there is optimal.
fn lexicographic_refine(
    a: &[f64],
    n: usize,
    u: &[f64],
    v: &[f64],
    tol: f64,
    col_of_row: &mut [usize],
) {
    let tight = |i: usize, j: usize| a[i * n + j] - u[i] - v[j] <= tol;
    let mut row_of_col = vec![0usize; n];
    for (i, &j) in col_of_row.iter().enumerate() {
        row_of_col[j] = i;
    }
    let mut col_fixed = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if col_fixed[j] || !tight(i, j) {
                continue;
            }
            if col_of_row[i] == j {
                break;
            }
            // Move i onto j; the displaced row k must reach i's old column
            // through an alternating path among unfixed rows and columns.
            let old = col_of_row[i];
            let k = row_of_col[j];
            let mut seen = vec![false; n];
            seen[j] = true;
            let mut path = Vec::new();
            if augment(
                k, old, i, n, &tight, col_of_row, &col_fixed, &mut seen, &mut path,
            ) {
                // path holds (row, new_col) pairs ending at `old`
                for &(row, col) in &path {
                    col_of_row[row] = col;
                    row_of_col[col] = row;
                }
                col_of_row[i] = j;
                row_of_col[j] = i;
                break;
            }
        }
        col_fixed[col_of_row[i]] = true;
    }
}

#[allow(clippy::too_many_arguments)]
fn augment(
    row: usize,
    target: usize,
    pinned_row: usize,
    n: usize,
    tight: &impl Fn(usize, usize) -> bool,
    col_of_row: &[usize],
    col_fixed: &[bool],
    seen: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    for col in 0..n {
        if seen[col] || col_fixed[col] || !tight(row, col) {
            continue;
        }
        seen[col] = true;
        if col == target {
            path.push((row, col));
            return true;
        }
        // col is currently held by some other row, which must move on
        let next = (0..n).find(|&r| col_of_row[r] == col && r != pinned_row);
        if let Some(next) = next {
            if augment(
                next, target, pinned_row, n, tight, col_of_row, col_fixed, seen, path,
            ) {
                path.push((row, col));
                return true;
            }
        }
    }
    false
}
