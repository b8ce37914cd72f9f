//! Sparse symmetric quasi-definite KKT systems.
//!
//! The interior-point method factors
//!
//! ```text
//! K = [ 0   A' ]     factored as  K + eps*S,  S = diag(+1 ... , -1 ...)
//!     [ A  -H  ]
//! ```
//!
//! with a static regularization `eps` so the LDL' factorization exists for
//! any symmetric permutation. The permutation is reverse Cuthill-McKee,
//! which keeps the time-structured dispatch KKTs close to banded. Solves
//! run a fixed number of iterative-refinement rounds against the
//! unregularized matrix.

/// Upper-triangular symmetric matrix in CSC form (diagonal included).
pub struct SparseSym {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSym {
    /// `y = K x` treating the stored upper triangle as symmetric.
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for j in 0..self.n {
            let xj = x[j];
            for p in self.colptr[j]..self.colptr[j + 1] {
                let i = self.rowidx[p];
                let v = self.values[p];
                y[i] += v * xj;
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
    }
}

/// Builds an upper CSC from (row, col, source) triplets with `row <= col`.
/// Returns the matrix (values zeroed) and, for each triplet in input
/// order, the position of its entry in the value array.
fn build_upper_csc(n: usize, triplets: &[(usize, usize)]) -> (SparseSym, Vec<usize>) {
    let nnz = triplets.len();
    let mut colptr = vec![0usize; n + 1];
    for &(_, j) in triplets {
        colptr[j + 1] += 1;
    }
    for j in 0..n {
        colptr[j + 1] += colptr[j];
    }
    let mut next = colptr.clone();
    let mut order: Vec<usize> = (0..nnz).collect();
    // place column by column, rows sorted within each column
    order.sort_by_key(|&t| (triplets[t].1, triplets[t].0));
    let mut rowidx = vec![0usize; nnz];
    let mut positions = vec![0usize; nnz];
    for t in order {
        let (i, j) = triplets[t];
        let p = next[j];
        next[j] += 1;
        rowidx[p] = i;
        positions[t] = p;
    }
    (SparseSym { n, colptr, rowidx, values: vec![0.0; nnz] }, positions)
}

/// Reverse Cuthill-McKee on the symmetric pattern. Returns `perm` with
/// `perm[new] = old`.
pub fn rcm_order(n: usize, upper: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in upper {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> =
                adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// LDL' factorization of a quasi-definite matrix, QDLDL-style up-looking
/// with an elimination tree computed once.
pub struct LdlSolver {
    n: usize,
    /// permuted KKT, upper CSC; values refreshed each iteration
    pub kkt: SparseSym,
    /// triplet -> value position map (input triplet order)
    pub positions: Vec<usize>,
    /// position of each diagonal entry, by permuted column
    diag_pos: Vec<usize>,
    /// regularization sign per permuted column
    diag_sign: Vec<f64>,
    static_reg: f64,
    // symbolic data
    parent: Vec<isize>,
    lp: Vec<usize>,
    // numeric factor
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    // permutation: perm[new] = old
    perm: Vec<usize>,
    // workspaces
    work_y: Vec<f64>,
    work_marker: Vec<bool>,
    work_elim: Vec<usize>,
    work_yidx: Vec<usize>,
    work_lnext: Vec<usize>,
    ws_a: Vec<f64>,
    ws_b: Vec<f64>,
    ws_c: Vec<f64>,
    factor_values: Vec<f64>,
    pub dynamic_bumps: usize,
}

pub struct LdlError;

impl LdlSolver {
    /// `triplets` are upper entries `(i, j)` of the unpermuted KKT with
    /// `i <= j`; every diagonal must be present. `neg_range` marks the
    /// index range regularized with `-eps` (the slack block).
    pub fn new(n: usize, triplets: &[(usize, usize)], neg_start: usize, static_reg: f64) -> Self {
        let perm = rcm_order(n, triplets);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let permuted: Vec<(usize, usize)> = triplets
            .iter()
            .map(|&(i, j)| {
                let (pi, pj) = (iperm[i], iperm[j]);
                if pi <= pj {
                    (pi, pj)
                } else {
                    (pj, pi)
                }
            })
            .collect();
        let (kkt, positions) = build_upper_csc(n, &permuted);

        let mut diag_pos = vec![usize::MAX; n];
        for j in 0..n {
            for p in kkt.colptr[j]..kkt.colptr[j + 1] {
                if kkt.rowidx[p] == j {
                    diag_pos[j] = p;
                }
            }
            assert!(diag_pos[j] != usize::MAX, "missing diagonal in KKT column {j}");
        }
        let mut diag_sign = vec![0.0; n];
        for old in 0..n {
            diag_sign[iperm[old]] = if old < neg_start { 1.0 } else { -1.0 };
        }

        // elimination tree + column counts of L
        let mut parent = vec![-1isize; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        for j in 0..n {
            flag[j] = j;
            for p in kkt.colptr[j]..kkt.colptr[j + 1] {
                let mut i = kkt.rowidx[p];
                if i == j {
                    continue;
                }
                while flag[i] != j {
                    if parent[i] == -1 {
                        parent[i] = j as isize;
                    }
                    lnz[i] += 1;
                    flag[i] = j;
                    i = parent[i] as usize;
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + lnz[j];
        }
        let total = lp[n];

        LdlSolver {
            n,
            kkt,
            positions,
            diag_pos,
            diag_sign,
            static_reg,
            parent,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            perm,
            work_y: vec![0.0; n],
            work_marker: vec![false; n],
            work_elim: vec![0; n],
            work_yidx: vec![0; n],
            work_lnext: vec![0; n],
            ws_a: vec![0.0; n],
            ws_b: vec![0.0; n],
            ws_c: vec![0.0; n],
            factor_values: vec![0.0; triplets.len()],
            dynamic_bumps: 0,
        }
    }

    /// Writes a value to the entry created from input triplet `t`.
    /// Entries written twice accumulate, so callers zero first via
    /// [`LdlSolver::clear_values`].
    pub fn set(&mut self, t: usize, v: f64) {
        self.kkt.values[self.positions[t]] += v;
    }

    pub fn clear_values(&mut self) {
        self.kkt.values.fill(0.0);
    }

    /// Numeric factorization of the currently stored values plus the
    /// signed static regularization.
    pub fn factor(&mut self) -> Result<(), LdlError> {
        let n = self.n;
        self.factor_values.resize(self.kkt.values.len(), 0.0);
        self.factor_values.copy_from_slice(&self.kkt.values);
        for j in 0..n {
            self.factor_values[self.diag_pos[j]] += self.static_reg * self.diag_sign[j];
        }

        let vals = &self.factor_values;
        let colptr = &self.kkt.colptr;
        let rowidx = &self.kkt.rowidx;
        self.work_lnext.fill(0);
        self.work_marker.fill(false);

        // minimum pivot magnitude; the NT blocks blow up near convergence
        // so this must not scale with the matrix maximum
        let min_pivot = 1e-13;

        for k in 0..n {
            let mut dk = 0.0;
            let mut nnz_y = 0usize;
            self.work_marker[k] = true;
            for p in colptr[k]..colptr[k + 1] {
                let i = rowidx[p];
                if i == k {
                    dk = vals[p];
                    continue;
                }
                self.work_y[i] = vals[p];
                // walk the etree from i toward k, collecting new nodes
                let mut b = i;
                let mut ne = 0usize;
                while !self.work_marker[b] {
                    self.work_marker[b] = true;
                    self.work_elim[ne] = b;
                    ne += 1;
                    b = self.parent[b] as usize;
                }
                while ne > 0 {
                    ne -= 1;
                    self.work_yidx[nnz_y] = self.work_elim[ne];
                    nnz_y += 1;
                }
            }
            // eliminate in topological order (reverse of collection)
            for yi in (0..nnz_y).rev() {
                let c = self.work_yidx[yi];
                let yv = self.work_y[c];
                let start = self.lp[c];
                let stop = start + self.work_lnext[c];
                for q in start..stop {
                    self.work_y[self.li[q]] -= self.lx[q] * yv;
                }
                let lkc = yv * self.dinv[c];
                self.li[stop] = k;
                self.lx[stop] = lkc;
                self.work_lnext[c] += 1;
                dk -= yv * lkc;
                self.work_y[c] = 0.0;
                self.work_marker[c] = false;
            }
            self.work_marker[k] = false;

            // quasi-definite: the pivot sign is known; bump tiny pivots
            let sign = self.diag_sign[k];
            if dk * sign < min_pivot {
                dk = sign * min_pivot;
                self.dynamic_bumps += 1;
            }
            if dk == 0.0 || !dk.is_finite() {
                return Err(LdlError);
            }
            self.d[k] = dk;
            self.dinv[k] = 1.0 / dk;
        }
        Ok(())
    }

    fn solve_factored(lp: &[usize], li: &[usize], lx: &[f64], dinv: &[f64], x: &mut [f64]) {
        let n = dinv.len();
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                for p in lp[j]..lp[j + 1] {
                    x[li[p]] -= lx[p] * xj;
                }
            }
        }
        for j in 0..n {
            x[j] *= dinv[j];
        }
        for j in (0..n).rev() {
            let mut xj = x[j];
            for p in lp[j]..lp[j + 1] {
                xj -= lx[p] * x[li[p]];
            }
            x[j] = xj;
        }
    }

    /// Solves `K x = rhs` (unpermuted coordinates) with two rounds of
    /// iterative refinement against the unregularized matrix.
    pub fn solve(&mut self, rhs: &[f64], x: &mut [f64]) {
        let n = self.n;
        for newi in 0..n {
            self.ws_a[newi] = rhs[self.perm[newi]];
        }
        self.ws_b.copy_from_slice(&self.ws_a);
        Self::solve_factored(&self.lp, &self.li, &self.lx, &self.dinv, &mut self.ws_b);

        for _ in 0..2 {
            // residual r = rhs - K x against the true (unregularized) K
            self.kkt.mul(&self.ws_b, &mut self.ws_c);
            let mut worst = 0.0f64;
            for i in 0..n {
                self.ws_c[i] = self.ws_a[i] - self.ws_c[i];
                worst = worst.max(self.ws_c[i].abs());
            }
            if worst < 1e-14 || !worst.is_finite() {
                break;
            }
            Self::solve_factored(&self.lp, &self.li, &self.lx, &self.dinv, &mut self.ws_c);
            for i in 0..n {
                self.ws_b[i] += self.ws_c[i];
            }
        }
        for newi in 0..n {
            x[self.perm[newi]] = self.ws_b[newi];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_and_solve_quasi_definite() {
        // [ 2  0  1 ]
        // [ 0  1  1 ]   with the last index in the negative block
        // [ 1  1 -3 ]
        let trips = vec![(0, 0), (1, 1), (2, 2), (0, 2), (1, 2)];
        let mut ldl = LdlSolver::new(3, &trips, 2, 1e-10);
        ldl.clear_values();
        ldl.set(0, 2.0);
        ldl.set(1, 1.0);
        ldl.set(2, -3.0);
        ldl.set(3, 1.0);
        ldl.set(4, 1.0);
        ldl.factor().map_err(|_| ()).unwrap();

        let rhs = vec![1.0, 2.0, 3.0];
        let mut x = vec![0.0; 3];
        ldl.solve(&rhs, &mut x);

        // check K x = rhs
        let kx = [
            2.0 * x[0] + x[2],
            x[1] + x[2],
            x[0] + x[1] - 3.0 * x[2],
        ];
        for i in 0..3 {
            assert!((kx[i] - rhs[i]).abs() < 1e-9, "kx={kx:?}");
        }
    }

    #[test]
    fn rcm_handles_disconnected_graphs() {
        let order = rcm_order(4, &[(0, 1), (2, 3), (0, 0), (1, 1), (2, 2), (3, 3)]);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn larger_random_system_solves_accurately() {
        // banded quasi-definite matrix, n = 40 positive + 40 negative
        let n = 80;
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i, i));
            if i + 1 < n {
                trips.push((i, i + 1));
            }
            if i + 7 < n {
                trips.push((i, i + 7));
            }
        }
        let mut ldl = LdlSolver::new(n, &trips, 40, 1e-9);
        ldl.clear_values();
        let mut vals = Vec::new();
        for (t, &(i, j)) in trips.iter().enumerate() {
            let v = if i == j {
                if i < 40 {
                    3.0 + (i as f64) * 0.01
                } else {
                    -(2.0 + (i as f64) * 0.01)
                }
            } else {
                0.3 * ((i * 7 + j) % 5) as f64 / 5.0
            };
            ldl.set(t, v);
            vals.push(v);
        }
        ldl.factor().map_err(|_| ()).unwrap();

        let rhs: Vec<f64> = (0..n).map(|i| ((i * 13) % 11) as f64 - 5.0).collect();
        let mut x = vec![0.0; n];
        ldl.solve(&rhs, &mut x);

        let mut kx = vec![0.0; n];
        for (t, &(i, j)) in trips.iter().enumerate() {
            let _ = t;
            kx[i] += vals[t] * x[j];
            if i != j {
                kx[j] += vals[t] * x[i];
            }
        }
        for i in 0..n {
            assert!((kx[i] - rhs[i]).abs() < 1e-8);
        }
    }
}
