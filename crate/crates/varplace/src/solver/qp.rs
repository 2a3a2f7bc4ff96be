//! Equality-constrained convex QP:
//!
//! ```text
//!     minimize    1/2 x' Q x + c' x
//!     subject to  A x = u
//! ```
//!
//! solved through one sparse LDLᵀ factorization of the bordered KKT matrix
//!
//! ```text
//!     [ Q + eI   A' ] [x]   [-c]
//!     [ A      -eI ] [λ] = [ u]
//! ```
//!
//! with e = 1e-10. The regularization makes the system quasi-definite, so the
//! no-pivoting factorization below is well defined; two rounds of iterative
//! refinement against the unregularized system take the KKT residual to the
//! contract tolerance. Cell columns are pre-ordered with reverse Cuthill-McKee
//! to keep fill-in down on netlist-shaped graphs; constraint columns stay last,
//! where their pivots must come out negative.

use super::SolverError;

const REG: f64 = 1e-10;
/// A constraint pivot this close to the bare regularization value means the
/// row was a linear combination of earlier rows.
const RANK_TOL: f64 = 1e-8;
const REFINE_STEPS: usize = 2;

/// Symmetric sparse matrix given by its lower triangle.
#[derive(Debug, Clone)]
pub struct SparseSymmetric {
    pub dim: usize,
    /// (row, col, value) with row >= col; duplicates are summed.
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSymmetric {
    pub fn new(dim: usize) -> Self {
        SparseSymmetric {
            dim,
            entries: Vec::new(),
        }
    }

    /// Add `v` at (i, j), folding into the lower triangle.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        if i >= j {
            self.entries.push((i, j, v));
        } else {
            self.entries.push((j, i, v));
        }
    }
}

/// Equality-constrained QP instance. `a` holds dense constraint rows.
#[derive(Debug, Clone)]
pub struct EqConstrainedQp {
    pub q: SparseSymmetric,
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub u: Vec<f64>,
}

struct Csc {
    n: usize,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    values: Vec<f64>,
}

/// Build upper-triangle CSC from (row ≤ col) triples, summing duplicates.
fn build_upper_csc(n: usize, mut triples: Vec<(usize, usize, f64)>) -> Csc {
    triples.sort_unstable_by_key(|&(r, c, _)| (c, r));
    let mut colptr = vec![0usize; n + 1];
    let mut rowidx: Vec<usize> = Vec::with_capacity(triples.len());
    let mut values: Vec<f64> = Vec::with_capacity(triples.len());
    let mut it = triples.into_iter().peekable();
    for c in 0..n {
        while let Some(&(r, tc, _)) = it.peek() {
            if tc != c {
                break;
            }
            debug_assert!(r <= c);
            let mut v = 0.0;
            while let Some(&(r2, c2, v2)) = it.peek() {
                if r2 != r || c2 != c {
                    break;
                }
                v += v2;
                it.next();
            }
            rowidx.push(r);
            values.push(v);
        }
        colptr[c + 1] = rowidx.len();
    }
    Csc {
        n,
        colptr,
        rowidx,
        values,
    }
}

/// Sparse LDLᵀ factor with unit lower-triangular L.
struct LdlFactor {
    n: usize,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    values: Vec<f64>,
    d: Vec<f64>,
}

/// Up-looking LDLᵀ of a symmetric matrix given by its upper triangle in CSC.
/// No pivoting: valid for quasi-definite matrices. Returns an error only if a
/// pivot is exactly zero.
fn ldl_factorize(a: &Csc) -> Result<LdlFactor, SolverError> {
    let n = a.n;
    let mut parent = vec![usize::MAX; n];
    let mut lnz = vec![0usize; n];
    let mut flag = vec![usize::MAX; n];

    // Symbolic: elimination tree and column counts.
    for k in 0..n {
        parent[k] = usize::MAX;
        flag[k] = k;
        for p in a.colptr[k]..a.colptr[k + 1] {
            let mut i = a.rowidx[p];
            while i < k && flag[i] != k {
                if parent[i] == usize::MAX {
                    parent[i] = k;
                }
                lnz[i] += 1;
                flag[i] = k;
                i = parent[i];
            }
        }
    }
    let mut colptr = vec![0usize; n + 1];
    for k in 0..n {
        colptr[k + 1] = colptr[k] + lnz[k];
    }
    let nnz = colptr[n];
    let mut rowidx = vec![0usize; nnz];
    let mut values = vec![0.0f64; nnz];
    let mut next = colptr.clone();
    let mut d = vec![0.0f64; n];
    let mut y = vec![0.0f64; n];
    let mut pattern = vec![0usize; n];

    // Numeric: compute row k of L via a sparse triangular solve.
    for k in 0..n {
        let mut top = n;
        flag[k] = k;
        for p in a.colptr[k]..a.colptr[k + 1] {
            let mut i = a.rowidx[p];
            y[i] += a.values[p];
            let mut len = 0usize;
            while i < k && flag[i] != k {
                pattern[len] = i;
                len += 1;
                flag[i] = k;
                i = parent[i];
            }
            while len > 0 {
                len -= 1;
                top -= 1;
                pattern[top] = pattern[len];
            }
        }
        d[k] = y[k];
        y[k] = 0.0;
        for t in top..n {
            let i = pattern[t];
            let yi = y[i];
            y[i] = 0.0;
            let lki = yi / d[i];
            for p in colptr[i]..next[i] {
                y[rowidx[p]] -= values[p] * yi;
            }
            d[k] -= lki * yi;
            rowidx[next[i]] = k;
            values[next[i]] = lki;
            next[i] += 1;
        }
        if d[k] == 0.0 {
            return Err(SolverError::RankDeficientConstraints);
        }
    }
    Ok(LdlFactor {
        n,
        colptr,
        rowidx,
        values,
        d,
    })
}

impl LdlFactor {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for j in 0..self.n {
            let xj = x[j];
            for p in self.colptr[j]..self.colptr[j + 1] {
                x[self.rowidx[p]] -= self.values[p] * xj;
            }
        }
        for j in 0..self.n {
            x[j] /= self.d[j];
        }
        for j in (0..self.n).rev() {
            let mut acc = x[j];
            for p in self.colptr[j]..self.colptr[j + 1] {
                acc -= self.values[p] * x[self.rowidx[p]];
            }
            x[j] = acc;
        }
        x
    }
}

/// Reverse Cuthill-McKee order of the Q graph. `order[new] = old`.
fn rcm_order(n: usize, entries: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(r, c, v) in entries {
        if r != c && v != 0.0 {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    // Seed BFS from the lowest-degree unvisited vertex each component.
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (adj[v].len(), v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let mut queue = std::collections::VecDeque::from([seed]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (adj[w].len(), w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Solve the QP. Returns the primal solution and the constraint multipliers.
pub fn solve_eq_qp(p: &EqConstrainedQp) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let n = p.q.dim;
    assert_eq!(p.c.len(), n, "c length must match Q dimension");
    assert_eq!(p.a.len(), p.u.len(), "one rhs entry per constraint row");
    for row in &p.a {
        assert_eq!(row.len(), n, "constraint row length must match Q dimension");
    }

    // Deduplicate identical (row, rhs) pairs; drop zero rows with zero rhs.
    let mut keep: Vec<usize> = Vec::new();
    for (i, row) in p.a.iter().enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            if p.u[i] == 0.0 {
                continue;
            }
            // Zero row with nonzero rhs can never be satisfied.
            return Err(SolverError::RankDeficientConstraints);
        }
        let dup = keep
            .iter()
            .any(|&j| p.u[j] == p.u[i] && p.a[j] == p.a[i]);
        if !dup {
            keep.push(i);
        }
    }
    let m = keep.len();
    let dim = n + m;

    // Permute cells with RCM; constraints stay last in given order.
    let order = rcm_order(n, &p.q.entries);
    let mut inv = vec![0usize; n];
    for (new, &old) in order.iter().enumerate() {
        inv[old] = new;
    }

    let mut triples: Vec<(usize, usize, f64)> = Vec::with_capacity(p.q.entries.len() + m * 4 + dim);
    for &(r, c, v) in &p.q.entries {
        let (pr, pc) = (inv[r], inv[c]);
        let (lo, hi) = if pr <= pc { (pr, pc) } else { (pc, pr) };
        triples.push((lo, hi, v));
    }
    for j in 0..n {
        triples.push((j, j, REG));
    }
    for (k, &ci) in keep.iter().enumerate() {
        let col = n + k;
        for (j, &v) in p.a[ci].iter().enumerate() {
            if v != 0.0 {
                triples.push((inv[j], col, v));
            }
        }
        triples.push((col, col, -REG));
    }

    let kkt = build_upper_csc(dim, triples);
    let factor = ldl_factorize(&kkt)?;

    // Sign pattern of a quasi-definite KKT: positive then negative pivots.
    for j in 0..n {
        if factor.d[j] <= 0.0 {
            return Err(SolverError::IndefiniteReducedSystem);
        }
    }
    for j in n..dim {
        if factor.d[j].abs() <= RANK_TOL {
            return Err(SolverError::RankDeficientConstraints);
        }
        if factor.d[j] >= 0.0 {
            return Err(SolverError::IndefiniteReducedSystem);
        }
    }

    // Right-hand side in permuted coordinates.
    let mut rhs = vec![0.0f64; dim];
    for j in 0..n {
        rhs[inv[j]] = -p.c[j];
    }
    for (k, &ci) in keep.iter().enumerate() {
        rhs[n + k] = p.u[ci];
    }

    let mut sol = factor.solve(&rhs);

    // Iterative refinement against the unregularized KKT operator.
    for _ in 0..REFINE_STEPS {
        let r = kkt_residual(p, &order, &keep, &sol, &rhs);
        let dx = factor.solve(&r);
        for (s, d) in sol.iter_mut().zip(&dx) {
            *s += d;
        }
    }

    // Un-permute.
    let mut x = vec![0.0f64; n];
    for (new, &old) in order.iter().enumerate() {
        x[old] = sol[new];
    }
    let mut lambda = vec![0.0f64; p.a.len()];
    for (k, &ci) in keep.iter().enumerate() {
        lambda[ci] = sol[n + k];
    }
    Ok((x, lambda))
}

/// Residual rhs − K·sol of the *unregularized* KKT system, in permuted
/// coordinates (`sol` and the result live in permuted space).
fn kkt_residual(
    p: &EqConstrainedQp,
    order: &[usize],
    keep: &[usize],
    sol: &[f64],
    rhs: &[f64],
) -> Vec<f64> {
    let n = p.q.dim;
    let mut inv = vec![0usize; n];
    for (new, &old) in order.iter().enumerate() {
        inv[old] = new;
    }
    let mut ax = vec![0.0f64; rhs.len()];
    for &(r, c, v) in &p.q.entries {
        let (pr, pc) = (inv[r], inv[c]);
        ax[pr] += v * sol[pc];
        if pr != pc {
            ax[pc] += v * sol[pr];
        }
    }
    for (k, &ci) in keep.iter().enumerate() {
        let lam = sol[n + k];
        for (j, &v) in p.a[ci].iter().enumerate() {
            if v != 0.0 {
                ax[inv[j]] += v * lam;
                ax[n + k] += v * sol[inv[j]];
            }
        }
    }
    rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
}

/// Max-norm KKT residuals (stationarity, feasibility) of a solution.
pub fn kkt_residual_norms(p: &EqConstrainedQp, x: &[f64], lambda: &[f64]) -> (f64, f64) {
    let n = p.q.dim;
    let mut grad = p.c.clone();
    for &(r, c, v) in &p.q.entries {
        grad[r] += v * x[c];
        if r != c {
            grad[c] += v * x[r];
        }
    }
    for (i, row) in p.a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            grad[j] += v * lambda[i];
        }
    }
    let stat = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut feas = 0.0f64;
    for (i, row) in p.a.iter().enumerate() {
        let ax: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
        feas = feas.max((ax - p.u[i]).abs());
    }
    let _ = n;
    (stat, feas)
}

/// Objective value 1/2 x'Qx + c'x.
pub fn objective(p: &EqConstrainedQp, x: &[f64]) -> f64 {
    let mut quad = 0.0;
    for &(r, c, v) in &p.q.entries {
        if r == c {
            quad += v * x[r] * x[r];
        } else {
            quad += 2.0 * v * x[r] * x[c];
        }
    }
    0.5 * quad + p.c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}
