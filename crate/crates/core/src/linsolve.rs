//! Direct sparse solvers for the symmetric systems produced by assembly.
//!
//! Both solvers use an `LDLᵀ` factorization without pivoting on a
//! symmetrically permuted matrix. The permutation is a nested dissection of
//! the matrix graph; for saddle-point systems the multiplier block is
//! eliminated first, which for a stabilized (negative definite, diagonal)
//! multiplier block leaves an SPD Schur complement on the primal block.
//! Inertia is read off the signs of `D` (Sylvester's law of inertia).
//!
//! Every returned solution carries its certified relative residual.

use std::collections::VecDeque;

use crate::error::{FemError, Result};
use crate::lagrange::SaddleSystem;
use crate::nitsche::LinearSystem;
use crate::sparse::{norm2, CsrMatrix};

pub const SPD_TOLERANCE: f64 = 1e-10;
pub const INDEFINITE_TOLERANCE: f64 = 1e-9;
const MAX_REFINEMENT_STEPS: usize = 4;
// pivots below this fraction of max|A| count as zero
const PIVOT_TOLERANCE: f64 = 1e-13;
const LEAF_SIZE: usize = 48;

/// Counts of positive, negative and zero pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// `‖Ax − b‖ / ‖b‖`, or `‖Ax‖` when `b = 0`.
    pub relative_residual: f64,
}

// ---------------------------------------------------------------------------
// ordering

fn adjacency(a: &CsrMatrix) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); a.nrows];
    for i in 0..a.nrows {
        for (j, _) in a.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for nb in &mut adj {
        nb.sort_unstable();
        nb.dedup();
    }
    adj
}

struct Dissector<'g> {
    adj: &'g [Vec<usize>],
    // stamp[v] == current set id marks membership
    stamp: Vec<usize>,
    level: Vec<usize>,
    next_id: usize,
}

impl<'g> Dissector<'g> {
    fn mark(&mut self, set: &[usize]) -> usize {
        self.next_id += 1;
        for &v in set {
            self.stamp[v] = self.next_id;
        }
        self.next_id
    }

    /// BFS levels from `root` within the marked set `id`.
    fn levels(&mut self, root: usize, id: usize) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        let visit = id.wrapping_neg();
        let mut queue = VecDeque::from([root]);
        self.level[root] = 0;
        self.stamp[root] = visit;
        while let Some(v) = queue.pop_front() {
            let l = self.level[v];
            if out.len() <= l {
                out.push(Vec::new());
            }
            out[l].push(v);
            for &w in &self.adj[v] {
                if self.stamp[w] == id {
                    self.stamp[w] = visit;
                    self.level[w] = l + 1;
                    queue.push_back(w);
                }
            }
        }
        // restore membership
        for lv in &out {
            for &v in lv {
                self.stamp[v] = id;
            }
        }
        out
    }

    fn components(&mut self, set: &[usize]) -> Vec<Vec<usize>> {
        let id = self.mark(set);
        let done = id.wrapping_neg();
        let mut comps = Vec::new();
        for &s in set {
            if self.stamp[s] != id {
                continue;
            }
            let mut comp = vec![s];
            self.stamp[s] = done;
            let mut k = 0;
            while k < comp.len() {
                let v = comp[k];
                k += 1;
                for &w in &self.adj[v] {
                    if self.stamp[w] == id {
                        self.stamp[w] = done;
                        comp.push(w);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    fn dissect(&mut self, set: Vec<usize>, out: &mut Vec<usize>) {
        if set.len() <= LEAF_SIZE {
            out.extend(set);
            return;
        }
        let comps = self.components(&set);
        if comps.len() > 1 {
            for c in comps {
                self.dissect(c, out);
            }
            return;
        }
        let id = self.mark(&set);
        // pseudo-peripheral root: repeat BFS from the last level
        let mut levels = self.levels(set[0], id);
        for _ in 0..8 {
            let far = *levels.last().unwrap().iter().min_by_key(|&&v| self.adj[v].len()).unwrap();
            let cand = self.levels(far, id);
            if cand.len() <= levels.len() {
                break;
            }
            levels = cand;
        }
        if levels.len() < 3 {
            out.extend(set);
            return;
        }
        let half = set.len() / 2;
        let mut acc = 0;
        let mut mid = 1;
        for (l, lv) in levels.iter().enumerate() {
            acc += lv.len();
            if acc >= half {
                mid = l;
                break;
            }
        }
        let mid = mid.clamp(1, levels.len() - 2);
        let first: Vec<usize> = levels[..mid].concat();
        let second: Vec<usize> = levels[mid + 1..].concat();
        let separator = levels[mid].clone();
        self.dissect(first, out);
        self.dissect(second, out);
        out.extend(separator);
    }
}

/// Nested dissection ordering of the nodes `set` of the graph of `a`.
fn nested_dissection(adj: &[Vec<usize>], set: Vec<usize>) -> Vec<usize> {
    let mut d = Dissector {
        adj,
        stamp: vec![0; adj.len()],
        level: vec![0; adj.len()],
        next_id: 0,
    };
    let mut out = Vec::with_capacity(set.len());
    d.dissect(set, &mut out);
    out
}

// ---------------------------------------------------------------------------
// factorization

/// `P A Pᵀ = L D Lᵀ` with unit lower triangular `L` stored by columns.
#[derive(Debug, Clone)]
pub struct LdltFactor {
    n: usize,
    /// `perm[k]` is the original index eliminated at step `k`.
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    d: Vec<f64>,
    inertia: Inertia,
}

enum PivotRule {
    Positive,
    NonZero,
}

impl LdltFactor {
    fn factor(a: &CsrMatrix, perm: Vec<usize>, rule: PivotRule) -> Result<Self> {
        let n = a.nrows;
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        // upper triangle of P A Pᵀ by columns
        let mut counts = vec![0usize; n + 1];
        for i in 0..n {
            for (j, _) in a.row(i) {
                if iperm[i] <= iperm[j] {
                    counts[iperm[j] + 1] += 1;
                }
            }
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let mut next = counts.clone();
        let mut up_row = vec![0usize; counts[n]];
        let mut up_val = vec![0.0; counts[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (pi, pj) = (iperm[i], iperm[j]);
                if pi <= pj {
                    up_row[next[pj]] = pi;
                    up_val[next[pj]] = v;
                    next[pj] += 1;
                }
            }
        }
        let up_ptr = counts;

        // elimination tree and column counts
        const NONE: usize = usize::MAX;
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for j in 0..n {
            flag[j] = j;
            for &start in &up_row[up_ptr[j]..up_ptr[j + 1]] {
                let mut i = start;
                while flag[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    flag[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for i in 0..n {
            col_ptr[i + 1] = col_ptr[i] + lnz[i];
        }
        let total = col_ptr[n];
        let mut row_idx = vec![0usize; total];
        let mut values = vec![0.0; total];
        let mut d = vec![0.0; n];
        let mut fill = col_ptr.clone();

        // up-looking numeric factorization, one row of L per step
        let mut y = vec![0.0; n];
        let mut marked = vec![false; n];
        let mut pattern: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<usize> = Vec::with_capacity(n);
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut inertia = Inertia::default();
        for k in 0..n {
            pattern.clear();
            let mut dk = 0.0;
            for p in up_ptr[k]..up_ptr[k + 1] {
                let i = up_row[p];
                if i == k {
                    dk += up_val[p];
                    continue;
                }
                y[i] += up_val[p];
                if marked[i] {
                    continue;
                }
                let mut t = i;
                stack.clear();
                while t != NONE && t < k && !marked[t] {
                    marked[t] = true;
                    stack.push(t);
                    t = etree[t];
                }
                while let Some(s) = stack.pop() {
                    pattern.push(s);
                }
            }
            // pattern holds a topological order in reverse
            for &c in pattern.iter().rev() {
                let yc = y[c];
                for q in col_ptr[c]..fill[c] {
                    y[row_idx[q]] -= values[q] * yc;
                }
                let lkc = yc / d[c];
                row_idx[fill[c]] = k;
                values[fill[c]] = lkc;
                fill[c] += 1;
                dk -= yc * lkc;
                y[c] = 0.0;
                marked[c] = false;
            }
            let tiny = PIVOT_TOLERANCE * scale;
            match rule {
                PivotRule::Positive if !(dk > tiny) => {
                    return Err(FemError::NotPositiveDefinite {
                        index: perm[k],
                        pivot: dk,
                    })
                }
                PivotRule::NonZero if !(dk.abs() > tiny) => {
                    return Err(FemError::Singular { index: perm[k] })
                }
                _ => {}
            }
            if dk > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            d[k] = dk;
        }
        Ok(LdltFactor {
            n,
            perm,
            col_ptr,
            row_idx,
            values,
            d,
            inertia,
        })
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn nnz_l(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..self.n {
            let xj = x[j];
            for q in self.col_ptr[j]..self.col_ptr[j + 1] {
                x[self.row_idx[q]] -= self.values[q] * xj;
            }
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for j in (0..self.n).rev() {
            let mut s = x[j];
            for q in self.col_ptr[j]..self.col_ptr[j + 1] {
                s -= self.values[q] * x[self.row_idx[q]];
            }
            x[j] = s;
        }
        let mut out = vec![0.0; self.n];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = x[k];
        }
        out
    }
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let ax = a.mul_vec(x).expect("dimensions checked by caller");
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let bn = norm2(b);
    let rel = if bn > 0.0 { norm2(&r) / bn } else { norm2(&r) };
    (r, rel)
}

/// A factorized matrix that can be reused for several right-hand sides.
#[derive(Debug, Clone)]
pub struct FactorizedMatrix {
    matrix: CsrMatrix,
    factor: LdltFactor,
    tolerance: f64,
}

impl FactorizedMatrix {
    /// Cholesky-type factorization; fails on the first non-positive pivot.
    pub fn spd(matrix: &CsrMatrix) -> Result<Self> {
        check_square_symmetric(matrix)?;
        let adj = adjacency(matrix);
        let perm = nested_dissection(&adj, (0..matrix.nrows).collect());
        let factor = LdltFactor::factor(matrix, perm, PivotRule::Positive)?;
        Ok(FactorizedMatrix {
            matrix: matrix.clone(),
            factor,
            tolerance: SPD_TOLERANCE,
        })
    }

    /// Symmetric indefinite factorization of a `[primal; multiplier]` block
    /// matrix. Multipliers are eliminated first; if that hits a zero pivot
    /// (an unstabilized multiplier block) the primal-first order is tried.
    pub fn saddle(matrix: &CsrMatrix, n_primal: usize) -> Result<Self> {
        check_square_symmetric(matrix)?;
        let n = matrix.nrows;
        if n_primal > n {
            return Err(FemError::DimensionMismatch {
                expected: n,
                got: n_primal,
            });
        }
        let adj = adjacency(matrix);
        let primal = nested_dissection(&adj, (0..n_primal).collect());
        let multipliers = nested_dissection(&adj, (n_primal..n).collect());
        let first: Vec<usize> = multipliers.iter().chain(&primal).copied().collect();
        let factor = match LdltFactor::factor(matrix, first, PivotRule::NonZero) {
            Ok(f) => f,
            Err(FemError::Singular { .. }) => {
                let second: Vec<usize> = primal.iter().chain(&multipliers).copied().collect();
                LdltFactor::factor(matrix, second, PivotRule::NonZero)?
            }
            Err(e) => return Err(e),
        };
        Ok(FactorizedMatrix {
            matrix: matrix.clone(),
            factor,
            tolerance: INDEFINITE_TOLERANCE,
        })
    }

    pub fn inertia(&self) -> Inertia {
        self.factor.inertia()
    }

    pub fn factor(&self) -> &LdltFactor {
        &self.factor
    }

    /// Solves with iterative refinement and certifies the residual.
    pub fn solve(&self, b: &[f64]) -> Result<Solution> {
        if b.len() != self.matrix.nrows {
            return Err(FemError::DimensionMismatch {
                expected: self.matrix.nrows,
                got: b.len(),
            });
        }
        if b.iter().all(|&v| v == 0.0) {
            return Ok(Solution {
                x: vec![0.0; b.len()],
                relative_residual: 0.0,
            });
        }
        let mut x = self.factor.solve(b);
        let (mut r, mut rel) = relative_residual(&self.matrix, &x, b);
        for _ in 0..MAX_REFINEMENT_STEPS {
            if rel <= 1e-15 {
                break;
            }
            let dx = self.factor.solve(&r);
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let (r2, rel2) = relative_residual(&self.matrix, &cand, b);
            if rel2 >= rel {
                break;
            }
            x = cand;
            r = r2;
            rel = rel2;
        }
        if !(rel <= self.tolerance) {
            return Err(FemError::ResidualTooLarge {
                residual: rel,
                tolerance: self.tolerance,
            });
        }
        Ok(Solution {
            x,
            relative_residual: rel,
        })
    }
}

fn check_square_symmetric(a: &CsrMatrix) -> Result<()> {
    if a.nrows != a.ncols {
        return Err(FemError::DimensionMismatch {
            expected: a.nrows,
            got: a.ncols,
        });
    }
    if !a.is_symmetric(1e-12) {
        return Err(FemError::InvalidArgument(format!(
            "matrix is not symmetric (defect {:e})",
            a.symmetry_defect()
        )));
    }
    Ok(())
}

/// Solves a symmetric positive definite system.
pub fn solve_spd(system: &LinearSystem) -> Result<Solution> {
    FactorizedMatrix::spd(&system.matrix)?.solve(&system.rhs)
}

/// Solves a symmetric indefinite saddle-point system and reports inertia.
pub fn solve_sym_indefinite(system: &SaddleSystem) -> Result<(Solution, Inertia)> {
    let f = FactorizedMatrix::saddle(&system.matrix, system.n_primal)?;
    let sol = f.solve(&system.rhs)?;
    Ok((sol, f.inertia()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;
    use proptest::prelude::*;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap()).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                let (top, bottom) = a.split_at_mut(i);
                for (x, y) in bottom[0][k..].iter_mut().zip(&top[k][k..]) {
                    *x -= f * y;
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    fn laplacian_2d(m: usize) -> CsrMatrix {
        let id = |i: usize, j: usize| j * m + i;
        let mut b = TripletBuilder::new(m * m, m * m);
        for j in 0..m {
            for i in 0..m {
                b.push(id(i, j), id(i, j), 4.0);
                if i + 1 < m {
                    b.push_sym(id(i, j), id(i + 1, j), -1.0);
                }
                if j + 1 < m {
                    b.push_sym(id(i, j), id(i, j + 1), -1.0);
                }
            }
        }
        b.build()
    }

    #[test]
    fn identity_and_two_by_two() {
        let sys = LinearSystem::new(CsrMatrix::identity(3), vec![1.0, -2.0, 3.5]);
        assert_eq!(solve_spd(&sys).unwrap().x, vec![1.0, -2.0, 3.5]);
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let sol = solve_spd(&LinearSystem::new(a, vec![3.0, 3.0])).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-15 && (sol.x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let sys = LinearSystem::new(laplacian_2d(5), vec![0.0; 25]);
        assert_eq!(solve_spd(&sys).unwrap().x, vec![0.0; 25]);
    }

    #[test]
    fn indefinite_matrix_is_rejected_as_spd() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            solve_spd(&LinearSystem::new(a, vec![1.0, 0.0])),
            Err(FemError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn diagonal_saddle_inertia() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        let sys = SaddleSystem::new(a, vec![1.0, 1.0], 1);
        let (sol, inertia) = solve_sym_indefinite(&sys).unwrap();
        assert_eq!(sol.x, vec![1.0, -1.0]);
        assert_eq!(
            inertia,
            Inertia {
                positive: 1,
                negative: 1,
                zero: 0
            }
        );
    }

    #[test]
    fn unstabilized_saddle_falls_back_to_primal_first() {
        // [[2, 1], [1, 0]]: zero multiplier diagonal
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 0.0]]);
        let (sol, inertia) = solve_sym_indefinite(&SaddleSystem::new(a, vec![3.0, 1.0], 1)).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-14 && (sol.x[1] - 1.0).abs() < 1e-14);
        assert_eq!((inertia.positive, inertia.negative), (1, 1));
    }

    #[test]
    fn singular_saddle_is_reported() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(
            solve_sym_indefinite(&SaddleSystem::new(a, vec![1.0, 1.0], 1)),
            Err(FemError::Singular { .. })
        ));
    }

    #[test]
    fn nested_dissection_is_a_permutation_and_limits_fill() {
        let a = laplacian_2d(40);
        let adj = adjacency(&a);
        let mut perm = nested_dissection(&adj, (0..a.nrows).collect());
        let f = LdltFactor::factor(&a, perm.clone(), PivotRule::Positive).unwrap();
        perm.sort_unstable();
        assert_eq!(perm, (0..a.nrows).collect::<Vec<_>>());
        // banded natural ordering fills ~ m^3 = 64000 entries
        assert!(f.nnz_l() < 40_000, "fill {}", f.nnz_l());
    }

    #[test]
    fn factorization_is_deterministic() {
        let a = laplacian_2d(20);
        let b: Vec<f64> = (0..400).map(|i| (i as f64 * 0.37).sin()).collect();
        let s1 = solve_spd(&LinearSystem::new(a.clone(), b.clone())).unwrap();
        let s2 = solve_spd(&LinearSystem::new(a, b)).unwrap();
        assert_eq!(s1, s2);
    }

    proptest! {
        #[test]
        fn random_spd_matches_dense_solve(
            n in 2usize..14,
            seed in proptest::collection::vec(-1.0f64..1.0, 14 * 14),
            rhs in proptest::collection::vec(-5.0f64..5.0, 14),
        ) {
            // A = B Bᵀ + n I with a sparsified B
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        let bik = if (i + k) % 3 == 0 { seed[i * 14 + k] } else { 0.0 };
                        let bjk = if (j + k) % 3 == 0 { seed[j * 14 + k] } else { 0.0 };
                        s += bik * bjk;
                    }
                    dense[i][j] = s + if i == j { n as f64 } else { 0.0 };
                }
            }
            let b = rhs[..n].to_vec();
            let expect = dense_solve(dense.clone(), b.clone());
            let sol = solve_spd(&LinearSystem::new(CsrMatrix::from_dense(&dense), b)).unwrap();
            for (x, e) in sol.x.iter().zip(&expect) {
                prop_assert!((x - e).abs() < 1e-10 * (1.0 + e.abs()));
            }
            prop_assert!(sol.relative_residual <= SPD_TOLERANCE);
        }

        #[test]
        fn random_quasidefinite_inertia(
            np in 1usize..8,
            nm in 1usize..6,
            vals in proptest::collection::vec(-1.0f64..1.0, 64),
        ) {
            // [[K, B], [Bᵀ, -D]] with K SPD, D positive diagonal
            let n = np + nm;
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..np {
                dense[i][i] = 3.0 + vals[i].abs();
                if i + 1 < np {
                    dense[i][i + 1] = 0.5 * vals[i + 8];
                    dense[i + 1][i] = dense[i][i + 1];
                }
            }
            for k in 0..nm {
                let r = np + k;
                dense[r][r] = -(0.5 + vals[20 + k].abs());
                for i in 0..np {
                    let v = vals[(30 + k * np + i) % 64];
                    dense[r][i] = v;
                    dense[i][r] = v;
                }
            }
            let b: Vec<f64> = (0..n).map(|i| vals[(i * 7) % 64] + 0.1).collect();
            let expect = dense_solve(dense.clone(), b.clone());
            let sys = SaddleSystem::new(CsrMatrix::from_dense(&dense), b, np);
            let (sol, inertia) = solve_sym_indefinite(&sys).unwrap();
            prop_assert_eq!(inertia.negative, nm);
            prop_assert_eq!(inertia.positive, np);
            for (x, e) in sol.x.iter().zip(&expect) {
                prop_assert!((x - e).abs() < 1e-9 * (1.0 + e.abs()));
            }
        }
    }
}
