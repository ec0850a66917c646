//! Sparse symmetric matrices, preconditioned conjugate gradients and dense saddle-point
//! solves for the local flux problems.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from unsorted triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let max = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut defect = 0.0_f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                defect = defect.max((v - self.get(j, i)).abs());
            }
        }
        if max > 0.0 {
            defect / max
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    Identity,
    Jacobi,
    /// Incomplete Cholesky factorization without fill-in.
    IncompleteCholesky,
}

enum Precond {
    Identity,
    Jacobi(Vec<f64>),
    Ic0(Ic0),
}

impl Precond {
    fn new(a: &CsrMatrix, kind: Preconditioner) -> Self {
        match kind {
            Preconditioner::Identity => Precond::Identity,
            Preconditioner::Jacobi => {
                Precond::Jacobi(a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect())
            }
            Preconditioner::IncompleteCholesky => match Ic0::new(a) {
                Some(f) => Precond::Ic0(f),
                None => Precond::new(a, Preconditioner::Jacobi),
            },
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Identity => z.copy_from_slice(r),
            Precond::Jacobi(d) => {
                for i in 0..r.len() {
                    z[i] = d[i] * r[i];
                }
            }
            Precond::Ic0(f) => f.solve(r, z),
        }
    }
}

/// Lower factor `L` of `A ~ L L^T` on the sparsity pattern of the lower triangle of `A`.
struct Ic0 {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    /// Transposed pattern for the backward sweep.
    t_row_ptr: Vec<usize>,
    t_col_idx: Vec<usize>,
    t_values: Vec<f64>,
}

impl Ic0 {
    fn new(a: &CsrMatrix) -> Option<Self> {
        let n = a.n;
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr[i + 1] = col_idx.len();
        }
        // row-oriented IC(0); rows are sorted, the diagonal is the last entry of each row
        let mut diag_pos = vec![0; n];
        for i in 0..n {
            let last = row_ptr[i + 1].checked_sub(1)?;
            if last < row_ptr[i] || col_idx[last] != i {
                return None;
            }
            diag_pos[i] = last;
        }
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                marker[col_idx[k]] = k;
            }
            for k in row_ptr[i]..diag_pos[i] {
                let j = col_idx[k];
                // l_ij = (a_ij - sum_{m<j} l_im l_jm) / l_jj
                let mut s = values[k];
                for kk in row_ptr[j]..diag_pos[j] {
                    let m = col_idx[kk];
                    let pos = marker[m];
                    if pos != usize::MAX && pos < k {
                        s -= values[pos] * values[kk];
                    }
                }
                values[k] = s / values[diag_pos[j]];
            }
            let mut d = values[diag_pos[i]];
            for k in row_ptr[i]..diag_pos[i] {
                d -= values[k] * values[k];
            }
            if d <= 0.0 {
                return None;
            }
            values[diag_pos[i]] = d.sqrt();
            for k in row_ptr[i]..row_ptr[i + 1] {
                marker[col_idx[k]] = usize::MAX;
            }
        }
        let mut counts = vec![0; n + 1];
        for &j in &col_idx {
            counts[j + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let t_row_ptr = counts.clone();
        let mut fill = counts;
        let mut t_col_idx = vec![0; col_idx.len()];
        let mut t_values = vec![0.0; col_idx.len()];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let j = col_idx[k];
                t_col_idx[fill[j]] = i;
                t_values[fill[j]] = values[k];
                fill[j] += 1;
            }
        }
        Some(Ic0 { n, row_ptr, col_idx, values, t_row_ptr, t_col_idx, t_values })
    }

    fn solve(&self, r: &[f64], z: &mut [f64]) {
        // L y = r
        for i in 0..self.n {
            let mut s = r[i];
            let end = self.row_ptr[i + 1] - 1;
            for k in self.row_ptr[i]..end {
                s -= self.values[k] * z[self.col_idx[k]];
            }
            z[i] = s / self.values[end];
        }
        // L^T z = y; row i of L^T is column i of L, diagonal first
        for i in (0..self.n).rev() {
            let start = self.t_row_ptr[i];
            let mut s = z[i];
            for k in (start + 1)..self.t_row_ptr[i + 1] {
                s -= self.t_values[k] * z[self.t_col_idx[k]];
            }
            z[i] = s / self.t_values[start];
        }
    }
}

/// Outcome of a converged conjugate gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients for an SPD matrix, stopping at relative residual
/// `tol` (measured against `|b|`).
pub fn cg_solve(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    preconditioner: Preconditioner,
) -> Result<CgSolution> {
    let n = a.n;
    let bnorm = norm(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        return Ok(CgSolution { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let pre = Precond::new(a, preconditioner);
    let mut r = a.matvec(&x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut res = norm(&r) / bnorm;
    let mut it = 0;
    while res > tol {
        if it >= max_iter {
            return Err(Error::NotConverged { iterations: it, residual: res });
        }
        a.matvec_into(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(Error::NotConverged { iterations: it, residual: res });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = norm(&r) / bnorm;
        it += 1;
    }
    Ok(CgSolution { x, iterations: it, residual: res })
}

/// Solves `a x = b` for a symmetric positive definite `a` with a fill-reducing sparse
/// Cholesky factorization. Semidefinite matrices, on which the factorization breaks down,
/// are handed to IC(0)-preconditioned CG with relative tolerance `tol`.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<CgSolution> {
    use faer::prelude::Solve;
    use faer::sparse::{SparseColMat, Triplet};
    let n = a.n;
    if n == 0 {
        return Ok(CgSolution { x: Vec::new(), iterations: 0, residual: 0.0 });
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(CgSolution { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let mut triplets = Vec::with_capacity(a.nnz());
    for i in 0..n {
        for (j, v) in a.row(i) {
            triplets.push(Triplet::new(j, i, v));
        }
    }
    let direct = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .ok()
        .and_then(|m| m.sp_cholesky(faer::Side::Lower).ok());
    if let Some(llt) = direct {
        let rhs = faer::Col::<f64>::from_fn(n, |i| b[i]);
        let mut x: Vec<f64> = llt.solve(&rhs).iter().copied().collect();
        // one step of iterative refinement
        let mut r = a.matvec(&x);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let rc = faer::Col::<f64>::from_fn(n, |i| r[i]);
        for (xi, di) in x.iter_mut().zip(llt.solve(&rc).iter()) {
            *xi += di;
        }
        let mut r = a.matvec(&x);
        for i in 0..n {
            r[i] -= b[i];
        }
        let residual = norm(&r) / bnorm;
        if residual.is_finite() && residual <= tol.max(1e-10) {
            return Ok(CgSolution { x, iterations: 0, residual });
        }
    }
    cg_solve(a, b, None, tol, 20 * n + 1000, Preconditioner::IncompleteCholesky)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `min 1/2 w^T M w` subject to `B w = d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSaddleSystem {
    pub m: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// Factorized least-norm operator `d -> w` for fixed `M` and `B`.
#[derive(Debug, Clone)]
pub struct SaddleOperator {
    /// `M^{-1} B^T S^+` with `S = B M^{-1} B^T`.
    pub solution_map: DMatrix<f64>,
    /// `S^+`, mapping data to multipliers.
    pub multiplier_map: DMatrix<f64>,
    /// Orthonormal basis of the left null space of `B` (compatibility conditions on `d`).
    pub null_space: DMatrix<f64>,
}

impl SaddleOperator {
    /// Factorizes the constraint system. A left null space larger than `allowed_nullity`
    /// is rejected.
    pub fn new(m: &DMatrix<f64>, b: &DMatrix<f64>, allowed_nullity: usize) -> Result<Self> {
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("flux mass matrix is not positive definite".into()))?;
        let minv_bt = chol.solve(&b.transpose());
        let mut s = b * &minv_bt;
        s = (&s + s.transpose()) * 0.5;
        if allowed_nullity <= 1 {
            if let Some(op) = Self::by_cholesky(&s, &minv_bt, allowed_nullity) {
                return Ok(op);
            }
        }
        let eig = SymmetricEigen::new(s);
        let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
        let rows = b.nrows();
        let tol = 1e-11 * max.max(f64::MIN_POSITIVE);
        let mut pinv = DMatrix::zeros(rows, rows);
        let mut null_cols = Vec::new();
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(i);
            if lam.abs() > tol {
                pinv += (v * v.transpose()) / lam;
            } else {
                null_cols.push(v.into_owned());
            }
        }
        if null_cols.len() > allowed_nullity {
            return Err(Error::RankDeficient { nullity: null_cols.len(), allowed: allowed_nullity });
        }
        let null_space = if null_cols.is_empty() {
            DMatrix::zeros(rows, 0)
        } else {
            DMatrix::from_columns(&null_cols)
        };
        let solution_map = &minv_bt * &pinv;
        Ok(SaddleOperator { solution_map, multiplier_map: pinv, null_space })
    }

    /// Cholesky route for full row rank, or for a single dependent row that includes the
    /// first constraint, which is then dropped. Returns `None` whenever the reduced
    /// Schur complement is not safely definite, leaving the decision to the eigen route.
    fn by_cholesky(s: &DMatrix<f64>, minv_bt: &DMatrix<f64>, drop: usize) -> Option<Self> {
        let rows = s.nrows();
        if rows <= drop {
            return None;
        }
        let n = rows - drop;
        let scale = s.diagonal().iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
        let chol = s.view((drop, drop), (n, n)).into_owned().cholesky()?;
        let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &x| a.min(x * x));
        if !(min_pivot > 1e-10 * scale) {
            return None;
        }
        let inv = chol.inverse();
        let null_space = if drop == 1 {
            let x = chol.solve(&s.view((1, 0), (n, 1)).into_owned());
            let mut v = DVector::zeros(rows);
            v[0] = 1.0;
            v.rows_mut(1, n).copy_from(&(-x.column(0)));
            let v = v.normalize();
            if (s * &v).norm() > 1e-9 * scale {
                return None;
            }
            DMatrix::from_columns(&[v])
        } else {
            DMatrix::zeros(rows, 0)
        };
        let mut multiplier_map = DMatrix::zeros(rows, rows);
        multiplier_map.view_mut((drop, drop), (n, n)).copy_from(&inv);
        let mut solution_map = DMatrix::zeros(minv_bt.nrows(), rows);
        solution_map.columns_mut(drop, n).copy_from(&(minv_bt.columns(drop, n) * &inv));
        Some(SaddleOperator { solution_map, multiplier_map, null_space })
    }

    /// Relative size of the incompatible part of `d`.
    pub fn incompatibility(&self, d: &DVector<f64>) -> f64 {
        let dn = d.norm();
        if dn == 0.0 || self.null_space.ncols() == 0 {
            return 0.0;
        }
        (self.null_space.transpose() * d).norm() / dn
    }

    pub fn solve(&self, d: &DVector<f64>) -> DVector<f64> {
        &self.solution_map * d
    }
}

/// Least-`M`-norm solution of `B w = d` and the multipliers `lambda` with
/// `M w = B^T lambda`. The constraint rows may carry at most `allowed_nullity` dependent
/// combinations, which the data must satisfy to relative accuracy `1e-8`.
pub fn dense_saddle_solve(
    system: &DenseSaddleSystem,
    allowed_nullity: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let op = SaddleOperator::new(&system.m, &system.b, allowed_nullity)?;
    let inc = op.incompatibility(&system.rhs);
    if inc > 1e-8 {
        return Err(Error::Incompatible(format!("constraint data violates compatibility by {inc:e}")));
    }
    let w = op.solve(&system.rhs);
    let lambda = &op.multiplier_map * &system.rhs;
    Ok((w, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn identity_solve_in_one_iteration() {
        let a = CsrMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 4.0];
        let s = cg_solve(&a, &b, None, 1e-12, 10, Preconditioner::Identity).unwrap();
        assert_eq!(s.iterations, 1);
        assert_eq!(s.x, b);
    }

    #[test]
    fn tridiagonal_system() {
        let a = laplace_1d(4);
        for pre in [Preconditioner::Identity, Preconditioner::Jacobi, Preconditioner::IncompleteCholesky] {
            let s = cg_solve(&a, &[1.0; 4], None, 1e-14, 100, pre).unwrap();
            for (x, e) in s.x.iter().zip([2.0, 3.0, 3.0, 2.0]) {
                assert!((x - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn incomplete_cholesky_is_exact_for_tridiagonal() {
        // no fill-in occurs for a tridiagonal matrix, so one iteration suffices
        let a = laplace_1d(30);
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let s = cg_solve(&a, &b, None, 1e-12, 100, Preconditioner::IncompleteCholesky).unwrap();
        assert!(s.iterations <= 2);
    }

    #[test]
    fn non_convergence_is_reported() {
        let a = laplace_1d(50);
        let err = cg_solve(&a, &[1.0; 50], None, 1e-14, 3, Preconditioner::Identity).unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 3, .. }));
    }

    #[test]
    fn triplets_are_summed() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, 2.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.symmetry_defect(), 0.0);
    }

    #[test]
    fn saddle_zero_data_gives_zero() {
        let m = DMatrix::identity(3, 3);
        let b = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let (w, _) = dense_saddle_solve(&DenseSaddleSystem { m, b, rhs: DVector::zeros(1) }, 0).unwrap();
        assert_eq!(w.norm(), 0.0);
    }

    #[test]
    fn saddle_minimizes_norm() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0]));
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let rhs = DVector::from_vec(vec![1.0, 2.0]);
        let sys = DenseSaddleSystem { m: m.clone(), b: b.clone(), rhs };
        assert!(dense_saddle_solve(&sys, 0).is_err());
        let (w, lambda) = dense_saddle_solve(&sys, 1).unwrap();
        // weights proportional to inverse mass entries
        let s = 1.0 + 0.5 + 0.25;
        assert!((w[0] - 1.0 / s).abs() < 1e-14);
        assert!((w[2] - 0.25 / s).abs() < 1e-14);
        assert!((&m * &w - b.transpose() * lambda).norm() < 1e-13);
        let bad = DenseSaddleSystem { m, b, rhs: DVector::from_vec(vec![1.0, 1.0]) };
        assert!(dense_saddle_solve(&bad, 1).is_err());
    }
}
