//! Sparse and dense linear algebra used by every discretization.
//!
//! Sparse matrices are assembled as triplets and compressed to CSC with
//! duplicates summed. Symmetric systems (SPD or quasi-definite saddle point)
//! are factored once with a supernodal LDLᵀ and reused for many right-hand
//! sides.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LdltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

pub use faer::Mat as DenseMatrix;

/// Triplet builder. Duplicate entries are summed on compression.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, ..Default::default() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            vals: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.rows.push(i);
        self.cols.push(j);
        self.vals.push(v);
    }

    /// Pushes `v` at (i, j) and, off the diagonal, at (j, i).
    #[inline]
    pub fn push_sym(&mut self, i: usize, j: usize, v: f64) {
        self.push(i, j, v);
        if i != j {
            self.push(j, i, v);
        }
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn build(self) -> CscMatrix {
        CscMatrix::from_triplets(self.nrows, self.ncols, &self.rows, &self.cols, &self.vals)
    }
}

/// Compressed sparse column matrix with sorted row indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, col_ptr: vec![0; ncols + 1], row_idx: vec![], vals: vec![] }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::identity(d.len());
        m.vals.copy_from_slice(d);
        m
    }

    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        rows: &[usize],
        cols: &[usize],
        vals: &[f64],
    ) -> Self {
        let mut count = vec![0usize; ncols + 1];
        for &c in cols {
            count[c + 1] += 1;
        }
        for j in 0..ncols {
            count[j + 1] += count[j];
        }
        let mut next = count.clone();
        let mut ri = vec![0usize; vals.len()];
        let mut rv = vec![0.0; vals.len()];
        for k in 0..vals.len() {
            let p = next[cols[k]];
            ri[p] = rows[k];
            rv[p] = vals[k];
            next[cols[k]] += 1;
        }
        // sort each column and merge duplicates
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(vals.len());
        let mut out = Vec::with_capacity(vals.len());
        let mut perm: Vec<usize> = Vec::new();
        for j in 0..ncols {
            let (s, e) = (count[j], count[j + 1]);
            perm.clear();
            perm.extend(s..e);
            perm.sort_unstable_by_key(|&p| ri[p]);
            let mut last = usize::MAX;
            for &p in &perm {
                if ri[p] == last {
                    *out.last_mut().unwrap() += rv[p];
                } else {
                    row_idx.push(ri[p]);
                    out.push(rv[p]);
                    last = ri[p];
                }
            }
            col_ptr[j + 1] = row_idx.len();
        }
        Self { nrows, ncols, col_ptr, row_idx, vals: out }
    }

    /// Dense to sparse, dropping exact zeros.
    pub fn from_dense(a: MatRef<'_, f64>) -> Self {
        let mut b = TripletBuilder::new(a.nrows(), a.ncols());
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                let v = a[(i, j)];
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }
    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }
    pub fn values(&self) -> &[f64] {
        &self.vals
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    /// Iterator over `(row, value)` of column `j`.
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        match self.row_idx[r.clone()].binary_search(&i) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_acc(x, 1.0, &mut y);
        y
    }

    /// y += s A x
    pub fn mul_vec_acc(&self, x: &[f64], s: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for j in 0..self.ncols {
            let xj = s * x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.vals[p] * xj;
            }
        }
    }

    /// y = Aᵀ x
    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        (0..self.ncols)
            .map(|j| (self.col_ptr[j]..self.col_ptr[j + 1]).map(|p| self.vals[p] * x[self.row_idx[p]]).sum())
            .collect()
    }

    /// xᵀ A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.ncols {
            if y[j] == 0.0 {
                continue;
            }
            let mut c = 0.0;
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                c += self.vals[p] * x[self.row_idx[p]];
            }
            s += c * y[j];
        }
        s
    }

    pub fn transpose(&self) -> Self {
        let mut rows = Vec::with_capacity(self.nnz());
        let mut cols = Vec::with_capacity(self.nnz());
        for j in 0..self.ncols {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                rows.push(j);
                cols.push(self.row_idx[p]);
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &rows, &cols, &self.vals)
    }

    /// Pushes all entries, shifted by (r0, c0), into a builder.
    pub fn push_into(&self, b: &mut TripletBuilder, r0: usize, c0: usize, scale: f64) {
        for j in 0..self.ncols {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                b.push(r0 + self.row_idx[p], c0 + j, scale * self.vals[p]);
            }
        }
    }

    /// Submatrix on the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut rmap = vec![usize::MAX; self.nrows];
        for (k, &r) in rows.iter().enumerate() {
            rmap[r] = k;
        }
        let mut b = TripletBuilder::new(rows.len(), cols.len());
        for (jn, &j) in cols.iter().enumerate() {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = rmap[self.row_idx[p]];
                if i != usize::MAX {
                    b.push(i, jn, self.vals[p]);
                }
            }
        }
        b.build()
    }

    /// `self + s * other` (same shape).
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        self.push_into(&mut b, 0, 0, 1.0);
        other.push_into(&mut b, 0, 0, s);
        b.build()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn norm_inf(&self) -> f64 {
        let mut r = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            for (i, v) in self.col(j) {
                r[i] += v.abs();
            }
        }
        r.into_iter().fold(0.0, f64::max)
    }

    /// Largest |a_ij - a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let d = self.add_scaled(&t, -1.0);
        d.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        let sym = SymbolicSparseColMatRef::new_checked(
            self.nrows,
            self.ncols,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        SparseColMatRef::new(sym, &self.vals)
    }
}

/// Inertia information for a symmetric system.
#[derive(Clone, Debug, PartialEq)]
pub enum SystemKind {
    /// Symmetric positive definite.
    Spd,
    /// Symmetric with a positive definite leading block and a negative
    /// semidefinite trailing block. `signs[i]` is +1 or -1 for each unknown.
    QuasiDefinite { signs: Vec<i8> },
}

/// Reusable sparse LDLᵀ factorization.
///
/// Saddle-point systems are factored with a small negative shift on the
/// trailing block, which makes every symmetric ordering stable; iterative
/// refinement against the unshifted matrix removes the perturbation.
pub struct Factorization {
    symbolic: Arc<SymbolicCholesky<usize>>,
    l_values: Vec<f64>,
    matrix: CscMatrix,
    shifted: bool,
    a_norm: f64,
}

const REFINE_MAX: usize = 30;
const REFINE_TOL: f64 = 1e-15;

impl Factorization {
    pub fn new(a: &CscMatrix, kind: &SystemKind) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch(format!(
                "factorization needs a square matrix, got {}x{}",
                a.nrows, a.ncols
            )));
        }
        let symbolic = factorize_symbolic_cholesky(
            a.as_faer().symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            Default::default(),
        )
        .map_err(|e| Error::SingularSystem(format!("symbolic analysis failed: {e:?}")))?;
        Self::with_symbolic(Arc::new(symbolic), a, kind)
    }

    /// Numeric factorization reusing an existing symbolic analysis. The
    /// sparsity pattern of `a` must match the one used for `symbolic`.
    pub fn with_symbolic(
        symbolic: Arc<SymbolicCholesky<usize>>,
        a: &CscMatrix,
        kind: &SystemKind,
    ) -> Result<Self> {
        let n = a.nrows;
        let (work, signs, delta) = match kind {
            SystemKind::Spd => (None, vec![1i8; n], 0.0),
            SystemKind::QuasiDefinite { signs } => {
                if signs.len() != n {
                    return Err(Error::DimensionMismatch("sign vector length".into()));
                }
                let eps = saddle_shift(a, signs);
                let mut w = a.clone();
                let mut missing = false;
                for j in 0..n {
                    if signs[j] < 0 {
                        let r = w.col_ptr[j]..w.col_ptr[j + 1];
                        match w.row_idx[r.clone()].binary_search(&j) {
                            Ok(p) => w.vals[r.start + p] -= eps,
                            Err(_) => missing = true,
                        }
                    }
                }
                if missing {
                    return Err(Error::DimensionMismatch(
                        "saddle matrices need an explicit diagonal on the negative block".into(),
                    ));
                }
                (Some(w), signs.clone(), eps)
            }
        };
        let target = work.as_ref().unwrap_or(a);
        let mut l_values = vec![0.0; symbolic.len_val()];
        let mut buf = MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()));
        let reg = LdltRegularization {
            dynamic_regularization_signs: if delta > 0.0 { Some(&signs[..]) } else { None },
            dynamic_regularization_delta: delta,
            dynamic_regularization_epsilon: delta * 1e-6,
        };
        let info = symbolic
            .factorize_numeric_ldlt(
                &mut l_values,
                target.as_faer(),
                Side::Lower,
                reg,
                Par::Seq,
                MemStack::new(&mut buf),
                Default::default(),
            )
            .map_err(|e| Error::SingularSystem(format!("numeric LDLT failed: {e:?}")))?;
        let _ = info;
        if matches!(kind, SystemKind::Spd) {
            // An SPD matrix has a strictly positive LDLᵀ diagonal.
            let f = Self { symbolic: symbolic.clone(), l_values, matrix: a.clone(), shifted: false, a_norm: 0.0 };
            f.check_spd()?;
            return Ok(Self { a_norm: a.norm_inf(), ..f });
        }
        Ok(Self { symbolic, l_values, matrix: a.clone(), shifted: true, a_norm: a.norm_inf() })
    }

    fn check_spd(&self) -> Result<()> {
        // Solve with e = ones and verify positivity of the energy; a cheap
        // proxy that catches indefinite or singular input.
        let n = self.matrix.nrows;
        if n == 0 {
            return Ok(());
        }
        let b = vec![1.0; n];
        let x = self.raw_solve(&b);
        let e: f64 = x.iter().zip(&b).map(|(a, b)| a * b).sum();
        if !(e.is_finite() && e > 0.0) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite(format!("energy test gave {e:e}")));
        }
        Ok(())
    }

    pub fn symbolic(&self) -> Arc<SymbolicCholesky<usize>> {
        self.symbolic.clone()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn matrix(&self) -> &CscMatrix {
        &self.matrix
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
        let ldlt = LdltRef::new(&self.symbolic, &self.l_values);
        let mut buf = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        ldlt.solve_in_place_with_conj(Conj::No, rhs.as_mut(), Par::Seq, MemStack::new(&mut buf));
        (0..n).map(|i| rhs[(i, 0)]).collect()
    }

    /// b − A x and max_i |r_i| / (|A||x| + |b|)_i.
    fn componentwise_residual(&self, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
        let m = &self.matrix;
        let mut r = b.to_vec();
        let mut s: Vec<f64> = b.iter().map(|v| v.abs()).collect();
        for j in 0..m.ncols {
            let xj = x[j];
            for p in m.col_ptr[j]..m.col_ptr[j + 1] {
                let i = m.row_idx[p];
                r[i] -= m.vals[p] * xj;
                s[i] += (m.vals[p] * xj).abs();
            }
        }
        let omega = r.iter().zip(&s).fold(0.0f64, |w, (ri, si)| if *si > 0.0 { w.max(ri.abs() / si) } else if *ri != 0.0 { f64::INFINITY } else { w });
        (r, omega)
    }

    /// Solves A x = b with iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "rhs has length {}, system has {}",
                b.len(),
                self.dim()
            )));
        }
        let mut x = self.raw_solve(b);
        let steps = if self.shifted { REFINE_MAX } else { 3 };
        // Refine on the componentwise backward error: a few huge penalty
        // rows would otherwise hide inexact rows of ordinary size.
        let mut best = (f64::INFINITY, x.clone());
        for _ in 0..=steps {
            let (r, omega) = self.componentwise_residual(&x, b);
            let stalled = omega > 0.5 * best.0;
            if omega < best.0 {
                best = (omega, x.clone());
            }
            if omega <= REFINE_TOL || stalled {
                break;
            }
            let d = self.raw_solve(&r);
            for (xi, di) in x.iter_mut().zip(d) {
                *xi += di;
            }
        }
        let x = best.1;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("non-finite solution".into()));
        }
        let mut r = b.to_vec();
        self.matrix.mul_vec_acc(&x, -1.0, &mut r);
        let rel = inf_norm(&r) / (self.a_norm * inf_norm(&x) + inf_norm(b)).max(f64::MIN_POSITIVE);
        if rel > 1e-8 {
            return Err(Error::SingularSystem(format!("refinement stalled at relative residual {rel:.2e}")));
        }
        Ok(x)
    }

    /// Solves for several right-hand sides given as columns.
    pub fn solve_many(&self, cols: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        cols.iter().map(|c| self.solve(c)).collect()
    }
}

/// Shift used on the negative block: small relative to the Schur complement
/// scale |B|² / |M| so that refinement contracts by roughly 1e-8 per step.
fn saddle_shift(a: &CscMatrix, signs: &[i8]) -> f64 {
    // Typical (median) magnitudes are used so that a few huge penalty
    // entries or stiff inclusions do not push the shift to round-off level.
    let mut pos = vec![];
    let mut neg_diag: f64 = 0.0;
    let mut coupling = vec![];
    for j in 0..a.ncols {
        for (i, v) in a.col(j) {
            if i == j {
                if signs[j] > 0 {
                    pos.push(v.abs());
                } else {
                    neg_diag = neg_diag.max(v.abs());
                }
            } else if signs[i] != signs[j] && v != 0.0 {
                coupling.push(v.abs());
            }
        }
    }
    let median = |v: &mut Vec<f64>, rel: f64| -> f64 {
        let top = v.iter().fold(0.0f64, |m, x| m.max(*x));
        v.retain(|x| *x > rel * top);
        if v.is_empty() {
            return 0.0;
        }
        let k = v.len() / 2;
        *v.select_nth_unstable_by(k, |a, b| a.total_cmp(b)).1
    };
    let pos_diag = median(&mut pos, 0.0);
    // ignore round-off level couplings
    let coupling = median(&mut coupling, 1e-12);
    let base = if pos_diag > 0.0 && coupling > 0.0 {
        coupling * coupling / pos_diag
    } else {
        pos_diag.max(neg_diag).max(1.0)
    };
    1e-8 * base
}

/// One-shot sparse solve.
pub fn solve_sparse(a: &CscMatrix, b: &[f64], kind: &SystemKind) -> Result<Vec<f64>> {
    Factorization::new(a, kind)?.solve(b)
}

pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// uᵀ M v, the bilinear form represented by an assembled matrix.
pub fn dot_weighted(u: &[f64], v: &[f64], m: &CscMatrix) -> Result<f64> {
    if u.len() != m.nrows() || v.len() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "uᵀMv with |u|={}, |v|={}, M {}x{}",
            u.len(),
            v.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.bilinear(u, v))
}

/// Solves A v = λ B v for symmetric A and SPD B. Eigenvalues ascend and
/// eigenvectors (columns) are B-orthonormal.
pub fn generalized_sym_eig(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch("generalized eigenproblem shapes".into()));
    }
    if n == 0 {
        return Ok((vec![], Mat::zeros(0, 0)));
    }
    let llt = b
        .llt(Side::Lower)
        .map_err(|_| Error::NotPositiveDefinite("mass matrix of the eigenproblem".into()))?;
    let l = llt.L();
    // C = L⁻¹ A L⁻ᵀ
    let mut x = a.to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, x.as_mut(), Par::Seq);
    let mut c = x.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let eig = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::SingularSystem(format!("eigensolver failed: {e:?}")))?;
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (eig.S()[i], i)).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let u = eig.U();
    let mut q = Mat::from_fn(n, n, |i, k| u[(i, pairs[k].1)]);
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(l.transpose(), q.as_mut(), Par::Seq);
    Ok((pairs.into_iter().map(|p| p.0).collect(), q))
}

/// Dense LU solve for small systems.
pub fn dense_solve(a: MatRef<'_, f64>, b: &[f64]) -> Result<Vec<f64>> {
    use faer::linalg::solvers::Solve;
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch("dense solve shapes".into()));
    }
    let lu = a.partial_piv_lu();
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let x = lu.solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("dense LU produced non-finite values".into()));
    }
    Ok(out)
}

/// Dense inverse through LU, used for tiny element-level systems.
pub fn dense_inverse(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    use faer::linalg::solvers::DenseSolveCore;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch("dense inverse of a non-square matrix".into()));
    }
    let inv = a.partial_piv_lu().inverse();
    if (0..n).any(|i| (0..n).any(|j| !inv[(i, j)].is_finite())) {
        return Err(Error::SingularSystem("dense inverse".into()));
    }
    Ok(inv)
}
