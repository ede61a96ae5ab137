//! Constraint energy minimizing multiscale spaces on subdomain 1.
//!
//! Each coarse cell K_i of Ω1 carries a few modes of a local spectral
//! problem (the auxiliary space). Multiscale basis functions minimize the
//! subdomain energy plus an s-penalty towards one auxiliary mode, solved
//! on an oversampled patch K_{i,m} of m coarse layers. Boundary data on γ
//! enter through local influence solves on the coarse cells next to γ, so
//! a Robin solve on Ω1 becomes a small coarse system per DD iteration.

mod mixed;
mod primal;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::material::MaterialField;
use crate::mesh::{CoarseBlock, InterfaceRule, TwoScaleMesh};

pub use self::mixed::{
    augmented_matrix, build_mixed_basis, local_spectral_mixed, spectral_residual, MixedAux, MixedAuxCell, MixedCemSolver,
    MixedInfluence, MixedMsBasis,
};
pub use self::primal::{
    build_primal_basis, local_spectral_primal, PrimalAux, PrimalAuxCell, PrimalCemSolver, PrimalInfluence, PrimalMsBasis,
};

const NONE: usize = usize::MAX;

/// Auxiliary mode count and oversampling depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CemParams {
    /// Eigenpairs kept per coarse cell (l_i).
    pub n_eig: usize,
    /// Oversampling layers (m ≥ 1).
    pub layers: usize,
}

impl Default for CemParams {
    fn default() -> Self {
        Self { n_eig: 4, layers: 2 }
    }
}

impl CemParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_eig == 0 {
            return Err(Error::InvalidConfig("at least one auxiliary mode per coarse cell is required".into()));
        }
        if self.layers == 0 {
            return Err(Error::InvalidConfig("oversampling needs at least one layer".into()));
        }
        Ok(())
    }
}

/// A few field columns supported on a list of dofs.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalColumns {
    pub dofs: Vec<usize>,
    /// `dofs.len() × k`
    pub values: Mat<f64>,
}

impl LocalColumns {
    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Column k as a global vector of length n.
    pub fn column(&self, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (r, &d) in self.dofs.iter().enumerate() {
            out[d] = self.values[(r, k)];
        }
        out
    }

    /// out += values · coef
    pub fn combine_into(&self, coef: &[f64], out: &mut [f64]) {
        for (k, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let col = self.values.col(k);
            for (r, &d) in self.dofs.iter().enumerate() {
                out[d] += c * col[r];
            }
        }
    }

    /// valuesᵀ x restricted to the dofs.
    pub fn tmul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.ncols())
            .map(|k| {
                let col = self.values.col(k);
                self.dofs.iter().enumerate().map(|(r, &d)| col[r] * x[d]).sum()
            })
            .collect()
    }
}

/// Dofs whose every supporting element lies in the block: `elements`
/// yields the dof lists (NONE entries skipped) of the block's elements and
/// `global_count[d]` the number of elements touching d in the subdomain.
pub(crate) fn strict_dofs<'a>(elements: impl Iterator<Item = &'a [usize]>, global_count: &[u32]) -> Vec<usize> {
    let mut local: HashMap<usize, u32> = HashMap::new();
    for el in elements {
        for &d in el {
            if d != NONE {
                *local.entry(d).or_default() += 1;
            }
        }
    }
    let mut out: Vec<usize> = local.into_iter().filter(|&(d, c)| c == global_count[d]).map(|(d, _)| d).collect();
    out.sort_unstable();
    out
}

/// All dofs touched by the elements, sorted.
pub(crate) fn closure_dofs<'a>(elements: impl Iterator<Item = &'a [usize]>) -> Vec<usize> {
    let mut out: Vec<usize> = elements.flat_map(|e| e.iter().copied()).filter(|&d| d != NONE).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Position of each global dof in a sorted local list.
pub(crate) fn position_map(dofs: &[usize], n: usize) -> Vec<usize> {
    let mut map = vec![NONE; n];
    for (k, &d) in dofs.iter().enumerate() {
        map[d] = k;
    }
    map
}

/// Blocks whose fine-cell supports are within one fine cell of each other.
pub(crate) fn blocks_near(a: &CoarseBlock, b: &CoarseBlock) -> bool {
    a.i0 <= b.i1 + 1 && b.i0 <= a.i1 + 1 && a.j0 <= b.j1 + 1 && b.j0 <= a.j1 + 1
}

/// Dense solver for the small coarse systems. LU is used when it is
/// accurate; rank-deficient systems (spaces with redundant basis functions)
/// fall back to an eigenvalue pseudo-inverse.
pub(crate) enum CoarseSolver {
    Lu(faer::linalg::solvers::PartialPivLu<f64>),
    Pinv { u: Mat<f64>, inv: Vec<f64> },
}

impl CoarseSolver {
    pub(crate) fn new(a: &Mat<f64>) -> Result<Self> {
        let n = a.nrows();
        let lu = a.partial_piv_lu();
        // probe with a fixed pseudo-random right-hand side
        let b = Mat::from_fn(n, 1, |i, _| ((i * 7919 + 13) % 101) as f64 / 101.0 - 0.5);
        let x = lu.solve(&b);
        let r = a * &x - &b;
        let rn = (0..n).fold(0.0f64, |m, i| m.max(r[(i, 0)].abs()));
        let an = (0..n).map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max);
        let xn = (0..n).fold(0.0f64, |m, i| m.max(x[(i, 0)].abs()));
        if rn.is_finite() && xn.is_finite() && rn <= 1e-11 * (an * xn + 0.5) {
            return Ok(Self::Lu(lu));
        }
        let sym = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
        let eig = sym
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::SingularSystem(format!("coarse eigensolver failed: {e:?}")))?;
        let s = eig.S();
        let top = (0..n).fold(0.0f64, |m, i| m.max(s[i].abs()));
        let inv = (0..n).map(|i| if s[i].abs() > 1e-11 * top { 1.0 / s[i] } else { 0.0 }).collect();
        Ok(Self::Pinv { u: eig.U().to_owned(), inv })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
        match self {
            Self::Lu(lu) => {
                let x = lu.solve(&rhs);
                (0..n).map(|i| x[(i, 0)]).collect()
            }
            Self::Pinv { u, inv } => {
                let mut y = u.transpose() * &rhs;
                for i in 0..n {
                    y[(i, 0)] *= inv[i];
                }
                let x = u * &y;
                (0..n).map(|i| x[(i, 0)]).collect()
            }
        }
    }
}

/// Content hash naming a cached basis set.
pub fn cache_key(
    tag: &str,
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    robin: f64,
    params: CemParams,
    rule: InterfaceRule,
) -> String {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update((mesh.n_coarse() as u64).to_le_bytes());
    h.update((mesh.refine() as u64).to_le_bytes());
    h.update(material.fingerprint());
    h.update(robin.to_le_bytes());
    h.update((params.n_eig as u64).to_le_bytes());
    h.update((params.layers as u64).to_le_bytes());
    h.update(format!("{rule:?}").as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.msbasis"))
}

/// Writes bytes through a temporary file so readers never see partial data.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

const MAGIC: &[u8; 8] = b"CDDMSB01";

/// Little-endian binary encoder for basis caches.
#[derive(Default)]
pub(crate) struct Enc(Vec<u8>);

impl Enc {
    pub(crate) fn new() -> Self {
        Self(MAGIC.to_vec())
    }
    pub(crate) fn finish(self) -> Vec<u8> {
        self.0
    }
    pub(crate) fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    pub(crate) fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    pub(crate) fn usizes(&mut self, v: &[usize]) {
        self.usize(v.len());
        for &x in v {
            self.u64(x as u64);
        }
    }
    pub(crate) fn mat(&mut self, m: &Mat<f64>) {
        self.usize(m.nrows());
        self.usize(m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                self.0.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
    }
    pub(crate) fn cols(&mut self, c: &LocalColumns) {
        self.usizes(&c.dofs);
        self.mat(&c.values);
    }
}

pub(crate) struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt() -> Error {
    Error::InvalidConfig("basis cache file is corrupt".into())
}

impl<'a> Dec<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Result<Self> {
        if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
            return Err(corrupt());
        }
        Ok(Self { buf, pos: MAGIC.len() })
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(corrupt)?;
        let s = self.buf.get(self.pos..end).ok_or_else(corrupt)?;
        self.pos = end;
        Ok(s)
    }
    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub(crate) fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt())
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(corrupt());
        }
        Ok(n)
    }
    pub(crate) fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    pub(crate) fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.usize()).collect()
    }
    pub(crate) fn mat(&mut self) -> Result<Mat<f64>> {
        let r = self.usize()?;
        let c = self.usize()?;
        if r.saturating_mul(c).saturating_mul(8) > self.buf.len() - self.pos {
            return Err(corrupt());
        }
        let mut m = Mat::zeros(r, c);
        for j in 0..c {
            for i in 0..r {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }
    pub(crate) fn cols(&mut self) -> Result<LocalColumns> {
        let dofs = self.usizes()?;
        let values = self.mat()?;
        if values.nrows() != dofs.len() {
            return Err(corrupt());
        }
        Ok(LocalColumns { dofs, values })
    }
    pub(crate) fn done(&self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(corrupt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_columns_roundtrip() {
        let c = LocalColumns { dofs: vec![1, 4], values: Mat::from_fn(2, 2, |i, j| (i + 2 * j) as f64 + 1.0) };
        assert_eq!(c.column(1, 5), vec![0.0, 3.0, 0.0, 0.0, 4.0]);
        let mut out = vec![0.0; 5];
        c.combine_into(&[1.0, -1.0], &mut out);
        assert_eq!(out, vec![0.0, -2.0, 0.0, 0.0, -2.0]);
        assert_eq!(c.tmul(&[0.0, 1.0, 0.0, 0.0, 1.0]), vec![3.0, 7.0]);
        let mut e = Enc::new();
        e.cols(&c);
        e.f64s(&[1.5, -2.0]);
        let bytes = e.finish();
        let mut d = Dec::new(&bytes).unwrap();
        assert_eq!(d.cols().unwrap(), c);
        assert_eq!(d.f64s().unwrap(), vec![1.5, -2.0]);
        d.done().unwrap();
        assert!(Dec::new(&bytes[..10]).and_then(|mut d| d.cols()).is_err());
    }

    #[test]
    fn strict_support_rule() {
        // two elements sharing dof 1; only the first is in the block
        let global = vec![1u32, 2, 1];
        let e0 = [0usize, 1];
        assert_eq!(strict_dofs([&e0[..]].into_iter(), &global), vec![0]);
        let e1 = [1usize, 2];
        assert_eq!(strict_dofs([&e0[..], &e1[..]].into_iter(), &global), vec![0, 1, 2]);
    }

    #[test]
    fn coarse_solver_handles_singular_systems() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j && i < 2 { 2.0 } else { 0.0 });
        let s = CoarseSolver::new(&a).unwrap();
        assert!(matches!(s, CoarseSolver::Pinv { .. }));
        let x = s.solve(&[2.0, 4.0, 0.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14 && x[2].abs() < 1e-14);
        let b = Mat::from_fn(2, 2, |i, j| if i == j { 3.0 } else { 1.0 });
        let s = CoarseSolver::new(&b).unwrap();
        assert!(matches!(s, CoarseSolver::Lu(_)));
        let x = s.solve(&[4.0, 4.0]);
        assert!((x[0] - 1.0).abs() < 1e-14);
    }
}
