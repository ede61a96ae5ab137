//! Displacement-based CEM spaces.

use std::path::Path;

use faer::Mat;

use super::{
    blocks_near, cache_key, cache_path, closure_dofs, position_map, strict_dofs, write_atomic, CemParams, CoarseSolver, Dec,
    Enc, LocalColumns, NONE,
};
use crate::error::{Error, Result};
use crate::linalg::{generalized_sym_eig, CscMatrix, Factorization, SystemKind, TripletBuilder};
use crate::material::MaterialField;
use crate::mesh::{CoarseBlock, Region};
use crate::primal::{element_mass, element_stiffness, sparse_triple_product, PrimalOperators};
use crate::trace::TraceData;

/// Auxiliary modes of one coarse cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalAuxCell {
    pub coarse: usize,
    /// Subdomain-1 dofs in the closure of K_i.
    pub dofs: Vec<usize>,
    /// Kept eigenvalues, nondecreasing.
    pub eigenvalues: Vec<f64>,
    /// s_i-orthonormal modes as columns.
    pub modes: Mat<f64>,
    /// S_i · modes
    pub weighted: Mat<f64>,
    /// Largest diagonal entry of the local operator.
    pub scale: f64,
}

fn check_robin(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("Robin parameter must be positive, got {alpha}")));
    }
    Ok(())
}

fn check_material(ops: &PrimalOperators, material: &MaterialField) -> Result<()> {
    if ops.space.region() != Region::Omega1 {
        return Err(Error::InvalidConfig("multiscale spaces live on subdomain 1".into()));
    }
    if material.n_cells() != ops.space.mesh().n_cells() {
        return Err(Error::DimensionMismatch("material does not match the mesh".into()));
    }
    Ok(())
}

/// Interface weights restricted to the γ edge of coarse cell k, if any.
pub(crate) fn gamma_weights(mesh: &crate::mesh::TwoScaleMesh, quad: &crate::mesh::InterfaceQuadrature, k: usize) -> Option<Vec<f64>> {
    if !mesh.coarse_touches_gamma(k) {
        return None;
    }
    let r = mesh.refine();
    let cj = mesh.coarse_ij(k).1;
    Some(quad.restricted_weights(cj * r, (cj + 1) * r))
}

/// Robin mass Tᵀ diag(w) T for per-sample weights w.
pub(crate) fn weighted_robin(trace: &CscMatrix, w: &[f64]) -> CscMatrix {
    let w2: Vec<f64> = w.iter().flat_map(|v| [*v, *v]).collect();
    sparse_triple_product(trace, &CscMatrix::from_diagonal(&w2))
}

/// Local spectral problem on coarse cell k: the subdomain energy on K_i
/// (plus the Robin term on γ ∩ ∂K_i) against s_i(w, v) = ∫ k̃ w·v.
pub fn local_spectral_primal(
    ops: &PrimalOperators,
    material: &MaterialField,
    k: usize,
    alpha: f64,
    n_eig: usize,
) -> Result<PrimalAuxCell> {
    check_material(ops, material)?;
    check_robin(alpha)?;
    let mesh = ops.space.mesh();
    let (cells, el, dofs) = coarse_cell_dofs(ops, k)?;
    let n = dofs.len();
    if n_eig > n {
        return Err(Error::InvalidConfig(format!("{n_eig} modes requested but the local space has dimension {n}")));
    }
    let map = position_map(&dofs, ops.n_dofs());
    let me = element_mass(mesh.h());
    let mut a = Mat::<f64>::zeros(n, n);
    let mut s = Mat::<f64>::zeros(n, n);
    for (&c, e) in cells.iter().zip(&el) {
        let ke = element_stiffness(material, c);
        for p in 0..8 {
            if e[p] == NONE {
                continue;
            }
            for q in 0..8 {
                if e[q] == NONE {
                    continue;
                }
                let (i, j) = (map[e[p]], map[e[q]]);
                a[(i, j)] += ke[p][q];
                if p % 2 == q % 2 {
                    s[(i, j)] += material.ktilde[c] * me[p / 2][q / 2];
                }
            }
        }
    }
    if let Some(w) = gamma_weights(mesh, &ops.interface()?.quad, k) {
        let r = weighted_robin(&ops.interface()?.trace, &w).select(&dofs, &dofs);
        for j in 0..n {
            for (i, v) in r.col(j) {
                a[(i, j)] += alpha * v;
            }
        }
    }
    let scale = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)]));
    let (vals, vecs) = generalized_sym_eig(a.as_ref(), s.as_ref())?;
    let modes = vecs.subcols(0, n_eig).to_owned();
    let weighted = &s * &modes;
    Ok(PrimalAuxCell { coarse: k, dofs, eigenvalues: vals[..n_eig].to_vec(), modes, weighted, scale })
}

type CellDofs = (Vec<usize>, Vec<[usize; 8]>, Vec<usize>);

/// Fine cells of K_k, their dof lists and the closure dofs.
fn coarse_cell_dofs(ops: &PrimalOperators, k: usize) -> Result<CellDofs> {
    let mesh = ops.space.mesh();
    let cells = mesh.fine_cells_in(&mesh.oversample(k, 0)?.block);
    let el: Vec<[usize; 8]> = cells.iter().map(|&c| ops.space.cell_dofs(c)).collect();
    let dofs = closure_dofs(el.iter().map(|e| &e[..]));
    Ok((cells, el, dofs))
}

/// Auxiliary space: modes of every coarse cell of Ω1.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalAux {
    pub cells: Vec<PrimalAuxCell>,
}

impl PrimalAux {
    pub fn build(ops: &PrimalOperators, material: &MaterialField, alpha: f64, n_eig: usize) -> Result<Self> {
        let nk = ops.space.mesh().n_coarse_omega1();
        let cells = (0..nk)
            .map(|k| {
                // l_i is capped by the local dimension
                let dim = coarse_cell_dofs(ops, k)?.2.len();
                local_spectral_primal(ops, material, k, alpha, n_eig.min(dim))
            })
            .collect::<Result<_>>()?;
        Ok(Self { cells })
    }

    pub fn n_modes(&self) -> usize {
        self.cells.iter().map(|c| c.modes.ncols()).sum()
    }

    /// Coefficients of πv: s_i(v, φ_j^i) per cell and mode.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_modes());
        for c in &self.cells {
            for j in 0..c.weighted.ncols() {
                out.push(c.dofs.iter().enumerate().map(|(r, &d)| c.weighted[(r, j)] * v[d]).sum());
            }
        }
        out
    }

    /// s(πu, πv) as a sparse matrix on subdomain-1 dofs.
    pub fn penalty_matrix(&self, n: usize) -> CscMatrix {
        let mut b = TripletBuilder::new(n, n);
        for c in &self.cells {
            let w = &c.weighted;
            let wwt = w * w.transpose();
            for (a, &da) in c.dofs.iter().enumerate() {
                for (bb, &db) in c.dofs.iter().enumerate() {
                    b.push(da, db, wwt[(a, bb)]);
                }
            }
        }
        b.build()
    }
}

/// Localized multiscale basis: one column block per coarse cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalMsBasis {
    pub layers: usize,
    pub blocks: Vec<CoarseBlock>,
    pub cells: Vec<LocalColumns>,
}

impl PrimalMsBasis {
    pub fn n_basis(&self) -> usize {
        self.cells.iter().map(|c| c.ncols()).sum()
    }

    /// Fine field Σ c_k ψ_k.
    pub fn expand(&self, coef: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        let mut off = 0;
        for c in &self.cells {
            c.combine_into(&coef[off..off + c.ncols()], &mut out);
            off += c.ncols();
        }
        out
    }

    /// Ψᵀ x
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.cells.iter().flat_map(|c| c.tmul(x)).collect()
    }
}

/// Influence of interface data: local responses to each γ sample
/// component owned by a coarse cell next to γ.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalInfluence {
    /// (coarse cell, flattened trace inputs 2p + l, local responses)
    pub cells: Vec<(usize, Vec<usize>, LocalColumns)>,
}

impl PrimalInfluence {
    /// N^m g = Σ_i N_i^m g.
    pub fn apply(&self, g: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (_, inputs, cols) in &self.cells {
            let coef: Vec<f64> = inputs.iter().map(|&q| g[q]).collect();
            cols.combine_into(&coef, &mut out);
        }
        out
    }
}

/// Number of subdomain-1 cells touching each dof.
fn support_counts(ops: &PrimalOperators) -> Vec<u32> {
    let mut count = vec![0u32; ops.n_dofs()];
    for c in ops.space.cells() {
        for d in ops.space.cell_dofs(c) {
            if d != NONE {
                count[d] += 1;
            }
        }
    }
    count
}

/// Builds the relaxed localized basis and the influence operator with m
/// oversampling layers. Layers covering Ω1 give the global basis.
pub fn build_primal_basis(ops: &PrimalOperators, aux: &PrimalAux, alpha: f64, layers: usize) -> Result<(PrimalMsBasis, PrimalInfluence)> {
    check_robin(alpha)?;
    if layers == 0 {
        return Err(Error::InvalidConfig("oversampling needs at least one layer".into()));
    }
    let mesh = ops.space.mesh();
    let n = ops.n_dofs();
    let itf = ops.interface()?;
    let a = ops.robin_matrix(alpha)?.add_scaled(&aux.penalty_matrix(n), 1.0);
    let count = support_counts(ops);
    let tt = itf.trace.transpose();
    let mut last: Option<(Vec<usize>, Factorization)> = None;
    let (mut blocks, mut cols, mut infl) = (vec![], vec![], vec![]);
    for cell in &aux.cells {
        let k = cell.coarse;
        let block = mesh.oversample(k, layers)?.block;
        let fine = mesh.fine_cells_in(&block);
        let el: Vec<[usize; 8]> = fine.iter().map(|&c| ops.space.cell_dofs(c)).collect();
        let loc = strict_dofs(el.iter().map(|e| &e[..]), &count);
        if last.as_ref().map(|l| l.0 != loc).unwrap_or(true) {
            let f = Factorization::new(&a.select(&loc, &loc), &SystemKind::Spd)?;
            last = Some((loc.clone(), f));
        }
        let f = &last.as_ref().unwrap().1;
        let map = position_map(&loc, n);
        let nl = loc.len();
        let mut rhs = Vec::with_capacity(cell.weighted.ncols());
        for j in 0..cell.weighted.ncols() {
            let mut b = vec![0.0; nl];
            for (r, &d) in cell.dofs.iter().enumerate() {
                let v = cell.weighted[(r, j)];
                if v != 0.0 {
                    if map[d] == NONE {
                        return Err(Error::InvalidConfig("oversampling region does not contain its coarse cell".into()));
                    }
                    b[map[d]] = v;
                }
            }
            rhs.push(b);
        }
        cols.push(to_local_columns(&loc, f.solve_many(&rhs)?));
        if let Some(w) = gamma_weights(mesh, &itf.quad, k) {
            let mut inputs = vec![];
            let mut rhs = vec![];
            for (p, &wp) in w.iter().enumerate() {
                if wp == 0.0 {
                    continue;
                }
                for l in 0..2 {
                    let q = 2 * p + l;
                    let mut b = vec![0.0; nl];
                    for (d, v) in tt.col(q) {
                        if map[d] == NONE {
                            return Err(Error::InvalidConfig("interface dofs fall outside the oversampling region".into()));
                        }
                        b[map[d]] += wp * v;
                    }
                    inputs.push(q);
                    rhs.push(b);
                }
            }
            infl.push((k, inputs, to_local_columns(&loc, f.solve_many(&rhs)?)));
        }
        blocks.push(block);
    }
    Ok((PrimalMsBasis { layers, blocks, cells: cols }, PrimalInfluence { cells: infl }))
}

pub(crate) fn to_local_columns(loc: &[usize], sols: Vec<Vec<f64>>) -> LocalColumns {
    let values = Mat::from_fn(loc.len(), sols.len(), |i, j| sols[j][i]);
    LocalColumns { dofs: loc.to_vec(), values }
}

/// Galerkin matrix Ψᵀ A Ψ exploiting the locality of the basis.
pub(crate) fn galerkin(a: &CscMatrix, cells: &[LocalColumns], blocks: &[CoarseBlock]) -> Mat<f64> {
    let offs: Vec<usize> = cells
        .iter()
        .scan(0, |o, c| {
            let s = *o;
            *o += c.ncols();
            Some(s)
        })
        .collect();
    let nb: usize = cells.iter().map(|c| c.ncols()).sum();
    let mut out = Mat::zeros(nb, nb);
    let n = a.nrows();
    for (i, ci) in cells.iter().enumerate() {
        for a_col in 0..ci.ncols() {
            let y = a.mul_vec(&ci.column(a_col, n));
            for (j, cj) in cells.iter().enumerate() {
                if !blocks_near(&blocks[i], &blocks[j]) {
                    continue;
                }
                let v = cj.tmul(&y);
                for (b, val) in v.into_iter().enumerate() {
                    out[(offs[j] + b, offs[i] + a_col)] = val;
                }
            }
        }
    }
    // symmetrize away round-off
    Mat::from_fn(nb, nb, |i, j| 0.5 * (out[(i, j)] + out[(j, i)]))
}

/// Robin solver on subdomain 1 in the multiscale space.
pub struct PrimalCemSolver {
    ops: PrimalOperators,
    alpha: f64,
    params: CemParams,
    aux: PrimalAux,
    basis: PrimalMsBasis,
    influence: PrimalInfluence,
    /// K + α M_γ
    operator: CscMatrix,
    coarse_matrix: Mat<f64>,
    coarse: CoarseSolver,
}

impl PrimalCemSolver {
    pub fn into_ops(self) -> PrimalOperators {
        self.ops
    }

    /// Builds (or loads from `cache_dir`) the auxiliary space, basis and
    /// influence operator.
    pub fn new(
        ops: PrimalOperators,
        material: &MaterialField,
        alpha: f64,
        params: CemParams,
        cache_dir: Option<&Path>,
    ) -> Result<Self> {
        params.validate()?;
        check_material(&ops, material)?;
        check_robin(alpha)?;
        let mesh = ops.space.mesh().clone();
        let rule = ops.interface()?.quad.rule;
        let path = cache_dir.map(|d| cache_path(d, &cache_key("primal", &mesh, material, alpha, params, rule)));
        let cached = match &path {
            Some(p) if p.exists() => Some(decode(&std::fs::read(p)?, &ops, params)?),
            _ => None,
        };
        let operator = ops.robin_matrix(alpha)?;
        let (aux, basis, influence, coarse_matrix) = match cached {
            Some(c) => c,
            None => {
                let aux = PrimalAux::build(&ops, material, alpha, params.n_eig)?;
                let (basis, influence) = build_primal_basis(&ops, &aux, alpha, params.layers)?;
                let cm = galerkin(&operator, &basis.cells, &basis.blocks);
                if let Some(p) = &path {
                    write_atomic(p, &encode(&aux, &basis, &influence, &cm))?;
                }
                (aux, basis, influence, cm)
            }
        };
        let coarse = CoarseSolver::new(&coarse_matrix)?;
        Ok(Self { ops, alpha, params, aux, basis, influence, operator, coarse_matrix, coarse })
    }

    pub fn ops(&self) -> &PrimalOperators {
        &self.ops
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn params(&self) -> CemParams {
        self.params
    }
    pub fn aux(&self) -> &PrimalAux {
        &self.aux
    }
    pub fn basis(&self) -> &PrimalMsBasis {
        &self.basis
    }
    pub fn influence(&self) -> &PrimalInfluence {
        &self.influence
    }
    pub fn coarse_matrix(&self) -> &Mat<f64> {
        &self.coarse_matrix
    }

    /// u = w + N g with w in the multiscale span solving the corrected
    /// Galerkin problem.
    pub fn solve(&self, g12: &TraceData) -> Result<Vec<f64>> {
        let itf = self.ops.interface()?;
        let n = self.ops.n_dofs();
        let gf = g12.flat();
        let ng = self.influence.apply(&gf, n);
        let mut v = itf.load(g12)?;
        for (vi, f) in v.iter_mut().zip(&self.ops.load) {
            *vi += f;
        }
        self.operator.mul_vec_acc(&ng, -1.0, &mut v);
        let c = self.coarse.solve(&self.basis.restrict(&v));
        let mut u = self.basis.expand(&c, n);
        for (ui, z) in u.iter_mut().zip(&ng) {
            *ui += z;
        }
        Ok(u)
    }
}

fn encode(aux: &PrimalAux, basis: &PrimalMsBasis, infl: &PrimalInfluence, cm: &Mat<f64>) -> Vec<u8> {
    let mut e = Enc::new();
    e.usize(aux.cells.len());
    for c in &aux.cells {
        e.usize(c.coarse);
        e.usizes(&c.dofs);
        e.f64s(&c.eigenvalues);
        e.mat(&c.modes);
        e.mat(&c.weighted);
        e.f64s(&[c.scale]);
    }
    for c in &basis.cells {
        e.cols(c);
    }
    e.usize(infl.cells.len());
    for (k, inputs, cols) in &infl.cells {
        e.usize(*k);
        e.usizes(inputs);
        e.cols(cols);
    }
    e.mat(cm);
    e.finish()
}

type Decoded = (PrimalAux, PrimalMsBasis, PrimalInfluence, Mat<f64>);

fn decode(bytes: &[u8], ops: &PrimalOperators, params: CemParams) -> Result<Decoded> {
    let mesh = ops.space.mesh();
    let mut d = Dec::new(bytes)?;
    let nk = d.usize()?;
    if nk != mesh.n_coarse_omega1() {
        return Err(Error::InvalidConfig("basis cache does not match the mesh".into()));
    }
    let mut cells = Vec::with_capacity(nk);
    for _ in 0..nk {
        let coarse = d.usize()?;
        let dofs = d.usizes()?;
        let eigenvalues = d.f64s()?;
        let modes = d.mat()?;
        let weighted = d.mat()?;
        let scale = d.f64s()?.first().copied().unwrap_or(0.0);
        cells.push(PrimalAuxCell { coarse, dofs, eigenvalues, modes, weighted, scale });
    }
    let mut bcols = Vec::with_capacity(nk);
    let mut blocks = Vec::with_capacity(nk);
    for k in 0..nk {
        bcols.push(d.cols()?);
        blocks.push(mesh.oversample(k, params.layers)?.block);
    }
    let ni = d.usize()?;
    let mut infl = Vec::with_capacity(ni);
    for _ in 0..ni {
        let k = d.usize()?;
        let inputs = d.usizes()?;
        infl.push((k, inputs, d.cols()?));
    }
    let cm = d.mat()?;
    d.done()?;
    let n = ops.n_dofs();
    let bad = bcols.iter().chain(infl.iter().map(|x| &x.2)).any(|c| c.dofs.iter().any(|&x| x >= n));
    if bad {
        return Err(Error::InvalidConfig("basis cache does not match the subdomain space".into()));
    }
    Ok((PrimalAux { cells }, PrimalMsBasis { layers: params.layers, blocks, cells: bcols }, PrimalInfluence { cells: infl }, cm))
}
