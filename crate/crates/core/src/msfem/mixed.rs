//! Stress-based (Arnold–Winther) CEM spaces.
//!
//! Local stress spaces are conforming subspaces of the subdomain space: a
//! stress dof is kept on a patch only if every subdomain-1 triangle in its
//! support lies in the patch, which makes τn vanish on the patch boundary
//! inside Ω1. The auxiliary space consists of displacement modes; the
//! basis systems are saddle problems solved in the augmented form
//!
//! ```text
//! [ M + βR   Bᵀ    0 ] [ψ]   [ 0 ]
//! [ B        0    −W ] [q] = [−w ]
//! [ 0       −Wᵀ    I ] [z]   [ 0 ]
//! ```
//!
//! whose elimination of z gives the penalty s(πq, πv) = qᵀWWᵀv without
//! forming the dense product.

use std::path::Path;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use super::primal::{gamma_weights, to_local_columns, weighted_robin};
use super::{
    blocks_near, cache_key, cache_path, position_map, strict_dofs, write_atomic, CemParams, CoarseSolver, Dec, Enc,
    LocalColumns, NONE,
};
use crate::error::{Error, Result};
use crate::linalg::{generalized_sym_eig, CscMatrix, Factorization, SystemKind, TripletBuilder};
use crate::material::MaterialField;
use crate::mesh::{CoarseBlock, Region};
use crate::mixed::element::{NS, NU};
use crate::mixed::{element_matrices, MixedOperators, MixedSolution};
use crate::trace::TraceData;

/// Auxiliary displacement modes of one coarse cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedAuxCell {
    pub coarse: usize,
    /// Displacement dofs of the triangles of K_i.
    pub disp: Vec<usize>,
    /// Kept eigenvalues, nondecreasing.
    pub eigenvalues: Vec<f64>,
    /// s_i-orthonormal modes as columns.
    pub modes: Mat<f64>,
    /// S_i · modes
    pub weighted: Mat<f64>,
    /// Largest diagonal entry of the Schur operator.
    pub scale: f64,
}

fn check_robin(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidConfig(format!("Robin parameter must be positive, got {beta}")));
    }
    Ok(())
}

fn check_setup(ops: &MixedOperators, material: &MaterialField) -> Result<()> {
    if ops.space.region() != Region::Omega1 {
        return Err(Error::InvalidConfig("multiscale spaces live on subdomain 1".into()));
    }
    if material.n_cells() != ops.space.mesh().n_cells() {
        return Err(Error::DimensionMismatch("material does not match the mesh".into()));
    }
    Ok(())
}

fn triangles_of(cells: &[usize]) -> Vec<usize> {
    cells.iter().flat_map(|&c| [2 * c, 2 * c + 1]).collect()
}

fn stress_lists(ops: &MixedOperators, tris: &[usize]) -> Vec<[usize; NS]> {
    tris.iter().map(|&t| ops.space.local_stress_dofs(t).map(|d| d.unwrap_or(NONE))).collect()
}

fn disp_dofs(ops: &MixedOperators, tris: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = tris
        .iter()
        .flat_map(|&t| {
            let o = ops.space.disp_offset(t).expect("triangle of subdomain 1");
            o..o + NU
        })
        .collect();
    out.sort_unstable();
    out
}

/// Number of subdomain-1 triangles touching each stress dof.
fn stress_support_counts(ops: &MixedOperators) -> Vec<u32> {
    let mut count = vec![0u32; ops.n_stress()];
    for &t in ops.space.triangles() {
        for d in ops.space.local_stress_dofs(t).into_iter().flatten() {
            count[d] += 1;
        }
    }
    count
}

/// Local stress dofs of a patch of fine cells.
fn patch_stress(ops: &MixedOperators, cells: &[usize], count: &[u32]) -> Vec<usize> {
    let tris = triangles_of(cells);
    let lists = stress_lists(ops, &tris);
    strict_dofs(lists.iter().map(|l| &l[..]), count)
}

/// Block-diagonal s_i mass on the displacement dofs of the triangles.
fn s_mass(ops: &MixedOperators, material: &MaterialField, tris: &[usize], disp: &[usize]) -> Mat<f64> {
    let mesh = ops.space.mesh();
    let map = position_map(disp, ops.n_disp());
    let mut s = Mat::zeros(disp.len(), disp.len());
    for &t in tris {
        let dm = element_matrices(mesh, material, t).disp_mass;
        let o = ops.space.disp_offset(t).unwrap();
        let kt = material.ktilde[t / 2];
        for a in 0..NU {
            for b in 0..NU {
                s[(map[o + a], map[o + b])] += kt * dm[a][b];
            }
        }
    }
    s
}

/// Local spectral problem on coarse cell k, reduced to the displacement
/// modes: (B M⁻¹ Bᵀ) p = λ S_i p, where M includes β R on γ ∩ ∂K_i.
pub fn local_spectral_mixed(
    ops: &MixedOperators,
    material: &MaterialField,
    k: usize,
    beta: f64,
    n_eig: usize,
) -> Result<MixedAuxCell> {
    check_setup(ops, material)?;
    check_robin(beta)?;
    let (cells, stress, disp) = local_cell(ops, k, &stress_support_counts(ops))?;
    spectral_on(ops, material, k, beta, n_eig, &cells, &stress, &disp)
}

fn local_cell(ops: &MixedOperators, k: usize, count: &[u32]) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let mesh = ops.space.mesh();
    let cells = mesh.fine_cells_in(&mesh.oversample(k, 0)?.block);
    let stress = patch_stress(ops, &cells, count);
    let disp = disp_dofs(ops, &triangles_of(&cells));
    Ok((cells, stress, disp))
}

#[allow(clippy::too_many_arguments)]
fn spectral_on(
    ops: &MixedOperators,
    material: &MaterialField,
    k: usize,
    beta: f64,
    n_eig: usize,
    cells: &[usize],
    stress: &[usize],
    disp: &[usize],
) -> Result<MixedAuxCell> {
    let n = disp.len();
    if n_eig > n {
        return Err(Error::InvalidConfig(format!("{n_eig} modes requested but the local space has dimension {n}")));
    }
    let (m, b) = local_blocks(ops, k, beta, stress, disp)?;
    let md = m.to_dense();
    let llt = md.llt(Side::Lower).map_err(|_| Error::NotPositiveDefinite("local stress mass".into()))?;
    let bt = b.transpose().to_dense();
    let x = llt.solve(&bt);
    let bd = b.to_dense();
    let schur = &bd * &x;
    let schur = Mat::from_fn(n, n, |i, j| 0.5 * (schur[(i, j)] + schur[(j, i)]));
    let s = s_mass(ops, material, &triangles_of(cells), disp);
    let scale = (0..n).fold(0.0f64, |a, i| a.max(schur[(i, i)]));
    let (vals, vecs) = generalized_sym_eig(schur.as_ref(), s.as_ref())?;
    let modes = vecs.subcols(0, n_eig).to_owned();
    let weighted = &s * &modes;
    Ok(MixedAuxCell { coarse: k, disp: disp.to_vec(), eigenvalues: vals[..n_eig].to_vec(), modes, weighted, scale })
}

/// Local M + β R_i and B on the given stress and displacement dofs.
fn local_blocks(ops: &MixedOperators, k: usize, beta: f64, stress: &[usize], disp: &[usize]) -> Result<(CscMatrix, CscMatrix)> {
    let mesh = ops.space.mesh();
    let itf = ops.interface()?;
    let mut m = ops.stress_mass.select(stress, stress);
    if let Some(w) = gamma_weights(mesh, &itf.quad, k) {
        m = m.add_scaled(&weighted_robin(&itf.trace, &w).select(stress, stress), beta);
    }
    Ok((m, ops.div.select(disp, stress)))
}

/// Full saddle residual of a spectral pair: with φ = −M⁻¹Bᵀp, returns
/// |−Bφ − λ S p|∞ / (|Bφ|∞ + |λ S p|∞).
pub fn spectral_residual(ops: &MixedOperators, material: &MaterialField, cell: &MixedAuxCell, beta: f64, j: usize) -> Result<f64> {
    let (cells, stress, disp) = local_cell(ops, cell.coarse, &stress_support_counts(ops))?;
    if disp != cell.disp {
        return Err(Error::DimensionMismatch("auxiliary cell does not match the operators".into()));
    }
    let (m, b) = local_blocks(ops, cell.coarse, beta, &stress, &disp)?;
    let p: Vec<f64> = (0..disp.len()).map(|i| cell.modes[(i, j)]).collect();
    let rhs: Vec<f64> = b.tmul_vec(&p).iter().map(|v| -v).collect();
    let phi = crate::linalg::solve_sparse(&m, &rhs, &SystemKind::Spd)?;
    let bphi = b.mul_vec(&phi);
    let s = s_mass(ops, material, &triangles_of(&cells), &disp);
    let lam = cell.eigenvalues[j];
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for i in 0..disp.len() {
        let sp: f64 = (0..disp.len()).map(|l| s[(i, l)] * p[l]).sum();
        num = num.max((-bphi[i] - lam * sp).abs());
        den = den.max(bphi[i].abs()).max((lam * sp).abs());
    }
    Ok(num / den.max(f64::MIN_POSITIVE))
}

/// Auxiliary displacement space of subdomain 1.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedAux {
    pub cells: Vec<MixedAuxCell>,
}

impl MixedAux {
    pub fn build(ops: &MixedOperators, material: &MaterialField, beta: f64, n_eig: usize) -> Result<Self> {
        check_setup(ops, material)?;
        check_robin(beta)?;
        let count = stress_support_counts(ops);
        let cells = (0..ops.space.mesh().n_coarse_omega1())
            .map(|k| {
                let (cells, stress, disp) = local_cell(ops, k, &count)?;
                // l_i is capped by the local dimension
                let l = n_eig.min(disp.len());
                spectral_on(ops, material, k, beta, l, &cells, &stress, &disp)
            })
            .collect::<Result<_>>()?;
        Ok(Self { cells })
    }

    pub fn n_modes(&self) -> usize {
        self.cells.iter().map(|c| c.modes.ncols()).sum()
    }

    /// First mode index of each cell.
    fn offsets(&self) -> Vec<usize> {
        let mut o = Vec::with_capacity(self.cells.len());
        let mut s = 0;
        for c in &self.cells {
            o.push(s);
            s += c.modes.ncols();
        }
        o
    }

    /// Coefficients of πq: s_i(q, p_j^i).
    pub fn project(&self, q: &[f64]) -> Vec<f64> {
        self.cells
            .iter()
            .flat_map(|c| (0..c.weighted.ncols()).map(move |j| c.disp.iter().enumerate().map(|(r, &d)| c.weighted[(r, j)] * q[d]).sum::<f64>()))
            .collect()
    }

    /// Displacement field Σ c_j p_j.
    pub fn expand(&self, coef: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        let mut off = 0;
        for c in &self.cells {
            for j in 0..c.modes.ncols() {
                let a = coef[off + j];
                for (r, &d) in c.disp.iter().enumerate() {
                    out[d] += a * c.modes[(r, j)];
                }
            }
            off += c.modes.ncols();
        }
        out
    }

    /// Modesᵀ x
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.cells
            .iter()
            .flat_map(|c| (0..c.modes.ncols()).map(move |j| c.disp.iter().enumerate().map(|(r, &d)| c.modes[(r, j)] * x[d]).sum::<f64>()))
            .collect()
    }

    /// W with columns S_i p_j^i (n_disp × n_modes).
    pub fn weight_matrix(&self, n_disp: usize) -> CscMatrix {
        let mut b = TripletBuilder::new(n_disp, self.n_modes());
        for (c, off) in self.cells.iter().zip(self.offsets()) {
            for j in 0..c.weighted.ncols() {
                for (r, &d) in c.disp.iter().enumerate() {
                    let v = c.weighted[(r, j)];
                    if v != 0.0 {
                        b.push(d, off + j, v);
                    }
                }
            }
        }
        b.build()
    }

    /// s(π(k̃⁻¹f), v) for all v: W (Pᵀ F) where F holds (f, v).
    pub fn projected_load(&self, load: &[f64]) -> Vec<f64> {
        let coef = self.restrict(load);
        let mut out = vec![0.0; load.len()];
        let mut off = 0;
        for c in &self.cells {
            for j in 0..c.weighted.ncols() {
                for (r, &d) in c.disp.iter().enumerate() {
                    out[d] += coef[off + j] * c.weighted[(r, j)];
                }
            }
            off += c.weighted.ncols();
        }
        out
    }
}

/// Localized stress basis, one column block per coarse cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedMsBasis {
    pub layers: usize,
    pub blocks: Vec<CoarseBlock>,
    pub cells: Vec<LocalColumns>,
}

impl MixedMsBasis {
    pub fn n_basis(&self) -> usize {
        self.cells.iter().map(|c| c.ncols()).sum()
    }

    pub fn expand(&self, coef: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        let mut off = 0;
        for c in &self.cells {
            c.combine_into(&coef[off..off + c.ncols()], &mut out);
            off += c.ncols();
        }
        out
    }

    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.cells.iter().flat_map(|c| c.tmul(x)).collect()
    }
}

/// Influence of interface data: per γ-adjacent coarse cell, the stress
/// (Q_i) and displacement (N_i) responses to each trace input 2p + l.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedInfluence {
    pub cells: Vec<(usize, Vec<usize>, LocalColumns, LocalColumns)>,
}

impl MixedInfluence {
    /// (Q^m g, N^m g)
    pub fn apply(&self, g: &[f64], n_stress: usize, n_disp: usize) -> (Vec<f64>, Vec<f64>) {
        let mut q = vec![0.0; n_stress];
        let mut u = vec![0.0; n_disp];
        for (_, inputs, qs, us) in &self.cells {
            let coef: Vec<f64> = inputs.iter().map(|&i| g[i]).collect();
            qs.combine_into(&coef, &mut q);
            us.combine_into(&coef, &mut u);
        }
        (q, u)
    }
}

/// Augmented saddle matrix of the basis problems on all of subdomain 1.
pub fn augmented_matrix(ops: &MixedOperators, aux: &MixedAux, beta: f64) -> Result<(CscMatrix, Vec<i8>)> {
    let (ns, nu, nz) = (ops.n_stress(), ops.n_disp(), aux.n_modes());
    let saddle = ops.saddle_matrix(Some(beta))?;
    let w = aux.weight_matrix(nu);
    let n = ns + nu + nz;
    let mut b = TripletBuilder::with_capacity(n, n, saddle.nnz() + 2 * w.nnz() + nz);
    saddle.push_into(&mut b, 0, 0, 1.0);
    w.push_into(&mut b, ns, ns + nu, -1.0);
    w.transpose().push_into(&mut b, ns + nu, ns, -1.0);
    for k in 0..nz {
        b.push(ns + nu + k, ns + nu + k, 1.0);
    }
    let mut signs = vec![1i8; ns];
    signs.extend(std::iter::repeat_n(-1i8, nu));
    signs.extend(std::iter::repeat_n(1i8, nz));
    Ok((b.build(), signs))
}

/// Relaxed localized stress basis and the influence pair with m layers.
/// Layers covering Ω1 give the global basis.
pub fn build_mixed_basis(ops: &MixedOperators, aux: &MixedAux, beta: f64, layers: usize) -> Result<(MixedMsBasis, MixedInfluence)> {
    check_robin(beta)?;
    if layers == 0 {
        return Err(Error::InvalidConfig("oversampling needs at least one layer".into()));
    }
    let mesh = ops.space.mesh();
    let itf = ops.interface()?;
    let (ns, nu) = (ops.n_stress(), ops.n_disp());
    let (j, signs) = augmented_matrix(ops, aux, beta)?;
    let count = stress_support_counts(ops);
    let offs = aux.offsets();
    let tt = itf.trace.transpose();
    let mut last: Option<(Vec<usize>, Factorization)> = None;
    let (mut blocks, mut cols, mut infl) = (vec![], vec![], vec![]);
    for cell in &aux.cells {
        let k = cell.coarse;
        let ov = mesh.oversample(k, layers)?;
        let fine = mesh.fine_cells_in(&ov.block);
        let stress = patch_stress(ops, &fine, &count);
        let disp = disp_dofs(ops, &triangles_of(&fine));
        let mut loc = stress.clone();
        loc.extend(disp.iter().map(|d| ns + d));
        let mut members = ov.members.clone();
        members.sort_unstable();
        for &kk in &members {
            let o = offs[kk];
            loc.extend((0..aux.cells[kk].modes.ncols()).map(|q| ns + nu + o + q));
        }
        if last.as_ref().map(|l| l.0 != loc).unwrap_or(true) {
            let kind = SystemKind::QuasiDefinite { signs: loc.iter().map(|&d| signs[d]).collect() };
            let f = Factorization::new(&j.select(&loc, &loc), &kind)?;
            last = Some((loc.clone(), f));
        }
        let f = &last.as_ref().unwrap().1;
        let map = position_map(&loc, ns + nu + aux.n_modes());
        let nl = loc.len();
        let rhs: Vec<Vec<f64>> = (0..cell.weighted.ncols())
            .map(|q| {
                let mut b = vec![0.0; nl];
                for (r, &d) in cell.disp.iter().enumerate() {
                    b[map[ns + d]] = -cell.weighted[(r, q)];
                }
                b
            })
            .collect();
        let sols = f.solve_many(&rhs)?;
        let ns_loc = stress.len();
        cols.push(to_local_columns(&stress, sols.iter().map(|s| s[..ns_loc].to_vec()).collect()));
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
            let sols = f.solve_many(&rhs)?;
            let qs = to_local_columns(&stress, sols.iter().map(|s| s[..ns_loc].to_vec()).collect());
            let us = to_local_columns(&disp, sols.iter().map(|s| s[ns_loc..ns_loc + disp.len()].to_vec()).collect());
            infl.push((k, inputs, qs, us));
        }
        blocks.push(ov.block);
    }
    Ok((MixedMsBasis { layers, blocks, cells: cols }, MixedInfluence { cells: infl }))
}

/// A · (column k of a local block).
fn mul_local(a: &CscMatrix, c: &LocalColumns, k: usize) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    let col = c.values.col(k);
    for (r, &d) in c.dofs.iter().enumerate() {
        let x = col[r];
        if x != 0.0 {
            for (i, v) in a.col(d) {
                y[i] += v * x;
            }
        }
    }
    y
}

/// Ψᵀ M Ψ (symmetric M) and Φᵀ B Ψ.
fn coarse_blocks(m: &CscMatrix, b: &CscMatrix, basis: &MixedMsBasis, aux: &MixedAux) -> (Mat<f64>, Mat<f64>) {
    let offs: Vec<usize> = basis
        .cells
        .iter()
        .scan(0, |o, c| {
            let s = *o;
            *o += c.ncols();
            Some(s)
        })
        .collect();
    let (nb, na) = (basis.n_basis(), aux.n_modes());
    let mut mm = Mat::zeros(nb, nb);
    let mut bb = Mat::zeros(na, nb);
    for (i, ci) in basis.cells.iter().enumerate() {
        for a in 0..ci.ncols() {
            let y = mul_local(m, ci, a);
            for (j, cj) in basis.cells.iter().enumerate() {
                if blocks_near(&basis.blocks[i], &basis.blocks[j]) {
                    for (q, v) in cj.tmul(&y).into_iter().enumerate() {
                        mm[(offs[j] + q, offs[i] + a)] = v;
                    }
                }
            }
            let z = mul_local(b, ci, a);
            for (r, v) in aux.restrict(&z).into_iter().enumerate() {
                bb[(r, offs[i] + a)] = v;
            }
        }
    }
    let mm = Mat::from_fn(nb, nb, |i, j| 0.5 * (mm[(i, j)] + mm[(j, i)]));
    (mm, bb)
}

/// Robin solver on subdomain 1 in the mixed multiscale space.
pub struct MixedCemSolver {
    ops: MixedOperators,
    beta: f64,
    params: CemParams,
    aux: MixedAux,
    basis: MixedMsBasis,
    influence: MixedInfluence,
    /// M + βR
    mass: CscMatrix,
    coarse_mass: Mat<f64>,
    coarse_div: Mat<f64>,
    coarse: CoarseSolver,
}

impl MixedCemSolver {
    pub fn into_ops(self) -> MixedOperators {
        self.ops
    }

    pub fn new(
        ops: MixedOperators,
        material: &MaterialField,
        beta: f64,
        params: CemParams,
        cache_dir: Option<&Path>,
    ) -> Result<Self> {
        params.validate()?;
        check_setup(&ops, material)?;
        check_robin(beta)?;
        if params.n_eig < 3 {
            // interior patches need the rigid modes in the auxiliary space
            return Err(Error::InvalidConfig("the mixed multiscale space needs at least 3 modes per coarse cell".into()));
        }
        let mesh = ops.space.mesh().clone();
        let itf = ops.interface()?;
        let mass = ops.stress_mass.add_scaled(&itf.robin_mass, beta);
        let path = cache_dir.map(|d| cache_path(d, &cache_key("mixed", &mesh, material, beta, params, itf.quad.rule)));
        let cached = match &path {
            Some(p) if p.exists() => Some(decode(&std::fs::read(p)?, &ops, params)?),
            _ => None,
        };
        let (aux, basis, influence, coarse_mass, coarse_div) = match cached {
            Some(c) => c,
            None => {
                let aux = MixedAux::build(&ops, material, beta, params.n_eig)?;
                let (basis, influence) = build_mixed_basis(&ops, &aux, beta, params.layers)?;
                let (cm, cd) = coarse_blocks(&mass, &ops.div, &basis, &aux);
                if let Some(p) = &path {
                    write_atomic(p, &encode(&aux, &basis, &influence, &cm, &cd))?;
                }
                (aux, basis, influence, cm, cd)
            }
        };
        let (nb, na) = (basis.n_basis(), aux.n_modes());
        let full = Mat::from_fn(nb + na, nb + na, |i, j| match (i < nb, j < nb) {
            (true, true) => coarse_mass[(i, j)],
            (false, true) => coarse_div[(i - nb, j)],
            (true, false) => coarse_div[(j - nb, i)],
            (false, false) => 0.0,
        });
        let coarse = CoarseSolver::new(&full)?;
        Ok(Self { ops, beta, params, aux, basis, influence, mass, coarse_mass, coarse_div, coarse })
    }

    pub fn ops(&self) -> &MixedOperators {
        &self.ops
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn params(&self) -> CemParams {
        self.params
    }
    pub fn aux(&self) -> &MixedAux {
        &self.aux
    }
    pub fn basis(&self) -> &MixedMsBasis {
        &self.basis
    }
    pub fn influence(&self) -> &MixedInfluence {
        &self.influence
    }
    /// Ψᵀ(M + βR)Ψ
    pub fn coarse_mass(&self) -> &Mat<f64> {
        &self.coarse_mass
    }
    /// Φᵀ B Ψ
    pub fn coarse_div(&self) -> &Mat<f64> {
        &self.coarse_div
    }

    /// σ = r + Q g, u = w + N g with (r, w) from the coarse saddle problem.
    pub fn solve(&self, g12: &TraceData) -> Result<MixedSolution> {
        let itf = self.ops.interface()?;
        let (ns, nu) = (self.ops.n_stress(), self.ops.n_disp());
        let (qg, ng) = self.influence.apply(&g12.flat(), ns, nu);
        let mut r1 = itf.load(g12)?;
        self.mass.mul_vec_acc(&qg, -1.0, &mut r1);
        let bt_ng = self.ops.div.tmul_vec(&ng);
        for (r, v) in r1.iter_mut().zip(&bt_ng) {
            *r -= v;
        }
        let mut r2: Vec<f64> = self.ops.load.iter().map(|f| -f).collect();
        self.ops.div.mul_vec_acc(&qg, -1.0, &mut r2);
        let mut rhs = self.basis.restrict(&r1);
        rhs.extend(self.aux.restrict(&r2));
        let x = self.coarse.solve(&rhs);
        let nb = self.basis.n_basis();
        let mut sigma = self.basis.expand(&x[..nb], ns);
        let mut u = self.aux.expand(&x[nb..], nu);
        for (s, q) in sigma.iter_mut().zip(&qg) {
            *s += q;
        }
        for (a, b) in u.iter_mut().zip(&ng) {
            *a += b;
        }
        Ok(MixedSolution { sigma, u })
    }
}

fn encode(aux: &MixedAux, basis: &MixedMsBasis, infl: &MixedInfluence, cm: &Mat<f64>, cd: &Mat<f64>) -> Vec<u8> {
    let mut e = Enc::new();
    e.usize(aux.cells.len());
    for c in &aux.cells {
        e.usize(c.coarse);
        e.usizes(&c.disp);
        e.f64s(&c.eigenvalues);
        e.mat(&c.modes);
        e.mat(&c.weighted);
        e.f64s(&[c.scale]);
    }
    for c in &basis.cells {
        e.cols(c);
    }
    e.usize(infl.cells.len());
    for (k, inputs, q, u) in &infl.cells {
        e.usize(*k);
        e.usizes(inputs);
        e.cols(q);
        e.cols(u);
    }
    e.mat(cm);
    e.mat(cd);
    e.finish()
}

type Decoded = (MixedAux, MixedMsBasis, MixedInfluence, Mat<f64>, Mat<f64>);

fn decode(bytes: &[u8], ops: &MixedOperators, params: CemParams) -> Result<Decoded> {
    let mesh = ops.space.mesh();
    let mut d = Dec::new(bytes)?;
    let nk = d.usize()?;
    if nk != mesh.n_coarse_omega1() {
        return Err(Error::InvalidConfig("basis cache does not match the mesh".into()));
    }
    let mut cells = Vec::with_capacity(nk);
    for _ in 0..nk {
        let coarse = d.usize()?;
        let disp = d.usizes()?;
        let eigenvalues = d.f64s()?;
        let modes = d.mat()?;
        let weighted = d.mat()?;
        let scale = d.f64s()?.first().copied().unwrap_or(0.0);
        cells.push(MixedAuxCell { coarse, disp, eigenvalues, modes, weighted, scale });
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
        let q = d.cols()?;
        let u = d.cols()?;
        infl.push((k, inputs, q, u));
    }
    let cm = d.mat()?;
    let cd = d.mat()?;
    d.done()?;
    let (ns, nu) = (ops.n_stress(), ops.n_disp());
    let bad_s = bcols.iter().chain(infl.iter().map(|x| &x.2)).any(|c| c.dofs.iter().any(|&x| x >= ns));
    let bad_u = cells.iter().any(|c| c.disp.iter().any(|&x| x >= nu)) || infl.iter().any(|x| x.3.dofs.iter().any(|&d| d >= nu));
    if bad_s || bad_u {
        return Err(Error::InvalidConfig("basis cache does not match the subdomain space".into()));
    }
    Ok((MixedAux { cells }, MixedMsBasis { layers: params.layers, blocks, cells: bcols }, MixedInfluence { cells: infl }, cm, cd))
}
