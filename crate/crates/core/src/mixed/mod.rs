//! Stress–displacement formulation with the Arnold–Winther element.
//!
//! Unknowns are ordered stress first, displacement second. The discrete
//! equations are
//!
//! ```text
//! (Aσ, τ) + β∫_γ σn·τn + (1/δ)∫_{Γ_C} σ_c⁺ τ_c + (div τ, u) = ∫_γ g·τn
//! (div σ, v)                                                 = −(f, v)
//! ```
//!
//! Displacement boundary conditions on x = 0, y = 0, y = 1 are natural.
//! On x = 1 the tangential traction σ12 vanishes (its dofs are removed) and
//! the normal traction carries the penalty.

pub mod element;

use crate::error::{Error, Result};
use crate::linalg::{CscMatrix, Factorization, SystemKind, TripletBuilder};
use crate::material::MaterialField;
use crate::mesh::{InterfaceQuadrature, InterfaceRule, Region, TwoScaleMesh};
use crate::newton::{Functional, NewtonParams, NewtonStats, PenalizedSystem};
use crate::quadrature::gauss_unit;
use crate::source::SourceSpec;
use crate::trace::TraceData;

pub use element::{reference, AwReference, Corner, EdgeSlot, TriKind, NS, NU};

const NONE: usize = usize::MAX;

/// Edge numbering: horizontal, then vertical, then diagonal edges.
pub fn edge_index(mesh: &TwoScaleMesh, slot: EdgeSlot, ci: usize, cj: usize) -> usize {
    let n = mesh.n_fine();
    let nh = n * (n + 1);
    match slot {
        EdgeSlot::Bottom => cj * n + ci,
        EdgeSlot::Top => (cj + 1) * n + ci,
        EdgeSlot::Left => nh + cj * (n + 1) + ci,
        EdgeSlot::Right => nh + cj * (n + 1) + ci + 1,
        EdgeSlot::Diagonal => 2 * nh + mesh.cell(ci, cj),
    }
}

pub fn n_edges(mesh: &TwoScaleMesh) -> usize {
    let n = mesh.n_fine();
    2 * n * (n + 1) + n * n
}

/// Triangle t = 2·cell + (0 lower, 1 upper).
pub fn triangle_kind(t: usize) -> TriKind {
    if t.is_multiple_of(2) {
        TriKind::Lower
    } else {
        TriKind::Upper
    }
}

/// Stress and displacement numbering of a region.
#[derive(Clone, Debug)]
pub struct MixedSpace {
    mesh: TwoScaleMesh,
    region: Region,
    vdof: Vec<[usize; 3]>,
    edof: Vec<[usize; 4]>,
    tdof: Vec<[usize; 3]>,
    udof: Vec<usize>,
    triangles: Vec<usize>,
    n_stress: usize,
    n_disp: usize,
}

impl MixedSpace {
    pub fn new(mesh: &TwoScaleMesh, region: Region) -> Self {
        let n = mesh.n_fine();
        let (lo, hi) = mesh.cell_columns(region);
        let contact = hi == n;
        let mut vdof = vec![[NONE; 3]; mesh.n_vertices()];
        let mut edof = vec![[NONE; 4]; n_edges(mesh)];
        let mut tdof = vec![[NONE; 3]; 2 * mesh.n_cells()];
        let mut udof = vec![NONE; 2 * mesh.n_cells()];
        let mut next = 0;
        let mut take = |k: usize| {
            let s = next;
            next += k;
            s
        };
        // Vertices, then edges, then cell interiors: local-first ordering
        // keeps the factorization profile modest.
        for j in 0..=n {
            for i in lo..=hi {
                let v = mesh.vertex(i, j);
                let skip12 = contact && i == n;
                let b = take(if skip12 { 2 } else { 3 });
                vdof[v] = [b, b + 1, if skip12 { NONE } else { b + 2 }];
            }
        }
        let mut triangles = Vec::new();
        for cj in 0..n {
            for ci in lo..hi {
                for slot in [EdgeSlot::Bottom, EdgeSlot::Left, EdgeSlot::Diagonal, EdgeSlot::Top, EdgeSlot::Right] {
                    let e = edge_index(mesh, slot, ci, cj);
                    if edof[e][0] != NONE {
                        continue;
                    }
                    if slot == EdgeSlot::Right && contact && ci + 1 == n {
                        let b = take(2);
                        edof[e] = [b, b + 1, NONE, NONE];
                    } else {
                        let b = take(4);
                        edof[e] = [b, b + 1, b + 2, b + 3];
                    }
                }
                let c = mesh.cell(ci, cj);
                for k in 0..2 {
                    let b = take(3);
                    tdof[2 * c + k] = [b, b + 1, b + 2];
                    triangles.push(2 * c + k);
                }
            }
        }
        let n_stress = next;
        for (k, &t) in triangles.iter().enumerate() {
            udof[t] = NU * k;
        }
        let n_disp = NU * triangles.len();
        Self { mesh: mesh.clone(), region, vdof, edof, tdof, udof, triangles, n_stress, n_disp }
    }

    pub fn mesh(&self) -> &TwoScaleMesh {
        &self.mesh
    }
    pub fn region(&self) -> Region {
        self.region
    }
    pub fn n_stress(&self) -> usize {
        self.n_stress
    }
    pub fn n_disp(&self) -> usize {
        self.n_disp
    }
    pub fn n_dofs(&self) -> usize {
        self.n_stress + self.n_disp
    }
    pub fn triangles(&self) -> &[usize] {
        &self.triangles
    }
    pub fn contains_triangle(&self, t: usize) -> bool {
        self.udof[t] != NONE
    }

    /// Global stress dof (or None) of each of the 24 local functions.
    pub fn local_stress_dofs(&self, t: usize) -> [Option<usize>; NS] {
        let c = t / 2;
        let kind = triangle_kind(t);
        let (ci, cj) = self.mesh.cell_ij(c);
        let mut out = [None; NS];
        let opt = |d: usize| (d != NONE).then_some(d);
        for (a, corner) in kind.corners().iter().enumerate() {
            let (di, dj) = corner.offset();
            let v = self.mesh.vertex(ci + di, cj + dj);
            for comp in 0..3 {
                out[3 * a + comp] = opt(self.vdof[v][comp]);
            }
        }
        for (e, (slot, _, _)) in kind.edges().iter().enumerate() {
            let g = edge_index(&self.mesh, *slot, ci, cj);
            for k in 0..4 {
                out[9 + 4 * e + k] = opt(self.edof[g][k]);
            }
        }
        for k in 0..3 {
            out[21 + k] = opt(self.tdof[t][k]);
        }
        out
    }

    /// First displacement dof of a triangle (offset within the displacement block).
    pub fn disp_offset(&self, t: usize) -> Option<usize> {
        let d = self.udof[t];
        (d != NONE).then_some(d)
    }

    /// Local stress coefficients of a triangle.
    pub fn gather_stress(&self, sigma: &[f64], t: usize) -> [f64; NS] {
        let mut out = [0.0; NS];
        for (k, d) in self.local_stress_dofs(t).iter().enumerate() {
            if let Some(d) = d {
                out[k] = sigma[*d];
            }
        }
        out
    }

    pub fn gather_disp(&self, u: &[f64], t: usize) -> [f64; NU] {
        let mut out = [0.0; NU];
        if let Some(o) = self.disp_offset(t) {
            out.copy_from_slice(&u[o..o + NU]);
        }
        out
    }

    /// Stress (Voigt) at a point given in cell-centred coordinates.
    pub fn stress_at(&self, sigma: &[f64], t: usize, p: [f64; 2]) -> [f64; 3] {
        let vals = reference(triangle_kind(t)).eval(p);
        let loc = self.gather_stress(sigma, t);
        let mut s = [0.0; 3];
        for j in 0..NS {
            for c in 0..3 {
                s[c] += loc[j] * vals[j][c];
            }
        }
        s
    }

    /// Per-cell Voigt triples (σ11, σ12, σ22) at cell centroids.
    pub fn centroid_stress(&self, sigma: &[f64]) -> Vec<(usize, [f64; 3])> {
        let mut out = vec![];
        for &t in self.triangles.iter().filter(|t| *t % 2 == 0) {
            let s = self.stress_at(sigma, t, [0.0, 0.0]);
            out.push((t / 2, [s[0], s[2], s[1]]));
        }
        out
    }
}

/// Per-triangle element matrices.
pub struct ElementMatrices {
    pub mass: [[f64; NS]; NS],
    /// rows: displacement basis, cols: stress basis
    pub div: [[f64; NS]; NU],
    pub disp_mass: [[f64; NU]; NU],
}

/// (Aσ:τ) weights in Voigt form: σᵀ A diag(1,1,2) τ.
fn energy_weights(material: &MaterialField, c: usize) -> [[f64; 3]; 3] {
    let a = material.compliance(c);
    let mut q = a;
    for row in q.iter_mut() {
        row[2] *= 2.0;
    }
    q
}

pub fn element_matrices(mesh: &TwoScaleMesh, material: &MaterialField, t: usize) -> ElementMatrices {
    let r = reference(triangle_kind(t));
    let h = mesh.h();
    let q = energy_weights(material, t / 2);
    let mut mass = [[0.0; NS]; NS];
    for (pi, &(a, b)) in element::PAIRS.iter().enumerate() {
        let cm = &r.comp_mass[pi];
        if a == b {
            let s = h * h * q[a][a];
            if s != 0.0 {
                for i in 0..NS {
                    for j in 0..NS {
                        mass[i][j] += s * cm[i][j];
                    }
                }
            }
        } else {
            let s = h * h * q[a][b];
            if s != 0.0 {
                for i in 0..NS {
                    for j in 0..NS {
                        mass[i][j] += s * (cm[i][j] + cm[j][i]);
                    }
                }
            }
        }
    }
    let mut div = r.div;
    for row in div.iter_mut() {
        for v in row.iter_mut() {
            *v *= h;
        }
    }
    let mut disp_mass = r.disp_mass;
    for row in disp_mass.iter_mut() {
        for v in row.iter_mut() {
            *v *= h * h;
        }
    }
    ElementMatrices { mass, div, disp_mass }
}

/// Interface traction sampling for a subdomain.
#[derive(Clone, Debug)]
pub struct MixedInterfaceOps {
    pub quad: InterfaceQuadrature,
    /// Outward normal x-component of this subdomain on γ (+1 or −1).
    pub normal_x: f64,
    /// Rows 2p, 2p+1: σn (outward) at sample p.
    pub trace: CscMatrix,
    /// Tᵀ W T
    pub robin_mass: CscMatrix,
}

impl MixedInterfaceOps {
    pub fn sample(&self, sigma: &[f64]) -> Vec<[f64; 2]> {
        let t = self.trace.mul_vec(sigma);
        t.chunks(2).map(|c| [c[0], c[1]]).collect()
    }

    /// ∫ g·τn as a stress-space vector.
    pub fn load(&self, g: &TraceData) -> Result<Vec<f64>> {
        g.check_layout(&self.quad)?;
        let wg: Vec<f64> = g.values.iter().zip(&self.quad.w).flat_map(|(v, w)| [w * v[0], w * v[1]]).collect();
        Ok(self.trace.tmul_vec(&wg))
    }
}

/// Normal-traction samples on x = 1.
#[derive(Clone, Debug)]
pub struct MixedContactOps {
    pub y: Vec<f64>,
    pub samples: Vec<Functional>,
    pub weights: Vec<f64>,
}

impl MixedContactOps {
    pub fn normal_stress(&self, sigma: &[f64]) -> Vec<f64> {
        self.samples.iter().map(|s| s.iter().map(|&(i, c)| c * sigma[i]).sum()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct MixedOperators {
    pub space: MixedSpace,
    /// (Aσ, τ)
    pub stress_mass: CscMatrix,
    /// (div τ, v): n_disp × n_stress
    pub div: CscMatrix,
    /// L² mass of the displacement space
    pub disp_mass: CscMatrix,
    /// (f, v)
    pub load: Vec<f64>,
    pub interface: Option<MixedInterfaceOps>,
    pub contact: Option<MixedContactOps>,
}

pub fn assemble_mixed(
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    source: &SourceSpec,
    region: Region,
    rule: InterfaceRule,
) -> Result<MixedOperators> {
    if material.n_cells() != mesh.n_cells() {
        return Err(Error::DimensionMismatch("material does not match the mesh".into()));
    }
    let space = MixedSpace::new(mesh, region);
    let (ns, nu) = (space.n_stress(), space.n_disp());
    let nt = space.triangles().len();
    let mut mb = TripletBuilder::with_capacity(ns, ns, NS * NS * nt);
    let mut bb = TripletBuilder::with_capacity(nu, ns, NS * NU * nt);
    let mut ub = TripletBuilder::with_capacity(nu, nu, NU * NU * nt);
    let mut load = vec![0.0; nu];
    let h = mesh.h();
    for &t in space.triangles() {
        let em = element_matrices(mesh, material, t);
        let sd = space.local_stress_dofs(t);
        let uo = space.disp_offset(t).unwrap();
        for i in 0..NS {
            let Some(gi) = sd[i] else { continue };
            for j in 0..NS {
                if let Some(gj) = sd[j] {
                    mb.push(gi, gj, em.mass[i][j]);
                }
            }
            for k in 0..NU {
                if em.div[k][i] != 0.0 {
                    bb.push(uo + k, gi, em.div[k][i]);
                }
            }
        }
        for k in 0..NU {
            for l in 0..NU {
                if em.disp_mass[k][l] != 0.0 {
                    ub.push(uo + k, uo + l, em.disp_mass[k][l]);
                }
            }
        }
        if !source.is_zero() {
            let (ci, cj) = mesh.cell_ij(t / 2);
            let r = reference(triangle_kind(t));
            for qp in &r.quad {
                let x = (ci as f64 + 0.5 + qp.p[0]) * h;
                let y = (cj as f64 + 0.5 + qp.p[1]) * h;
                let f = source.eval(x, y);
                let vb = element::disp_basis(qp.p);
                for k in 0..NU {
                    load[uo + k] += h * h * qp.w * (f[0] * vb[k][0] + f[1] * vb[k][1]);
                }
            }
        }
    }
    let interface = match region {
        Region::Omega => None,
        _ => Some(interface_ops(&space, mesh.interface_quadrature(rule))),
    };
    let contact = match region {
        Region::Omega1 => None,
        _ => Some(contact_ops(&space)),
    };
    Ok(MixedOperators {
        space,
        stress_mass: mb.build(),
        div: bb.build(),
        disp_mass: ub.build(),
        load,
        interface,
        contact,
    })
}

/// Evaluates traction functionals of the triangle owning a boundary edge.
/// `t` is the triangle, `e` its local edge index, `n` the outward normal,
/// `pts` the sample points as s ∈ [0, 1] from the lower to the upper end.
fn edge_traction_rows(space: &MixedSpace, t: usize, e: usize, n: [f64; 2], s: f64) -> [Vec<(usize, f64)>; 2] {
    let kind = triangle_kind(t);
    let r = reference(kind);
    let (_, a, b) = kind.edges()[e];
    let (a, b) = (a.coords(), b.coords());
    let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
    let tr = r.traction(p, n);
    let sd = space.local_stress_dofs(t);
    let mut rows = [vec![], vec![]];
    for j in r.edge_dofs(e) {
        if let Some(g) = sd[j] {
            for l in 0..2 {
                if tr[j][l].abs() > 1e-14 {
                    rows[l].push((g, tr[j][l]));
                }
            }
        }
    }
    rows
}

fn interface_ops(space: &MixedSpace, quad: InterfaceQuadrature) -> MixedInterfaceOps {
    let mesh = space.mesh();
    let g = mesh.gamma_column();
    let (ci, kind, e, nx) = match space.region() {
        // right edge of the lower triangle west of γ
        Region::Omega1 => (g - 1, TriKind::Lower, 1, 1.0),
        // left edge of the upper triangle east of γ
        _ => (g, TriKind::Upper, 2, -1.0),
    };
    let mut tb = TripletBuilder::new(2 * quad.len(), space.n_stress());
    for (p, &(seg, s)) in quad.loc.iter().enumerate() {
        let t = 2 * mesh.cell(ci, seg) + usize::from(kind == TriKind::Upper);
        let rows = edge_traction_rows(space, t, e, [nx, 0.0], s);
        for (l, row) in rows.iter().enumerate() {
            for &(d, v) in row {
                tb.push(2 * p + l, d, v);
            }
        }
    }
    let trace = tb.build();
    let w: Vec<f64> = quad.w.iter().flat_map(|w| [*w, *w]).collect();
    let robin_mass = crate::primal::sparse_triple_product(&trace, &CscMatrix::from_diagonal(&w));
    MixedInterfaceOps { quad, normal_x: nx, trace, robin_mass }
}

fn contact_ops(space: &MixedSpace) -> MixedContactOps {
    let mesh = space.mesh();
    let n = mesh.n_fine();
    let h = mesh.h();
    let (gx, gw) = gauss_unit(2);
    let (mut y, mut samples, mut weights) = (vec![], vec![], vec![]);
    for j in 0..n {
        let t = 2 * mesh.cell(n - 1, j);
        for q in 0..gx.len() {
            let rows = edge_traction_rows(space, t, 1, [1.0, 0.0], gx[q]);
            y.push((j as f64 + gx[q]) * h);
            samples.push(rows[0].clone());
            weights.push(gw[q] * h);
        }
    }
    MixedContactOps { y, samples, weights }
}

/// Stress and displacement coefficient vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedSolution {
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
}

impl MixedSolution {
    pub fn zeros(space: &MixedSpace) -> Self {
        Self { sigma: vec![0.0; space.n_stress()], u: vec![0.0; space.n_disp()] }
    }

    fn from_joint(x: Vec<f64>, ns: usize) -> Self {
        let mut sigma = x;
        let u = sigma.split_off(ns);
        Self { sigma, u }
    }

    pub fn joint(&self) -> Vec<f64> {
        let mut x = self.sigma.clone();
        x.extend_from_slice(&self.u);
        x
    }
}

impl MixedOperators {
    pub fn n_stress(&self) -> usize {
        self.space.n_stress()
    }

    pub fn n_disp(&self) -> usize {
        self.space.n_disp()
    }

    pub fn interface(&self) -> Result<&MixedInterfaceOps> {
        self.interface.as_ref().ok_or_else(|| Error::InvalidConfig("operator has no interface".into()))
    }

    pub fn contact(&self) -> Result<&MixedContactOps> {
        self.contact.as_ref().ok_or_else(|| Error::InvalidConfig("operator has no contact boundary".into()))
    }

    /// [[M + βR, Bᵀ], [B, 0]] with an explicit zero diagonal on the second block.
    pub fn saddle_matrix(&self, beta: Option<f64>) -> Result<CscMatrix> {
        let (ns, nu) = (self.n_stress(), self.n_disp());
        let mut b = TripletBuilder::with_capacity(ns + nu, ns + nu, self.stress_mass.nnz() + 2 * self.div.nnz() + nu);
        self.stress_mass.push_into(&mut b, 0, 0, 1.0);
        if let Some(beta) = beta {
            self.interface()?.robin_mass.push_into(&mut b, 0, 0, beta);
        }
        self.div.push_into(&mut b, ns, 0, 1.0);
        self.div.transpose().push_into(&mut b, 0, ns, 1.0);
        for k in 0..nu {
            b.push(ns + k, ns + k, 0.0);
        }
        Ok(b.build())
    }

    pub fn saddle_kind(&self) -> SystemKind {
        let mut signs = vec![1i8; self.n_stress()];
        signs.extend(std::iter::repeat_n(-1i8, self.n_disp()));
        SystemKind::QuasiDefinite { signs }
    }

    /// Joint right-hand side [G; −F].
    fn rhs(&self, g: Option<&TraceData>, load: &[f64]) -> Result<Vec<f64>> {
        let mut x = match g {
            Some(g) => self.interface()?.load(g)?,
            None => vec![0.0; self.n_stress()],
        };
        x.extend(load.iter().map(|f| -f));
        Ok(x)
    }

    /// (Aτ, τ)
    pub fn stress_energy(&self, sigma: &[f64]) -> f64 {
        self.stress_mass.bilinear(sigma, sigma)
    }

    /// Per-displacement-dof residual (div σ, v) + (f, v).
    pub fn divergence_residual(&self, sigma: &[f64], load: &[f64]) -> Vec<f64> {
        let mut r = self.div.mul_vec(sigma);
        for (ri, f) in r.iter_mut().zip(load) {
            *ri += f;
        }
        r
    }

    /// Outward traction at the interface samples.
    pub fn interface_traction(&self, sigma: &[f64]) -> Result<Vec<[f64; 2]>> {
        Ok(self.interface()?.sample(sigma))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidConfig(format!("penalty parameter must be positive, got {delta}")));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidConfig(format!("Robin parameter must be positive, got {beta}")));
    }
    Ok(())
}

fn penalized(ops: &MixedOperators, beta: Option<f64>, delta: f64) -> Result<PenalizedSystem> {
    let c = ops.contact()?;
    let w = c.weights.iter().map(|w| w / delta).collect();
    let mut sys = PenalizedSystem::new(&ops.saddle_matrix(beta)?, ops.saddle_kind(), c.samples.clone(), w)?;
    // large saddle factorizations are memory hungry; keep only a few
    if ops.space.n_dofs() > 100_000 {
        sys.set_cache_capacity(1);
    }
    Ok(sys)
}

/// Monolithic penalized mixed problem on the whole domain.
pub fn solve_monolithic_mixed(ops: &MixedOperators, delta: f64, params: &NewtonParams) -> Result<(MixedSolution, NewtonStats)> {
    check_delta(delta)?;
    let mut sys = penalized(ops, None, delta)?;
    let b = ops.rhs(None, &ops.load)?;
    let (x, st) = sys.solve(&b, None, params)?;
    Ok((MixedSolution::from_joint(x, ops.n_stress()), st))
}

/// Linear mixed solve with u_c = 0 on x = 1 (no penalty).
pub fn solve_linear_mixed(ops: &MixedOperators, beta: Option<f64>, g: Option<&TraceData>) -> Result<MixedSolution> {
    let a = ops.saddle_matrix(beta)?;
    let b = ops.rhs(g, &ops.load)?;
    let x = Factorization::new(&a, &ops.saddle_kind())?.solve(&b)?;
    Ok(MixedSolution::from_joint(x, ops.n_stress()))
}

/// Robin subproblem on subdomain 1 with a cached factorization.
pub struct MixedSub1 {
    ops: MixedOperators,
    beta: f64,
    load: Vec<f64>,
    factor: Factorization,
}

impl MixedSub1 {
    pub fn into_ops(self) -> MixedOperators {
        self.ops
    }

    pub fn new(ops: MixedOperators, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let factor = Factorization::new(&ops.saddle_matrix(Some(beta))?, &ops.saddle_kind())?;
        let load = ops.load.clone();
        Ok(Self { ops, beta, load, factor })
    }

    /// Replaces the (f, v) right-hand side, e.g. by its projected form.
    pub fn set_load(&mut self, load: Vec<f64>) -> Result<()> {
        if load.len() != self.ops.n_disp() {
            return Err(Error::DimensionMismatch("displacement load length".into()));
        }
        self.load = load;
        Ok(())
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn ops(&self) -> &MixedOperators {
        &self.ops
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn solve(&self, g12: &TraceData) -> Result<MixedSolution> {
        let b = self.ops.rhs(Some(g12), &self.load)?;
        Ok(MixedSolution::from_joint(self.factor.solve(&b)?, self.ops.n_stress()))
    }
}

/// Robin + contact subproblem on subdomain 2.
pub struct MixedSub2 {
    ops: MixedOperators,
    beta: f64,
    delta: f64,
    system: PenalizedSystem,
}

impl MixedSub2 {
    pub fn into_ops(self) -> MixedOperators {
        self.ops
    }

    pub fn new(ops: MixedOperators, beta: f64, delta: f64) -> Result<Self> {
        check_beta(beta)?;
        check_delta(delta)?;
        let system = penalized(&ops, Some(beta), delta)?;
        Ok(Self { ops, beta, delta, system })
    }

    pub fn ops(&self) -> &MixedOperators {
        &self.ops
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn solve(&mut self, g21: &TraceData, warm: Option<&MixedSolution>, params: &NewtonParams) -> Result<(MixedSolution, NewtonStats)> {
        let b = self.ops.rhs(Some(g21), &self.ops.load)?;
        let x0 = warm.map(|w| w.joint());
        let (x, st) = self.system.solve(&b, x0.as_deref(), params)?;
        Ok((MixedSolution::from_joint(x, self.ops.n_stress()), st))
    }
}

/// Robin data g for which the subdomain-1 problem returns `sol`:
/// g = βσn + (least-squares interface representative of Mσ + Bᵀu).
pub fn robin_data_from_solution(ops: &MixedOperators, beta: f64, sol: &MixedSolution) -> Result<TraceData> {
    let itf = ops.interface()?;
    let mut r = ops.stress_mass.mul_vec(&sol.sigma);
    ops.div.transpose().mul_vec_acc(&sol.u, 1.0, &mut r);
    // restrict to the dofs seen by the trace operator
    let dofs: Vec<usize> = (0..ops.n_stress()).filter(|&d| itf.trace.col(d).next().is_some()).collect();
    let rm = itf.robin_mass.select(&dofs, &dofs);
    let rr: Vec<f64> = dofs.iter().map(|&d| r[d]).collect();
    let y = crate::linalg::solve_sparse(&rm, &rr, &SystemKind::Spd)?;
    let mut full = vec![0.0; ops.n_stress()];
    for (k, &d) in dofs.iter().enumerate() {
        full[d] = y[k];
    }
    let ty = itf.trace.mul_vec(&full);
    let ts = itf.trace.mul_vec(&sol.sigma);
    let vals: Vec<f64> = ty.iter().zip(&ts).map(|(a, b)| a + beta * b).collect();
    Ok(TraceData::from_flat(crate::trace::TraceSide::G12, &vals))
}

/// Contact samples (y, u_c, σ_c) with u_c from the penalty relation.
pub fn contact_trace_mixed(ops: &MixedOperators, sigma: &[f64], delta: f64) -> Result<Vec<(f64, f64, f64)>> {
    let c = ops.contact()?;
    Ok(c.y.iter().zip(c.normal_stress(sigma)).map(|(&y, s)| (y, -s.max(0.0) / delta, s)).collect())
}

#[cfg(test)]
mod tests;
