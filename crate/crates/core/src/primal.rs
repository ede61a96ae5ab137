//! Displacement formulation with bilinear (Q1) vector elements.
//!
//! Unknowns are nodal displacements; Dirichlet vertices (x = 0, y = 0,
//! y = 1) carry no dofs. On the interface the Robin terms use the chosen
//! interface quadrature, and the contact penalty on x = 1 uses a lumped
//! trapezoid rule so that its linearization is diagonal.

use crate::error::{Error, Result};
use crate::linalg::{CscMatrix, Factorization, SystemKind, TripletBuilder};
use crate::material::MaterialField;
use crate::mesh::{BoundaryTag, InterfaceQuadrature, InterfaceRule, Region, TwoScaleMesh};
use crate::newton::{Functional, NewtonParams, NewtonStats, PenalizedSystem};
use crate::quadrature::gauss_unit;
use crate::source::SourceSpec;
use crate::trace::{TraceData, TraceSide};

const NONE: usize = usize::MAX;

/// Local node order of a fine quad: SW, SE, NE, NW.
const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Free-dof numbering of a region.
#[derive(Clone, Debug)]
pub struct PrimalSpace {
    mesh: TwoScaleMesh,
    region: Region,
    dof: Vec<usize>,
    vertices: Vec<usize>,
}

impl PrimalSpace {
    pub fn new(mesh: &TwoScaleMesh, region: Region) -> Self {
        let (lo, hi) = mesh.cell_columns(region);
        let n = mesh.n_fine();
        let mut dof = vec![NONE; mesh.n_vertices()];
        let mut vertices = Vec::new();
        for j in 0..=n {
            for i in lo..=hi {
                let v = mesh.vertex(i, j);
                if mesh.boundary_tag(v) != BoundaryTag::Dirichlet {
                    dof[v] = 2 * vertices.len();
                    vertices.push(v);
                }
            }
        }
        Self { mesh: mesh.clone(), region, dof, vertices }
    }

    pub fn mesh(&self) -> &TwoScaleMesh {
        &self.mesh
    }
    pub fn region(&self) -> Region {
        self.region
    }
    pub fn n_dofs(&self) -> usize {
        2 * self.vertices.len()
    }
    /// Free vertices in dof order.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }
    /// First (x) dof of a vertex, if free in this space.
    pub fn vertex_dof(&self, v: usize) -> Option<usize> {
        let d = self.dof[v];
        (d != NONE).then_some(d)
    }

    /// Nodal value at a mesh vertex (zero where not free).
    pub fn value_at(&self, u: &[f64], v: usize) -> [f64; 2] {
        match self.vertex_dof(v) {
            Some(d) => [u[d], u[d + 1]],
            None => [0.0, 0.0],
        }
    }

    /// Copies nodal values from another space; vertices missing in `from`
    /// get zero.
    pub fn transfer_from(&self, from: &PrimalSpace, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs()];
        for (k, &v) in self.vertices.iter().enumerate() {
            let val = from.value_at(u, v);
            out[2 * k] = val[0];
            out[2 * k + 1] = val[1];
        }
        out
    }

    /// Cells of the region.
    pub fn cells(&self) -> Vec<usize> {
        self.mesh.region_cells(self.region)
    }

    /// Global dof indices (or NONE) of a cell, interleaved (x, y) per corner.
    pub fn cell_dofs(&self, c: usize) -> [usize; 8] {
        let (i, j) = self.mesh.cell_ij(c);
        let mut out = [NONE; 8];
        for (a, (di, dj)) in CORNERS.iter().enumerate() {
            let d = self.dof[self.mesh.vertex(i + di, j + dj)];
            if d != NONE {
                out[2 * a] = d;
                out[2 * a + 1] = d + 1;
            }
        }
        out
    }
}

/// (∂N/∂x, ∂N/∂y, N, weight, point) at one Gauss point.
type GaussEntry = ([f64; 4], [f64; 4], [f64; 4], f64, (f64, f64));
/// Lambda part, mu part and mass of the reference element.
type RefMatrices = ([[f64; 8]; 8], [[f64; 8]; 8], [[f64; 4]; 4]);

/// Reference-cell tables for Q1 on a square of side h.
struct Q1Tables {
    /// ∂N/∂x, ∂N/∂y per Gauss point (in units of 1/h), N values, weight
    points: Vec<GaussEntry>,
}

impl Q1Tables {
    fn new() -> Self {
        let (x, w) = gauss_unit(2);
        let mut points = vec![];
        for a in 0..2 {
            for b in 0..2 {
                let (xi, eta) = (x[a], x[b]);
                let n = [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta];
                let dx = [-(1.0 - eta), 1.0 - eta, eta, -eta];
                let dy = [-(1.0 - xi), -xi, xi, 1.0 - xi];
                points.push((dx, dy, n, w[a] * w[b], (xi, eta)));
            }
        }
        Self { points }
    }

    /// Element stiffness split as λ K_λ + μ K_μ (independent of h in 2D).
    fn stiffness_parts(&self) -> ([[f64; 8]; 8], [[f64; 8]; 8]) {
        let mut kl = [[0.0; 8]; 8];
        let mut km = [[0.0; 8]; 8];
        for (dx, dy, _, w, _) in &self.points {
            // engineering strain rows (ε11, ε22, γ12)
            let mut bm = [[0.0; 8]; 3];
            for a in 0..4 {
                bm[0][2 * a] = dx[a];
                bm[1][2 * a + 1] = dy[a];
                bm[2][2 * a] = dy[a];
                bm[2][2 * a + 1] = dx[a];
            }
            for p in 0..8 {
                for q in 0..8 {
                    let div_p = bm[0][p] + bm[1][p];
                    let div_q = bm[0][q] + bm[1][q];
                    kl[p][q] += w * div_p * div_q;
                    km[p][q] += w * (2.0 * bm[0][p] * bm[0][q] + 2.0 * bm[1][p] * bm[1][q] + bm[2][p] * bm[2][q]);
                }
            }
        }
        (kl, km)
    }

    fn mass(&self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for (_, _, n, w, _) in &self.points {
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += w * n[a] * n[b];
                }
            }
        }
        m
    }
}

fn tables() -> &'static RefMatrices {
    use std::sync::OnceLock;
    static T: OnceLock<RefMatrices> = OnceLock::new();
    T.get_or_init(|| {
        let t = Q1Tables::new();
        let (kl, km) = t.stiffness_parts();
        (kl, km, t.mass())
    })
}

/// Element stiffness of fine cell c, dofs interleaved per corner (SW, SE, NE, NW).
pub fn element_stiffness(material: &MaterialField, c: usize) -> [[f64; 8]; 8] {
    let (kl, km, _) = tables();
    let mut k = [[0.0; 8]; 8];
    for p in 0..8 {
        for q in 0..8 {
            k[p][q] = material.lambda[c] * kl[p][q] + material.mu[c] * km[p][q];
        }
    }
    k
}

/// Scalar Q1 mass on a cell of side h.
pub fn element_mass(h: f64) -> [[f64; 4]; 4] {
    let mut m = tables().2;
    m.iter_mut().flatten().for_each(|v| *v *= h * h);
    m
}

/// Interface trace operator and Robin mass.
#[derive(Clone, Debug)]
pub struct InterfaceOps {
    pub quad: InterfaceQuadrature,
    /// Rows 2p, 2p+1: displacement components at sample p.
    pub trace: CscMatrix,
    /// Tᵀ W T
    pub robin_mass: CscMatrix,
}

impl InterfaceOps {
    pub fn sample(&self, u: &[f64]) -> Vec<[f64; 2]> {
        let t = self.trace.mul_vec(u);
        t.chunks(2).map(|c| [c[0], c[1]]).collect()
    }

    /// ∫* g·v as a load vector.
    pub fn load(&self, g: &TraceData) -> Result<Vec<f64>> {
        g.check_layout(&self.quad)?;
        self.weighted_load(g, &self.quad.w)
    }

    /// Σ_p w_p g_p·v(p) with custom weights.
    pub fn weighted_load(&self, g: &TraceData, w: &[f64]) -> Result<Vec<f64>> {
        let wg: Vec<f64> = g.values.iter().zip(w).flat_map(|(v, w)| [w * v[0], w * v[1]]).collect();
        Ok(self.trace.tmul_vec(&wg))
    }
}

/// Contact nodes with their x-dofs and trapezoid weights.
#[derive(Clone, Debug)]
pub struct ContactOps {
    pub y: Vec<f64>,
    pub dofs: Vec<usize>,
    pub weights: Vec<f64>,
}

impl ContactOps {
    pub fn normal_values(&self, u: &[f64]) -> Vec<f64> {
        self.dofs.iter().map(|&d| u[d]).collect()
    }

    fn functionals(&self) -> Vec<Functional> {
        self.dofs.iter().map(|&d| vec![(d, 1.0)]).collect()
    }

    /// (1/δ) Σ w_p (u_c)⁺ v_c as a vector.
    pub fn penalty_force(&self, u: &[f64], delta: f64) -> Vec<f64> {
        let mut r = vec![0.0; u.len()];
        for (k, &d) in self.dofs.iter().enumerate() {
            r[d] += self.weights[k] / delta * u[d].max(0.0);
        }
        r
    }
}

#[derive(Clone, Debug)]
pub struct PrimalOperators {
    pub space: PrimalSpace,
    pub stiffness: CscMatrix,
    /// Unweighted vector L² mass.
    pub mass: CscMatrix,
    pub load: Vec<f64>,
    pub interface: Option<InterfaceOps>,
    pub contact: Option<ContactOps>,
}

/// Assembles stiffness, mass, load and boundary operators on a region.
pub fn assemble_primal(
    mesh: &TwoScaleMesh,
    material: &MaterialField,
    source: &SourceSpec,
    region: Region,
    rule: InterfaceRule,
) -> Result<PrimalOperators> {
    if material.n_cells() != mesh.n_cells() {
        return Err(Error::DimensionMismatch("material does not match the mesh".into()));
    }
    let space = PrimalSpace::new(mesh, region);
    let n = space.n_dofs();
    let tab = Q1Tables::new();
    let me = element_mass(mesh.h());
    let h = mesh.h();
    let cells = space.cells();
    let mut kb = TripletBuilder::with_capacity(n, n, 64 * cells.len());
    let mut mb = TripletBuilder::with_capacity(n, n, 32 * cells.len());
    let mut load = vec![0.0; n];
    for &c in &cells {
        let dofs = space.cell_dofs(c);
        let ke = element_stiffness(material, c);
        for p in 0..8 {
            if dofs[p] == NONE {
                continue;
            }
            for q in 0..8 {
                if dofs[q] == NONE {
                    continue;
                }
                kb.push(dofs[p], dofs[q], ke[p][q]);
                if p % 2 == q % 2 {
                    mb.push(dofs[p], dofs[q], me[p / 2][q / 2]);
                }
            }
        }
        let (ci, cj) = mesh.cell_ij(c);
        for (_, _, nv, w, (xi, eta)) in &tab.points {
            let f = source.eval((ci as f64 + xi) * h, (cj as f64 + eta) * h);
            for a in 0..4 {
                for l in 0..2 {
                    if dofs[2 * a + l] != NONE {
                        load[dofs[2 * a + l]] += w * h * h * nv[a] * f[l];
                    }
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
        _ => {
            let nodes = mesh.contact_nodes();
            Some(ContactOps {
                y: nodes.iter().map(|&v| mesh.vertex_coords(v).1).collect(),
                dofs: nodes.iter().map(|&v| space.vertex_dof(v).expect("contact nodes are free")).collect(),
                weights: vec![h; nodes.len()],
            })
        }
    };
    Ok(PrimalOperators { space, stiffness: kb.build(), mass: mb.build(), load, interface, contact })
}

fn interface_ops(space: &PrimalSpace, quad: InterfaceQuadrature) -> InterfaceOps {
    let mesh = space.mesh();
    let g = mesh.gamma_column();
    let n = space.n_dofs();
    let mut tb = TripletBuilder::new(2 * quad.len(), n);
    for (p, &(s, t)) in quad.loc.iter().enumerate() {
        for (node, wt) in [(s, 1.0 - t), (s + 1, t)] {
            if wt == 0.0 {
                continue;
            }
            if let Some(d) = space.vertex_dof(mesh.vertex(g, node)) {
                tb.push(2 * p, d, wt);
                tb.push(2 * p + 1, d + 1, wt);
            }
        }
    }
    let trace = tb.build();
    let mut wb = TripletBuilder::new(2 * quad.len(), 2 * quad.len());
    for (p, w) in quad.w.iter().enumerate() {
        wb.push(2 * p, 2 * p, *w);
        wb.push(2 * p + 1, 2 * p + 1, *w);
    }
    let wmat = wb.build();
    let robin_mass = sparse_triple_product(&trace, &wmat);
    InterfaceOps { quad, trace, robin_mass }
}

/// Tᵀ W T for a diagonal W.
pub(crate) fn sparse_triple_product(t: &CscMatrix, w: &CscMatrix) -> CscMatrix {
    let tt = t.transpose();
    let d = w.diagonal();
    let n = t.ncols();
    let mut b = TripletBuilder::new(n, n);
    // (Tᵀ W T)_{ij} = Σ_p T_pi w_p T_pj ; iterate rows p of T via columns of Tᵀ
    for p in 0..tt.ncols() {
        let entries: Vec<(usize, f64)> = tt.col(p).collect();
        for &(i, a) in &entries {
            for &(j, c) in &entries {
                b.push(i, j, a * d[p] * c);
            }
        }
    }
    b.build()
}

impl PrimalOperators {
    pub fn n_dofs(&self) -> usize {
        self.space.n_dofs()
    }

    pub fn interface(&self) -> Result<&InterfaceOps> {
        self.interface.as_ref().ok_or_else(|| Error::InvalidConfig("operator has no interface".into()))
    }

    pub fn contact(&self) -> Result<&ContactOps> {
        self.contact.as_ref().ok_or_else(|| Error::InvalidConfig("operator has no contact boundary".into()))
    }

    /// a(u, v)
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        self.stiffness.bilinear(u, v)
    }

    /// K + α M_γ
    pub fn robin_matrix(&self, alpha: f64) -> Result<CscMatrix> {
        Ok(self.stiffness.add_scaled(&self.interface()?.robin_mass, alpha))
    }
}

/// Monolithic penalized problem on the whole domain (the reference solution).
pub fn solve_monolithic_contact(ops: &PrimalOperators, delta: f64, params: &NewtonParams) -> Result<(Vec<f64>, NewtonStats)> {
    check_delta(delta)?;
    let c = ops.contact()?;
    let w: Vec<f64> = c.weights.iter().map(|w| w / delta).collect();
    let mut sys = PenalizedSystem::new(&ops.stiffness, SystemKind::Spd, c.functionals(), w)?;
    sys.solve(&ops.load, None, params)
}

/// Pure linear solve with a traction-free contact boundary.
pub fn solve_linear(ops: &PrimalOperators) -> Result<Vec<f64>> {
    Factorization::new(&ops.stiffness, &SystemKind::Spd)?.solve(&ops.load)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidConfig(format!("penalty parameter must be positive, got {delta}")));
    }
    Ok(())
}

/// Robin subproblem on subdomain 1 with a cached factorization.
pub struct PrimalSub1 {
    ops: PrimalOperators,
    alpha: f64,
    factor: Factorization,
}

impl PrimalSub1 {
    pub fn into_ops(self) -> PrimalOperators {
        self.ops
    }

    pub fn new(ops: PrimalOperators, alpha: f64) -> Result<Self> {
        if alpha <= 0.0 {
            return Err(Error::InvalidConfig("Robin parameter must be positive".into()));
        }
        let factor = Factorization::new(&ops.robin_matrix(alpha)?, &SystemKind::Spd)?;
        Ok(Self { ops, alpha, factor })
    }

    pub fn ops(&self) -> &PrimalOperators {
        &self.ops
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn solve(&self, g12: &TraceData) -> Result<Vec<f64>> {
        let mut rhs = self.ops.interface()?.load(g12)?;
        for (r, b) in rhs.iter_mut().zip(&self.ops.load) {
            *r += b;
        }
        self.factor.solve(&rhs)
    }
}

/// Robin + contact subproblem on subdomain 2.
pub struct PrimalSub2 {
    ops: PrimalOperators,
    alpha: f64,
    delta: f64,
    system: PenalizedSystem,
}

impl PrimalSub2 {
    pub fn into_ops(self) -> PrimalOperators {
        self.ops
    }

    pub fn new(ops: PrimalOperators, alpha: f64, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        if alpha <= 0.0 {
            return Err(Error::InvalidConfig("Robin parameter must be positive".into()));
        }
        let c = ops.contact()?;
        let w = c.weights.iter().map(|w| w / delta).collect();
        let system = PenalizedSystem::new(&ops.robin_matrix(alpha)?, SystemKind::Spd, c.functionals(), w)?;
        Ok(Self { ops, alpha, delta, system })
    }

    pub fn ops(&self) -> &PrimalOperators {
        &self.ops
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn solve(&mut self, g21: &TraceData, warm: Option<&[f64]>, params: &NewtonParams) -> Result<(Vec<f64>, NewtonStats)> {
        let mut rhs = self.ops.interface()?.load(g21)?;
        for (r, b) in rhs.iter_mut().zip(&self.ops.load) {
            *r += b;
        }
        self.system.solve(&rhs, warm, params)
    }
}

/// Transmission data that make the two Robin problems reproduce the
/// monolithic solution exactly (nodal interface rule only).
pub fn theorem31_split(
    global: &PrimalOperators,
    u_h: &[f64],
    ops1: &PrimalOperators,
    ops2: &PrimalOperators,
    alpha: f64,
    delta: f64,
) -> Result<(TraceData, TraceData)> {
    let i1 = ops1.interface()?;
    let i2 = ops2.interface()?;
    if !i1.quad.is_nodal() || !i2.quad.is_nodal() {
        return Err(Error::InvalidConfig("the exact split needs the nodal interface rule".into()));
    }
    let u1 = ops1.space.transfer_from(&global.space, u_h);
    let u2 = ops2.space.transfer_from(&global.space, u_h);
    let (r1, r2) = subdomain_residuals(ops1, &u1, ops2, &u2, delta)?;
    let mesh = global.space.mesh();
    let g = mesh.gamma_column();
    let n = i1.quad.len();
    let mut g12 = TraceData::zeros(TraceSide::G12, n);
    let mut g21 = TraceData::zeros(TraceSide::G21, n);
    for p in 0..n {
        let v = mesh.vertex(g, p);
        let (Some(d1), Some(d2)) = (ops1.space.vertex_dof(v), ops2.space.vertex_dof(v)) else { continue };
        let w = i1.quad.w[p];
        let uh = global.space.value_at(u_h, v);
        for l in 0..2 {
            // r1 = −r2 on γ up to round-off; using each side's own residual
            // makes the reproduction exact.
            g12.values[p][l] = alpha * uh[l] + r1[d1 + l] / w;
            g21.values[p][l] = alpha * uh[l] + r2[d2 + l] / w;
        }
    }
    Ok((g12, g21))
}

/// r1 = K1 u1 − b1 and r2 = K2 u2 + penalty(u2) − b2.
pub fn subdomain_residuals(
    ops1: &PrimalOperators,
    u1: &[f64],
    ops2: &PrimalOperators,
    u2: &[f64],
    delta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r1 = ops1.stiffness.mul_vec(u1);
    for (r, b) in r1.iter_mut().zip(&ops1.load) {
        *r -= b;
    }
    let mut r2 = ops2.stiffness.mul_vec(u2);
    let pen = ops2.contact()?.penalty_force(u2, delta);
    for ((r, b), p) in r2.iter_mut().zip(&ops2.load).zip(pen) {
        *r += p - b;
    }
    Ok((r1, r2))
}

/// Contact samples (y, u_c, σ_c) with σ_c from the penalty relation.
pub fn contact_trace_primal(ops: &PrimalOperators, u: &[f64], delta: f64) -> Result<Vec<(f64, f64, f64)>> {
    let c = ops.contact()?;
    Ok(c.y.iter().zip(c.normal_values(u)).map(|(&y, uc)| (y, uc, -uc.max(0.0) / delta)).collect())
}
