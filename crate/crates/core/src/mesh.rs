//! Two-scale structured grid on the unit square.
//!
//! The coarse grid has `n_coarse` cells per direction and each coarse cell is
//! split into `refine × refine` fine quads. Subdomain 1 is every column left
//! of the last coarse column; subdomain 2 is that last column and carries the
//! contact boundary x = 1. Fine vertex (i, j) sits at (i h, j h) and has
//! index `j (n_fine + 1) + i`; fine cell (i, j) has index `j n_fine + i`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::gauss_unit;

/// Which part of the domain an operator lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    Omega,
    Omega1,
    Omega2,
}

/// Boundary classification of a fine vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    Interior,
    /// x = 0, y = 0 or y = 1 (corners included).
    Dirichlet,
    /// x = 1 with 0 < y < 1.
    Contact,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TwoScaleMesh {
    n_coarse: usize,
    refine: usize,
    n_fine: usize,
}

impl TwoScaleMesh {
    pub fn new(n_coarse: usize, refine: usize) -> Result<Self> {
        if n_coarse < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 coarse cells per direction, got {n_coarse}"
            )));
        }
        if refine < 2 {
            return Err(Error::InvalidMesh(format!("refinement factor must be >= 2, got {refine}")));
        }
        Ok(Self { n_coarse, refine, n_fine: n_coarse * refine })
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }
    pub fn refine(&self) -> usize {
        self.refine
    }
    pub fn n_fine(&self) -> usize {
        self.n_fine
    }
    /// Fine mesh size h.
    pub fn h(&self) -> f64 {
        1.0 / self.n_fine as f64
    }
    /// Coarse mesh size H.
    pub fn coarse_h(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }
    pub fn n_vertices(&self) -> usize {
        (self.n_fine + 1) * (self.n_fine + 1)
    }
    pub fn n_cells(&self) -> usize {
        self.n_fine * self.n_fine
    }
    #[inline]
    pub fn vertex(&self, i: usize, j: usize) -> usize {
        j * (self.n_fine + 1) + i
    }
    #[inline]
    pub fn vertex_ij(&self, v: usize) -> (usize, usize) {
        (v % (self.n_fine + 1), v / (self.n_fine + 1))
    }
    pub fn vertex_coords(&self, v: usize) -> (f64, f64) {
        let (i, j) = self.vertex_ij(v);
        (i as f64 * self.h(), j as f64 * self.h())
    }
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.n_fine + i
    }
    #[inline]
    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.n_fine, c / self.n_fine)
    }
    pub fn cell_centroid(&self, c: usize) -> (f64, f64) {
        let (i, j) = self.cell_ij(c);
        ((i as f64 + 0.5) * self.h(), (j as f64 + 0.5) * self.h())
    }

    /// Fine vertex column index of the interface x = 1 − H.
    pub fn gamma_column(&self) -> usize {
        self.n_fine - self.refine
    }

    /// Subdomain (1 or 2) of a fine cell.
    pub fn cell_subdomain(&self, c: usize) -> u8 {
        if self.cell_ij(c).0 < self.gamma_column() {
            1
        } else {
            2
        }
    }

    /// Fine cell column range [lo, hi) of a region.
    pub fn cell_columns(&self, r: Region) -> (usize, usize) {
        match r {
            Region::Omega => (0, self.n_fine),
            Region::Omega1 => (0, self.gamma_column()),
            Region::Omega2 => (self.gamma_column(), self.n_fine),
        }
    }

    /// Fine cells of a region in index order.
    pub fn region_cells(&self, r: Region) -> Vec<usize> {
        let (lo, hi) = self.cell_columns(r);
        let mut out = Vec::with_capacity((hi - lo) * self.n_fine);
        for j in 0..self.n_fine {
            for i in lo..hi {
                out.push(self.cell(i, j));
            }
        }
        out
    }

    pub fn boundary_tag(&self, v: usize) -> BoundaryTag {
        let (i, j) = self.vertex_ij(v);
        let n = self.n_fine;
        if i == 0 || j == 0 || j == n {
            BoundaryTag::Dirichlet
        } else if i == n {
            BoundaryTag::Contact
        } else {
            BoundaryTag::Interior
        }
    }

    /// Interface vertices ordered by y.
    pub fn gamma_nodes(&self) -> Vec<usize> {
        let g = self.gamma_column();
        (0..=self.n_fine).map(|j| self.vertex(g, j)).collect()
    }

    /// Contact vertices (x = 1, interior in y) ordered by y.
    pub fn contact_nodes(&self) -> Vec<usize> {
        (1..self.n_fine).map(|j| self.vertex(self.n_fine, j)).collect()
    }

    /// Number of coarse columns in subdomain 1.
    pub fn omega1_coarse_columns(&self) -> usize {
        self.n_coarse - 1
    }

    /// Number of coarse cells in subdomain 1. Coarse cell (I, J) has index
    /// `J (n_coarse − 1) + I`.
    pub fn n_coarse_omega1(&self) -> usize {
        self.omega1_coarse_columns() * self.n_coarse
    }

    pub fn coarse_ij(&self, k: usize) -> (usize, usize) {
        let c = self.omega1_coarse_columns();
        (k % c, k / c)
    }

    pub fn coarse_index(&self, ci: usize, cj: usize) -> usize {
        cj * self.omega1_coarse_columns() + ci
    }

    /// Coarse cell (in subdomain-1 numbering) containing a fine cell of Ω1.
    pub fn coarse_of_cell(&self, c: usize) -> Option<usize> {
        let (i, j) = self.cell_ij(c);
        if i >= self.gamma_column() {
            return None;
        }
        Some(self.coarse_index(i / self.refine, j / self.refine))
    }

    /// Fine cells inside a rectangle of coarse cells (inclusive bounds).
    pub fn fine_cells_in(&self, b: &CoarseBlock) -> Vec<usize> {
        let r = self.refine;
        let mut out = Vec::with_capacity((b.i1 - b.i0 + 1) * (b.j1 - b.j0 + 1) * r * r);
        for j in b.j0 * r..(b.j1 + 1) * r {
            for i in b.i0 * r..(b.i1 + 1) * r {
                out.push(self.cell(i, j));
            }
        }
        out
    }

    /// Does the coarse cell share an edge with the interface?
    pub fn coarse_touches_gamma(&self, k: usize) -> bool {
        self.coarse_ij(k).0 + 1 == self.omega1_coarse_columns()
    }

    /// m-layer oversampling of coarse cell `k` (subdomain-1 numbering),
    /// clipped to subdomain 1.
    pub fn oversample(&self, k: usize, m: usize) -> Result<Oversample> {
        if k >= self.n_coarse_omega1() {
            return Err(Error::InvalidMesh(format!("coarse cell {k} does not lie in subdomain 1")));
        }
        let (ci, cj) = self.coarse_ij(k);
        let block = CoarseBlock {
            i0: ci.saturating_sub(m),
            i1: (ci + m).min(self.omega1_coarse_columns() - 1),
            j0: cj.saturating_sub(m),
            j1: (cj + m).min(self.n_coarse - 1),
        };
        let mut members = Vec::new();
        for j in block.j0..=block.j1 {
            for i in block.i0..=block.i1 {
                members.push(self.coarse_index(i, j));
            }
        }
        Ok(Oversample { center: k, layers: m, block, members })
    }

    pub fn interface_quadrature(&self, rule: InterfaceRule) -> InterfaceQuadrature {
        InterfaceQuadrature::new(self, rule)
    }

    pub fn summary(&self) -> MeshSummary {
        MeshSummary {
            n_coarse: self.n_coarse,
            refine: self.refine,
            n_fine: self.n_fine,
            coarse_h: self.coarse_h(),
            h: self.h(),
            n_vertices: self.n_vertices(),
            n_cells: self.n_cells(),
            n_triangles: 2 * self.n_cells(),
            n_coarse_cells: self.n_coarse * self.n_coarse,
            n_coarse_omega1: self.n_coarse_omega1(),
            interface_x: self.gamma_column() as f64 * self.h(),
            n_interface_nodes: self.n_fine + 1,
            n_contact_nodes: self.n_fine - 1,
            dirichlet: "x=0, y=0, y=1".into(),
            contact: "x=1".into(),
        }
    }
}

/// Inclusive rectangle of coarse cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CoarseBlock {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl CoarseBlock {
    pub fn contains_coarse(&self, ci: usize, cj: usize) -> bool {
        (self.i0..=self.i1).contains(&ci) && (self.j0..=self.j1).contains(&cj)
    }

    pub fn contains_block(&self, o: &CoarseBlock) -> bool {
        self.i0 <= o.i0 && o.i1 <= self.i1 && self.j0 <= o.j0 && o.j1 <= self.j1
    }

    /// Fine cell (i, j) inside this block?
    pub fn contains_fine(&self, refine: usize, i: usize, j: usize) -> bool {
        self.contains_coarse(i / refine, j / refine)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Oversample {
    pub center: usize,
    pub layers: usize,
    pub block: CoarseBlock,
    /// Member coarse cells in index order.
    pub members: Vec<usize>,
}

/// Interface quadrature rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceRule {
    /// Closed trapezoid rule on the fine interface nodes.
    NewtonCotes,
    /// n-point Gauss per fine segment.
    Gauss(usize),
}

/// Sample points on the interface with weights. Each point also records
/// which fine segments its weight comes from, so the rule can be restricted
/// to a union of segments.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceQuadrature {
    pub rule: InterfaceRule,
    /// y coordinate of each point.
    pub y: Vec<f64>,
    /// Full weight of each point.
    pub w: Vec<f64>,
    /// Location as (segment, t) with t ∈ [0, 1] along the segment.
    pub loc: Vec<(usize, f64)>,
    /// (segment, weight share) contributions.
    pub parts: Vec<Vec<(usize, f64)>>,
    h: f64,
    n_seg: usize,
}

impl InterfaceQuadrature {
    fn new(mesh: &TwoScaleMesh, rule: InterfaceRule) -> Self {
        let n = mesh.n_fine();
        let h = mesh.h();
        let (mut y, mut w, mut loc, mut parts) = (vec![], vec![], vec![], vec![]);
        match rule {
            InterfaceRule::NewtonCotes => {
                for j in 0..=n {
                    y.push(j as f64 * h);
                    let mut p = vec![];
                    if j > 0 {
                        p.push((j - 1, 0.5 * h));
                    }
                    if j < n {
                        p.push((j, 0.5 * h));
                    }
                    w.push(p.iter().map(|q| q.1).sum());
                    parts.push(p);
                    loc.push(if j < n { (j, 0.0) } else { (n - 1, 1.0) });
                }
            }
            InterfaceRule::Gauss(k) => {
                let (x, ww) = gauss_unit(k.max(1));
                for s in 0..n {
                    for q in 0..x.len() {
                        y.push((s as f64 + x[q]) * h);
                        w.push(ww[q] * h);
                        loc.push((s, x[q]));
                        parts.push(vec![(s, ww[q] * h)]);
                    }
                }
            }
        }
        Self { rule, y, w, loc, parts, h, n_seg: n }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn is_nodal(&self) -> bool {
        matches!(self.rule, InterfaceRule::NewtonCotes)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_segments(&self) -> usize {
        self.n_seg
    }

    /// Weights restricted to fine segments in [s0, s1).
    pub fn restricted_weights(&self, s0: usize, s1: usize) -> Vec<f64> {
        self.parts
            .iter()
            .map(|p| p.iter().filter(|(s, _)| (s0..s1).contains(s)).map(|(_, w)| w).sum())
            .collect()
    }

    /// ∫* f over the interface.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.y.iter().zip(&self.w).map(|(y, w)| w * f(*y)).sum()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshSummary {
    pub n_coarse: usize,
    pub refine: usize,
    pub n_fine: usize,
    pub coarse_h: f64,
    pub h: f64,
    pub n_vertices: usize,
    pub n_cells: usize,
    pub n_triangles: usize,
    pub n_coarse_cells: usize,
    pub n_coarse_omega1: usize,
    pub interface_x: f64,
    pub n_interface_nodes: usize,
    pub n_contact_nodes: usize,
    pub dirichlet: String,
    pub contact: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sizes_for_paper_meshes() {
        let m = TwoScaleMesh::new(16, 4).unwrap();
        assert_eq!(m.coarse_h(), 1.0 / 16.0);
        assert_eq!(m.h(), 1.0 / 64.0);
        assert_eq!(m.gamma_nodes().len(), 65);
        let (x, _) = m.vertex_coords(m.gamma_nodes()[0]);
        assert_relative_eq!(x, 15.0 / 16.0);
        let m = TwoScaleMesh::new(16, 8).unwrap();
        assert_eq!(m.h(), 1.0 / 128.0);
        let m = TwoScaleMesh::new(4, 2).unwrap();
        assert_eq!(m.n_coarse() * m.n_coarse(), 16);
        assert_eq!(m.n_cells(), 64);
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(TwoScaleMesh::new(0, 4).is_err());
        assert!(TwoScaleMesh::new(8, 1).is_err());
        assert!(TwoScaleMesh::new(8, 0).is_err());
    }

    #[test]
    fn cells_partition_domain() {
        let m = TwoScaleMesh::new(4, 3).unwrap();
        let c1 = m.region_cells(Region::Omega1);
        let c2 = m.region_cells(Region::Omega2);
        assert_eq!(c1.len() + c2.len(), m.n_cells());
        assert!(c1.iter().all(|&c| m.cell_subdomain(c) == 1));
        assert!(c2.iter().all(|&c| m.cell_subdomain(c) == 2));
        let area: f64 = (0..m.n_cells()).map(|_| m.h() * m.h()).sum();
        assert_relative_eq!(area, 1.0, epsilon = 1e-14);
        // every Ω1 fine cell lies in exactly one coarse cell
        let mut count = vec![0; m.n_coarse_omega1()];
        for &c in &c1 {
            count[m.coarse_of_cell(c).unwrap()] += 1;
        }
        assert!(count.iter().all(|&k| k == 9));
    }

    #[test]
    fn boundary_tags() {
        let m = TwoScaleMesh::new(4, 2).unwrap();
        let n = m.n_fine();
        assert_eq!(m.boundary_tag(m.vertex(0, 3)), BoundaryTag::Dirichlet);
        assert_eq!(m.boundary_tag(m.vertex(n, 0)), BoundaryTag::Dirichlet);
        assert_eq!(m.boundary_tag(m.vertex(n, 3)), BoundaryTag::Contact);
        assert_eq!(m.boundary_tag(m.vertex(3, 3)), BoundaryTag::Interior);
        assert_eq!(m.contact_nodes().len(), n - 1);
    }

    #[test]
    fn oversampling_examples() {
        let m = TwoScaleMesh::new(8, 2).unwrap();
        let k = m.coarse_index(3, 3);
        assert_eq!(m.oversample(k, 0).unwrap().members, vec![k]);
        assert_eq!(m.oversample(k, 1).unwrap().members.len(), 9);
        assert_eq!(m.oversample(m.coarse_index(0, 0), 1).unwrap().members.len(), 4);
        // next to the interface: clipped at the last Ω1 column
        let o = m.oversample(m.coarse_index(6, 4), 2).unwrap();
        assert_eq!((o.block.i0, o.block.i1), (4, 6));
        assert_eq!(o.members.len(), 15);
        assert!(m.oversample(m.n_coarse_omega1(), 1).is_err());
    }

    #[test]
    fn trapezoid_weights() {
        let m = TwoScaleMesh::new(2, 2).unwrap();
        let q = m.interface_quadrature(InterfaceRule::NewtonCotes);
        assert_eq!(q.w, vec![0.125, 0.25, 0.25, 0.25, 0.125]);
        let m = TwoScaleMesh::new(16, 4).unwrap();
        let q = m.interface_quadrature(InterfaceRule::NewtonCotes);
        assert_relative_eq!(q.integrate(|y| y), 0.5, epsilon = 1e-15);
        let g = m.interface_quadrature(InterfaceRule::Gauss(2));
        assert_relative_eq!(g.integrate(|_| 1.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(g.integrate(|y| y * y * y), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn restricted_weights_split_corners() {
        let m = TwoScaleMesh::new(4, 2).unwrap();
        let q = m.interface_quadrature(InterfaceRule::NewtonCotes);
        let w = q.restricted_weights(0, 2);
        assert_eq!(w[0], q.h() / 2.0);
        assert_eq!(w[1], q.h());
        assert_eq!(w[2], q.h() / 2.0);
        assert_eq!(w[3], 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weights_sum_to_one(nc in 2usize..12, r in 2usize..6, k in 1usize..5) {
                let m = TwoScaleMesh::new(nc, r).unwrap();
                for rule in [InterfaceRule::NewtonCotes, InterfaceRule::Gauss(k)] {
                    let q = m.interface_quadrature(rule);
                    prop_assert!((q.w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                    // linears are integrated exactly
                    prop_assert!((q.integrate(|y| 3.0 * y - 1.0) - 0.5).abs() < 1e-13);
                    // per-segment restriction is a partition
                    let mut acc = vec![0.0; q.len()];
                    for s in 0..q.n_segments() {
                        for (a, b) in acc.iter_mut().zip(q.restricted_weights(s, s + 1)) { *a += b; }
                    }
                    for (a, b) in acc.iter().zip(&q.w) { prop_assert!((a - b).abs() < 1e-15); }
                }
            }

            #[test]
            fn oversample_monotone(nc in 3usize..10, m in 0usize..5, seed in 0usize..1000) {
                let mesh = TwoScaleMesh::new(nc, 2).unwrap();
                let k = seed % mesh.n_coarse_omega1();
                let a = mesh.oversample(k, m).unwrap();
                let b = mesh.oversample(k, m + 1).unwrap();
                prop_assert!(b.block.contains_block(&a.block));
                prop_assert!(a.members.iter().all(|x| b.members.contains(x)));
            }
        }
    }
}
