//! Lowest-order Arnold–Winther element on the two triangle shapes of a
//! structured SW–NE split.
//!
//! Everything is computed once in cell-centred coordinates p = (x − x_c)/h
//! with the cell mapped to [−½, ½]². Because every triangle of a given kind
//! is a scaled translate of the reference one and all degrees of freedom are
//! scale-free (point values, edge averages, cell means), the reference basis
//! serves every cell and every h.

use crate::linalg::{dense_inverse, DenseMatrix};
use crate::quadrature::{gauss_legendre, triangle_rule};

/// Number of stress basis functions per triangle.
pub const NS: usize = 24;
/// Number of displacement basis functions per triangle.
pub const NU: usize = 6;

/// Square corners in cell-centred coordinates.
pub const SW: [f64; 2] = [-0.5, -0.5];
pub const SE: [f64; 2] = [0.5, -0.5];
pub const NE: [f64; 2] = [0.5, 0.5];
pub const NW: [f64; 2] = [-0.5, 0.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TriKind {
    /// SW, SE, NE
    Lower,
    /// SW, NE, NW
    Upper,
}

/// Corner of the square, used to map local vertices to mesh vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corner {
    Sw,
    Se,
    Ne,
    Nw,
}

impl Corner {
    pub fn offset(self) -> (usize, usize) {
        match self {
            Corner::Sw => (0, 0),
            Corner::Se => (1, 0),
            Corner::Ne => (1, 1),
            Corner::Nw => (0, 1),
        }
    }
    pub fn coords(self) -> [f64; 2] {
        match self {
            Corner::Sw => SW,
            Corner::Se => SE,
            Corner::Ne => NE,
            Corner::Nw => NW,
        }
    }
}

/// Which edge of the cell an element edge is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeSlot {
    Bottom,
    Right,
    Top,
    Left,
    Diagonal,
}

impl TriKind {
    pub fn corners(self) -> [Corner; 3] {
        match self {
            TriKind::Lower => [Corner::Sw, Corner::Se, Corner::Ne],
            TriKind::Upper => [Corner::Sw, Corner::Ne, Corner::Nw],
        }
    }

    /// Edges as (slot, start corner, end corner), oriented from the lower to
    /// the higher global vertex number.
    pub fn edges(self) -> [(EdgeSlot, Corner, Corner); 3] {
        match self {
            TriKind::Lower => [
                (EdgeSlot::Bottom, Corner::Sw, Corner::Se),
                (EdgeSlot::Right, Corner::Se, Corner::Ne),
                (EdgeSlot::Diagonal, Corner::Sw, Corner::Ne),
            ],
            TriKind::Upper => [
                (EdgeSlot::Diagonal, Corner::Sw, Corner::Ne),
                (EdgeSlot::Top, Corner::Nw, Corner::Ne),
                (EdgeSlot::Left, Corner::Sw, Corner::Nw),
            ],
        }
    }
}

/// Unit tangent and normal n = (t_y, −t_x) of an oriented edge.
pub fn edge_frame(a: [f64; 2], b: [f64; 2]) -> ([f64; 2], [f64; 2], f64) {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len = d[0].hypot(d[1]);
    let t = [d[0] / len, d[1] / len];
    (t, [t[1], -t[0]], len)
}

const NMONO: usize = 10;

fn monomials(p: [f64; 2]) -> [f64; NMONO] {
    let (x, y) = (p[0], p[1]);
    [1.0, x, y, x * x, x * y, y * y, x * x * x, x * x * y, x * y * y, y * y * y]
}

fn monomials_dx(p: [f64; 2]) -> [f64; NMONO] {
    let (x, y) = (p[0], p[1]);
    [0.0, 1.0, 0.0, 2.0 * x, y, 0.0, 3.0 * x * x, 2.0 * x * y, y * y, 0.0]
}

fn monomials_dy(p: [f64; 2]) -> [f64; NMONO] {
    let (x, y) = (p[0], p[1]);
    [0.0, 0.0, 1.0, 0.0, x, 2.0 * y, 0.0, x * x, 2.0 * x * y, 3.0 * y * y]
}

/// A point of an element quadrature rule in cell-centred coordinates;
/// `w` already includes the Jacobian (reference area ½).
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub p: [f64; 2],
    pub w: f64,
}

/// Reference basis of one triangle kind with precomputed element tables.
#[derive(Clone, Debug)]
pub struct AwReference {
    pub kind: TriKind,
    /// coefficient of (component c, monomial m) in basis j: coef[j][c * 10 + m]
    coef: Vec<[f64; 3 * NMONO]>,
    pub quad: Vec<QuadPoint>,
    /// component-pair mass tables ∫ φ_{i,a} φ_{j,b} dp for the Voigt pairs
    /// (a, b) in PAIRS order
    pub comp_mass: Vec<[[f64; NS]; NS]>,
    /// ∫ div_p φ_j · v_k dp, with v_k the displacement basis
    pub div: [[f64; NS]; NU],
    /// ∫ v_k · v_l dp
    pub disp_mass: [[f64; NU]; NU],
}

/// Voigt component pairs (a, b) with a ≤ b used in the mass tables.
pub const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

impl AwReference {
    pub fn new(kind: TriKind) -> Self {
        let corners = kind.corners().map(|c| c.coords());
        let mut quad = Vec::new();
        let area2 = {
            let (a, b, c) = (corners[0], corners[1], corners[2]);
            ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
        };
        for (r, s, w) in triangle_rule(4) {
            let p = [
                corners[0][0] + r * (corners[1][0] - corners[0][0]) + s * (corners[2][0] - corners[0][0]),
                corners[0][1] + r * (corners[1][1] - corners[0][1]) + s * (corners[2][1] - corners[0][1]),
            ];
            quad.push(QuadPoint { p, w: w * area2 });
        }
        let area: f64 = 0.5 * area2;

        // Rows: 24 functionals + 6 quadratic-divergence constraints.
        let mut l = DenseMatrix::<f64>::zeros(30, 30);
        let mut row = 0;
        for v in corners {
            let m = monomials(v);
            for c in 0..3 {
                for k in 0..NMONO {
                    l[(row, c * NMONO + k)] = m[k];
                }
                row += 1;
            }
        }
        let (gx, gw) = gauss_legendre(4);
        for (_, a, b) in kind.edges() {
            let (a, b) = (a.coords(), b.coords());
            let (_, n, _) = edge_frame(a, b);
            for comp in 0..2 {
                for deg in 0..2 {
                    for q in 0..gx.len() {
                        let s = gx[q];
                        let pt = [0.5 * (a[0] + b[0]) + 0.5 * s * (b[0] - a[0]), 0.5 * (a[1] + b[1]) + 0.5 * s * (b[1] - a[1])];
                        let m = monomials(pt);
                        let pk = if deg == 0 { 1.0 } else { s };
                        // (τn)_comp = Σ_d τ_{comp,d} n_d, Voigt index of (comp, d)
                        for d in 0..2 {
                            let vi = voigt_index(comp, d);
                            for k in 0..NMONO {
                                l[(row, vi * NMONO + k)] += 0.5 * gw[q] * pk * n[d] * m[k];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        for c in 0..3 {
            for qp in &quad {
                let m = monomials(qp.p);
                for k in 0..NMONO {
                    l[(row, c * NMONO + k)] += qp.w * m[k] / area;
                }
            }
            row += 1;
        }
        // Quadratic part of div τ: columns of the cubic monomials.
        // div_x = ∂x τ11 + ∂y τ12, div_y = ∂x τ12 + ∂y τ22
        // cubic indices 6:x³ 7:x²y 8:xy² 9:y³
        let c11 = 0;
        let c22 = NMONO;
        let c12 = 2 * NMONO;
        for (first, second) in [(c11, c12), (c12, c22)] {
            // x² coefficient: 3 a_first[x³] + a_second[x²y]
            l[(row, first + 6)] = 3.0;
            l[(row, second + 7)] = 1.0;
            row += 1;
            // xy: 2 a_first[x²y] + 2 a_second[xy²]
            l[(row, first + 7)] = 2.0;
            l[(row, second + 8)] = 2.0;
            row += 1;
            // y²: a_first[xy²] + 3 a_second[y³]
            l[(row, first + 8)] = 1.0;
            l[(row, second + 9)] = 3.0;
            row += 1;
        }
        debug_assert_eq!(row, 30);
        let inv = dense_inverse(l.as_ref()).expect("Arnold–Winther moment matrix is invertible");
        let coef: Vec<[f64; 30]> = (0..NS)
            .map(|j| {
                let mut c = [0.0; 30];
                for (i, ci) in c.iter_mut().enumerate() {
                    *ci = inv[(i, j)];
                }
                c
            })
            .collect();

        let mut me = Self {
            kind,
            coef,
            quad,
            comp_mass: vec![[[0.0; NS]; NS]; PAIRS.len()],
            div: [[0.0; NS]; NU],
            disp_mass: [[0.0; NU]; NU],
        };
        let quad = me.quad.clone();
        for qp in &quad {
            let vals = me.eval(qp.p);
            let divs = me.eval_div(qp.p);
            let vb = disp_basis(qp.p);
            for (pi, &(a, b)) in PAIRS.iter().enumerate() {
                for i in 0..NS {
                    for j in 0..NS {
                        me.comp_mass[pi][i][j] += qp.w * vals[i][a] * vals[j][b];
                    }
                }
            }
            for k in 0..NU {
                for j in 0..NS {
                    me.div[k][j] += qp.w * (divs[j][0] * vb[k][0] + divs[j][1] * vb[k][1]);
                }
                for m in 0..NU {
                    me.disp_mass[k][m] += qp.w * (vb[k][0] * vb[m][0] + vb[k][1] * vb[m][1]);
                }
            }
        }
        // drop round-off so assembled patterns stay clean
        let chop = |v: &mut f64| {
            if v.abs() < 1e-13 {
                *v = 0.0
            }
        };
        me.comp_mass.iter_mut().flatten().flatten().for_each(chop);
        me.div.iter_mut().flatten().for_each(chop);
        me.disp_mass.iter_mut().flatten().for_each(chop);
        me
    }

    /// Voigt values (σ11, σ22, σ12) of every basis function at p.
    pub fn eval(&self, p: [f64; 2]) -> [[f64; 3]; NS] {
        let m = monomials(p);
        let mut out = [[0.0; 3]; NS];
        for (j, c) in self.coef.iter().enumerate() {
            for comp in 0..3 {
                out[j][comp] = (0..NMONO).map(|k| c[comp * NMONO + k] * m[k]).sum();
            }
        }
        out
    }

    /// Divergence in cell-centred coordinates (divide by h for physical).
    pub fn eval_div(&self, p: [f64; 2]) -> [[f64; 2]; NS] {
        let dx = monomials_dx(p);
        let dy = monomials_dy(p);
        let mut out = [[0.0; 2]; NS];
        for (j, c) in self.coef.iter().enumerate() {
            let d = |comp: usize, g: &[f64; NMONO]| -> f64 { (0..NMONO).map(|k| c[comp * NMONO + k] * g[k]).sum() };
            out[j] = [d(0, &dx) + d(2, &dy), d(2, &dx) + d(1, &dy)];
        }
        out
    }

    /// Traction τ·n of every basis function at p.
    pub fn traction(&self, p: [f64; 2], n: [f64; 2]) -> [[f64; 2]; NS] {
        let v = self.eval(p);
        let mut out = [[0.0; 2]; NS];
        for j in 0..NS {
            out[j] = [v[j][0] * n[0] + v[j][2] * n[1], v[j][2] * n[0] + v[j][1] * n[1]];
        }
        out
    }

    /// Local dofs that can carry traction on local edge e: the two end
    /// vertices and the edge moments.
    pub fn edge_dofs(&self, e: usize) -> [usize; 10] {
        let (_, a, b) = self.kind.edges()[e];
        let corners = self.kind.corners();
        let ia = corners.iter().position(|c| *c == a).unwrap();
        let ib = corners.iter().position(|c| *c == b).unwrap();
        let mut out = [0; 10];
        for c in 0..3 {
            out[c] = 3 * ia + c;
            out[3 + c] = 3 * ib + c;
        }
        for k in 0..4 {
            out[6 + k] = 9 + 4 * e + k;
        }
        out
    }
}

/// Voigt index of tensor entry (i, j): 0 ↦ 11, 1 ↦ 22, 2 ↦ 12.
pub fn voigt_index(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 0) => 0,
        (1, 1) => 1,
        _ => 2,
    }
}

/// Discontinuous P1 vector basis (1, p_x, p_y) ⊗ (e_x, e_y).
pub fn disp_basis(p: [f64; 2]) -> [[f64; 2]; NU] {
    let s = [1.0, p[0], p[1]];
    let mut out = [[0.0; 2]; NU];
    for l in 0..2 {
        for m in 0..3 {
            out[3 * l + m][l] = s[m];
        }
    }
    out
}

/// Both references, built once per process.
pub fn references() -> &'static [AwReference; 2] {
    use std::sync::OnceLock;
    static REFS: OnceLock<[AwReference; 2]> = OnceLock::new();
    REFS.get_or_init(|| [AwReference::new(TriKind::Lower), AwReference::new(TriKind::Upper)])
}

pub fn reference(kind: TriKind) -> &'static AwReference {
    &references()[match kind {
        TriKind::Lower => 0,
        TriKind::Upper => 1,
    }]
}
