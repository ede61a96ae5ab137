//! Cellwise heterogeneous isotropic elasticity coefficients.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TwoScaleMesh;

/// Young's modulus and Poisson ratio of one phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    #[serde(rename = "E")]
    pub e: f64,
    pub nu: f64,
}

impl Phase {
    pub const fn new(e: f64, nu: f64) -> Self {
        Self { e, nu }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.e > 0.0 && self.e.is_finite()) {
            return Err(Error::InvalidMaterial(format!("{what}: E must be positive, got {}", self.e)));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::InvalidMaterial(format!("{what}: Poisson ratio must lie in [0, 0.5), got {}", self.nu)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rectangle,
    /// A long thin rectangle; stored the same way, kept distinct for reporting.
    Channel,
}

/// Axis-aligned box [x0, x1] × [y0, y1] carrying its own phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    #[serde(flatten)]
    pub phase: Phase,
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Piecewise-constant modulus pattern. Subdomain 2 always takes `omega2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub background: Phase,
    #[serde(default)]
    pub shapes: Vec<Shape>,
    pub omega2: Phase,
}

const OMEGA2_PHASE: Phase = Phase::new(1.0, 0.35);

impl PatternSpec {
    pub fn uniform(p: Phase) -> Self {
        Self { background: p, shapes: vec![], omega2: p }
    }

    /// Channels plus inclusions standing in for the first test pattern.
    /// `stiff` is the inclusion phase, `matrix` the background.
    pub fn model1(stiff: Phase, matrix: Phase) -> Self {
        let boxes: [(ShapeKind, f64, f64, f64, f64); 7] = [
            (ShapeKind::Channel, 1.0 / 16.0, 7.0 / 8.0, 3.0 / 16.0, 1.0 / 4.0),
            (ShapeKind::Channel, 1.0 / 16.0, 7.0 / 8.0, 9.0 / 16.0, 5.0 / 8.0),
            (ShapeKind::Rectangle, 1.0 / 8.0, 1.0 / 4.0, 3.0 / 8.0, 7.0 / 16.0),
            (ShapeKind::Rectangle, 5.0 / 16.0, 3.0 / 8.0, 3.0 / 4.0, 13.0 / 16.0),
            (ShapeKind::Rectangle, 5.0 / 8.0, 11.0 / 16.0, 5.0 / 16.0, 3.0 / 8.0),
            (ShapeKind::Rectangle, 1.0 / 2.0, 9.0 / 16.0, 13.0 / 16.0, 7.0 / 8.0),
            (ShapeKind::Rectangle, 3.0 / 4.0, 13.0 / 16.0, 3.0 / 4.0, 13.0 / 16.0),
        ];
        Self::from_boxes(&boxes, stiff, matrix)
    }

    /// Vertical channels plus inclusions standing in for the second pattern.
    pub fn model2(stiff: Phase, matrix: Phase) -> Self {
        let boxes: [(ShapeKind, f64, f64, f64, f64); 7] = [
            (ShapeKind::Channel, 1.0 / 4.0, 5.0 / 16.0, 1.0 / 16.0, 15.0 / 16.0),
            (ShapeKind::Channel, 5.0 / 8.0, 11.0 / 16.0, 1.0 / 16.0, 15.0 / 16.0),
            (ShapeKind::Rectangle, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 8.0, 3.0 / 16.0),
            (ShapeKind::Rectangle, 7.0 / 16.0, 1.0 / 2.0, 1.0 / 4.0, 5.0 / 16.0),
            (ShapeKind::Rectangle, 7.0 / 16.0, 1.0 / 2.0, 11.0 / 16.0, 3.0 / 4.0),
            (ShapeKind::Rectangle, 13.0 / 16.0, 7.0 / 8.0, 3.0 / 8.0, 7.0 / 16.0),
            (ShapeKind::Rectangle, 13.0 / 16.0, 7.0 / 8.0, 13.0 / 16.0, 7.0 / 8.0),
        ];
        Self::from_boxes(&boxes, stiff, matrix)
    }

    fn from_boxes(boxes: &[(ShapeKind, f64, f64, f64, f64)], stiff: Phase, matrix: Phase) -> Self {
        Self {
            background: matrix,
            shapes: boxes
                .iter()
                .map(|&(kind, x0, x1, y0, y1)| Shape { kind, x0, x1, y0, y1, phase: stiff })
                .collect(),
            omega2: OMEGA2_PHASE,
        }
    }

    pub fn named(name: &str, stiff: Phase, matrix: Phase) -> Result<Self> {
        match name {
            "model1" => Ok(Self::model1(stiff, matrix)),
            "model2" => Ok(Self::model2(stiff, matrix)),
            _ => Err(Error::InvalidConfig(format!("unknown material model '{name}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.background.validate("background")?;
        self.omega2.validate("subdomain 2")?;
        for (k, s) in self.shapes.iter().enumerate() {
            s.phase.validate(&format!("shape {k}"))?;
            if !(s.x0 <= s.x1 && s.y0 <= s.y1) {
                return Err(Error::InvalidMaterial(format!("shape {k} has an empty box")));
            }
        }
        Ok(())
    }

    fn phase_at(&self, x: f64, y: f64) -> Phase {
        self.shapes.iter().rev().find(|s| s.contains(x, y)).map(|s| s.phase).unwrap_or(self.background)
    }
}

/// Plane-strain Lamé parameters from (E, ν).
pub fn lame_from_engineering(e: f64, nu: f64) -> Result<(f64, f64)> {
    Phase::new(e, nu).validate("phase")?;
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    Ok((lambda, mu))
}

/// Voigt stiffness in the (σ11, σ22, σ12) ↔ (ε11, ε22, ε12) convention.
pub fn stiffness_voigt(lambda: f64, mu: f64) -> [[f64; 3]; 3] {
    [[lambda + 2.0 * mu, lambda, 0.0], [lambda, lambda + 2.0 * mu, 0.0], [0.0, 0.0, 2.0 * mu]]
}

/// Inverse of [`stiffness_voigt`].
pub fn compliance_voigt(lambda: f64, mu: f64) -> [[f64; 3]; 3] {
    let a = lambda + 2.0 * mu;
    let det = a * a - lambda * lambda;
    [[a / det, -lambda / det, 0.0], [-lambda / det, a / det, 0.0], [0.0, 0.0, 1.0 / (2.0 * mu)]]
}

/// Per-fine-cell coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField {
    pub e: Vec<f64>,
    pub nu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Multiscale weight k̃ = (λ + 2μ) H⁻².
    pub ktilde: Vec<f64>,
}

impl MaterialField {
    pub fn build(mesh: &TwoScaleMesh, spec: &PatternSpec) -> Result<Self> {
        spec.validate()?;
        let n = mesh.n_cells();
        let mut f = Self {
            e: Vec::with_capacity(n),
            nu: Vec::with_capacity(n),
            lambda: Vec::with_capacity(n),
            mu: Vec::with_capacity(n),
            ktilde: Vec::with_capacity(n),
        };
        let hinv2 = 1.0 / (mesh.coarse_h() * mesh.coarse_h());
        for c in 0..n {
            let (x, y) = mesh.cell_centroid(c);
            let p = if mesh.cell_subdomain(c) == 2 { spec.omega2 } else { spec.phase_at(x, y) };
            let (l, m) = lame_from_engineering(p.e, p.nu)?;
            f.e.push(p.e);
            f.nu.push(p.nu);
            f.lambda.push(l);
            f.mu.push(m);
            f.ktilde.push((l + 2.0 * m) * hinv2);
        }
        Ok(f)
    }

    pub fn n_cells(&self) -> usize {
        self.e.len()
    }

    pub fn stiffness(&self, c: usize) -> [[f64; 3]; 3] {
        stiffness_voigt(self.lambda[c], self.mu[c])
    }

    pub fn compliance(&self, c: usize) -> [[f64; 3]; 3] {
        compliance_voigt(self.lambda[c], self.mu[c])
    }

    /// Cellwise CSV: cell, x, y, E, nu, lambda, mu.
    pub fn write_csv(&self, mesh: &TwoScaleMesh, mut w: impl Write) -> Result<()> {
        writeln!(w, "cell,x,y,E,nu,lambda,mu")?;
        for c in 0..self.n_cells() {
            let (x, y) = mesh.cell_centroid(c);
            writeln!(w, "{c},{x},{y},{},{},{},{}", self.e[c], self.nu[c], self.lambda[c], self.mu[c])?;
        }
        Ok(())
    }

    /// Bytes that identify the coefficients, for cache keys.
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 * self.n_cells());
        for c in 0..self.n_cells() {
            out.extend_from_slice(&self.lambda[c].to_le_bytes());
            out.extend_from_slice(&self.mu[c].to_le_bytes());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lame_examples() {
        let (l, m) = lame_from_engineering(1.0, 0.35).unwrap();
        assert_relative_eq!(l, 0.864198, epsilon = 1e-6);
        assert_relative_eq!(m, 0.370370, epsilon = 1e-6);
        let (l, m) = lame_from_engineering(1.0, 0.0).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(m, 0.5);
        let (l, m) = lame_from_engineering(1000.0, 0.49).unwrap();
        assert_relative_eq!(l, 16442.95, epsilon = 1e-2);
        assert_relative_eq!(m, 335.570, epsilon = 1e-3);
        assert!(lame_from_engineering(1.0, 0.5).is_err());
        assert!(lame_from_engineering(-1.0, 0.3).is_err());
    }

    #[test]
    fn compliance_examples() {
        let a = compliance_voigt(0.0, 0.5);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(a[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        let a = compliance_voigt(1.0, 1.0);
        let want = [[0.375, -0.125, 0.0], [-0.125, 0.375, 0.0], [0.0, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(a[i][j], want[i][j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn uniform_and_single_rectangle() {
        let mesh = TwoScaleMesh::new(4, 2).unwrap();
        let bg = Phase::new(1.0, 0.3);
        let f = MaterialField::build(&mesh, &PatternSpec::uniform(bg)).unwrap();
        assert!(f.e.iter().all(|&e| e == 1.0));
        let spec = PatternSpec {
            background: bg,
            shapes: vec![Shape { kind: ShapeKind::Rectangle, x0: 0.0, x1: 0.5, y0: 0.0, y1: 0.5, phase: Phase::new(1e3, 0.3) }],
            omega2: bg,
        };
        let f = MaterialField::build(&mesh, &spec).unwrap();
        for c in 0..mesh.n_cells() {
            let (x, y) = mesh.cell_centroid(c);
            assert_eq!(f.e[c], if x < 0.5 && y < 0.5 { 1e3 } else { 1.0 });
        }
    }

    #[test]
    fn contrast_and_subdomain_override() {
        let mesh = TwoScaleMesh::new(16, 4).unwrap();
        let spec = PatternSpec::model1(Phase::new(1e3, 0.35), Phase::new(1.0, 0.35));
        let f = MaterialField::build(&mesh, &spec).unwrap();
        let om1: Vec<f64> = (0..mesh.n_cells()).filter(|&c| mesh.cell_subdomain(c) == 1).map(|c| f.e[c]).collect();
        let (lo, hi) = om1.iter().fold((f64::MAX, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
        assert_relative_eq!(hi / lo, 1e3);
        for c in 0..mesh.n_cells() {
            if mesh.cell_subdomain(c) == 2 {
                assert_eq!((f.e[c], f.nu[c]), (1.0, 0.35));
            }
        }
    }

    #[test]
    fn ktilde_scales_with_coarse_size() {
        let p = PatternSpec::uniform(Phase::new(2.0, 0.3));
        let a = MaterialField::build(&TwoScaleMesh::new(4, 4).unwrap(), &p).unwrap();
        let b = MaterialField::build(&TwoScaleMesh::new(8, 2).unwrap(), &p).unwrap();
        assert_relative_eq!(b.ktilde[0], 4.0 * a.ktilde[0], max_relative = 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn compliance_inverts_stiffness(e in 1e-4f64..1e4, nu in 0.0f64..0.4999) {
                let (l, m) = lame_from_engineering(e, nu).unwrap();
                let a = compliance_voigt(l, m);
                let c = stiffness_voigt(l, m);
                for i in 0..3 {
                    for j in 0..3 {
                        let s: f64 = (0..3).map(|k| a[i][k] * c[k][j]).sum();
                        let id = if i == j { 1.0 } else { 0.0 };
                        prop_assert!((s - id).abs() < 1e-12);
                        prop_assert!((a[i][j] - a[j][i]).abs() == 0.0);
                    }
                }
                // positive definite with eigenvalues bounded by 1/(2μ)
                let ev = [1.0 / (2.0 * (l + m)), 1.0 / (2.0 * m), 1.0 / (2.0 * m)];
                for v in ev { prop_assert!(v > 0.0 && v <= 1.0 / (2.0 * m) * (1.0 + 1e-12)); }
                prop_assert!((a[0][0] - a[0][1] - 1.0 / (2.0 * m)).abs() <= 1e-9 / m);
            }
        }
    }
}
