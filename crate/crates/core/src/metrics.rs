//! Relative error norms, contact traces and complementarity checks.
//!
//! Fields are passed as lists of pieces so that a reference on the whole
//! domain can be compared with a pair of subdomain fields. Each element is
//! evaluated with the first piece that owns it; elements owned by no
//! iterate piece count as a zero iterate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::MaterialField;
use crate::mixed::{element_matrices, MixedSpace, NS, NU};
use crate::primal::{element_mass, element_stiffness, PrimalSpace};

/// A stress/displacement field on one mixed space.
#[derive(Clone, Copy)]
pub struct MixedPiece<'a> {
    pub space: &'a MixedSpace,
    pub sigma: &'a [f64],
    pub u: &'a [f64],
}

/// A displacement field on one primal space.
#[derive(Clone, Copy)]
pub struct PrimalPiece<'a> {
    pub space: &'a PrimalSpace,
    pub u: &'a [f64],
}

/// Relative errors of an iterate against a reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Stress error in the A-norm (mixed) or energy error in the a-norm (primal).
    pub e_sigma: Option<f64>,
    pub e_u: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if den <= 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

fn quad_form<const N: usize>(m: &[[f64; N]; N], x: &[f64; N]) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let mut r = 0.0;
        for j in 0..N {
            r += m[i][j] * x[j];
        }
        s += x[i] * r;
    }
    s
}

fn check_mixed(pieces: &[MixedPiece]) -> Result<()> {
    for p in pieces {
        if p.sigma.len() != p.space.n_stress() || p.u.len() != p.space.n_disp() {
            return Err(Error::DimensionMismatch("mixed field does not match its space".into()));
        }
    }
    Ok(())
}

/// Relative (stress A-norm, displacement L²) errors in one sweep.
pub fn mixed_errors(reference: &[MixedPiece], iterate: &[MixedPiece], material: &MaterialField) -> Result<(f64, f64)> {
    check_mixed(reference)?;
    check_mixed(iterate)?;
    let (mut es, mut rs, mut eu, mut ru) = (0.0, 0.0, 0.0, 0.0);
    let mut seen = std::collections::HashSet::new();
    for r in reference {
        let mesh = r.space.mesh();
        for &t in r.space.triangles() {
            if !seen.insert(t) {
                continue;
            }
            let em = element_matrices(mesh, material, t);
            let sr = r.space.gather_stress(r.sigma, t);
            let ur = r.space.gather_disp(r.u, t);
            let (si, ui) = match iterate.iter().find(|p| p.space.contains_triangle(t)) {
                Some(p) => (p.space.gather_stress(p.sigma, t), p.space.gather_disp(p.u, t)),
                None => ([0.0; NS], [0.0; NU]),
            };
            let ds: [f64; NS] = std::array::from_fn(|k| sr[k] - si[k]);
            let du: [f64; NU] = std::array::from_fn(|k| ur[k] - ui[k]);
            es += quad_form(&em.mass, &ds);
            rs += quad_form(&em.mass, &sr);
            eu += quad_form(&em.disp_mass, &du);
            ru += quad_form(&em.disp_mass, &ur);
        }
    }
    Ok((ratio(es, rs)?, ratio(eu, ru)?))
}

/// ‖σ_ref − σ‖_A / ‖σ_ref‖_A
pub fn stress_error_a(reference: &[MixedPiece], iterate: &[MixedPiece], material: &MaterialField) -> Result<f64> {
    Ok(mixed_errors(reference, iterate, material)?.0)
}

/// ‖u_ref − u‖_{L²} / ‖u_ref‖_{L²} for mixed displacements.
pub fn displacement_error_l2(reference: &[MixedPiece], iterate: &[MixedPiece], material: &MaterialField) -> Result<f64> {
    Ok(mixed_errors(reference, iterate, material)?.1)
}

fn gather_primal(p: &PrimalPiece, c: usize) -> [f64; 8] {
    let dofs = p.space.cell_dofs(c);
    std::array::from_fn(|k| if dofs[k] == usize::MAX { 0.0 } else { p.u[dofs[k]] })
}

/// Relative (a-norm, L²) errors of primal displacements.
pub fn primal_errors(reference: &[PrimalPiece], iterate: &[PrimalPiece], material: &MaterialField) -> Result<(f64, f64)> {
    for p in reference.iter().chain(iterate) {
        if p.u.len() != p.space.n_dofs() {
            return Err(Error::DimensionMismatch("primal field does not match its space".into()));
        }
    }
    let (mut ea, mut ra, mut el, mut rl) = (0.0, 0.0, 0.0, 0.0);
    let mut seen = std::collections::HashSet::new();
    for r in reference {
        let me = element_mass(r.space.mesh().h());
        let cells = r.space.cells();
        let owners: Vec<Vec<usize>> = iterate.iter().map(|p| p.space.cells()).collect();
        for c in cells {
            if !seen.insert(c) {
                continue;
            }
            let ke = element_stiffness(material, c);
            let ur = gather_primal(r, c);
            let ui = iterate
                .iter()
                .zip(&owners)
                .find(|(_, cs)| cs.binary_search(&c).is_ok())
                .map(|(p, _)| gather_primal(p, c))
                .unwrap_or([0.0; 8]);
            let d: [f64; 8] = std::array::from_fn(|k| ur[k] - ui[k]);
            ea += quad_form(&ke, &d);
            ra += quad_form(&ke, &ur);
            for l in 0..2 {
                let dl: [f64; 4] = std::array::from_fn(|k| d[2 * k + l]);
                let rl_: [f64; 4] = std::array::from_fn(|k| ur[2 * k + l]);
                el += quad_form(&me, &dl);
                rl += quad_form(&me, &rl_);
            }
        }
    }
    Ok((ratio(ea, ra)?, ratio(el, rl)?))
}

/// One sample of the contact boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactSample {
    pub y: f64,
    pub u_c: f64,
    pub sigma_c: f64,
}

impl ContactSample {
    pub fn from_triples(v: &[(f64, f64, f64)]) -> Vec<Self> {
        v.iter().map(|&(y, u_c, sigma_c)| Self { y, u_c, sigma_c }).collect()
    }
}

/// Writes samples as CSV with columns `y,u_c,sigma_c`.
pub fn write_contact_csv(samples: &[ContactSample], mut w: impl Write) -> Result<()> {
    writeln!(w, "y,u_c,sigma_c")?;
    for s in samples {
        writeln!(w, "{:.12e},{:.12e},{:.12e}", s.y, s.u_c, s.sigma_c)?;
    }
    Ok(())
}

/// Sign and complementarity diagnostics of a contact trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Complementarity {
    pub max_abs_sigma: f64,
    pub max_abs_u: f64,
    /// max |σ_c u_c| / (max|σ_c| max|u_c|), zero when either field vanishes.
    pub product_ratio: f64,
    pub max_sigma: f64,
    pub max_u: f64,
}

impl Complementarity {
    pub fn of(samples: &[ContactSample]) -> Self {
        let fold = |f: fn(&ContactSample) -> f64| samples.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if samples.is_empty() {
            return Self::default();
        }
        let max_abs_sigma = fold(|s| s.sigma_c.abs());
        let max_abs_u = fold(|s| s.u_c.abs());
        let prod = fold(|s| (s.sigma_c * s.u_c).abs());
        let scale = max_abs_sigma * max_abs_u;
        Self {
            max_abs_sigma,
            max_abs_u,
            product_ratio: if scale > 0.0 { prod / scale } else { 0.0 },
            max_sigma: fold(|s| s.sigma_c),
            max_u: fold(|s| s.u_c),
        }
    }

    /// Whether the trace passes the given product tolerance, tension bound
    /// and penetration slack δ·max|σ_c|.
    pub fn holds(&self, product_tol: f64, sigma_tol: f64, delta: f64) -> bool {
        self.product_ratio <= product_tol && self.max_sigma <= sigma_tol && self.max_u <= delta * self.max_abs_sigma
    }
}
