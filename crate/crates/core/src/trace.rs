//! Interface transmission data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::InterfaceQuadrature;

/// Which Robin problem the data feeds: `G12` enters the subdomain-1
/// problem, `G21` the subdomain-2 problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceSide {
    G12,
    G21,
}

/// Vector values at the interface sample points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceData {
    pub side: TraceSide,
    pub values: Vec<[f64; 2]>,
}

impl TraceData {
    pub fn zeros(side: TraceSide, n: usize) -> Self {
        Self { side, values: vec![[0.0; 2]; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_layout(&self, q: &InterfaceQuadrature) -> Result<()> {
        if self.values.len() != q.len() {
            return Err(Error::DimensionMismatch(format!(
                "trace has {} samples, interface rule has {}",
                self.values.len(),
                q.len()
            )));
        }
        Ok(())
    }

    /// Flattened (x, y) component vector.
    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn from_flat(side: TraceSide, v: &[f64]) -> Self {
        Self { side, values: v.chunks(2).map(|c| [c[0], c[1]]).collect() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { side: self.side, values: self.values.iter().map(|v| [s * v[0], s * v[1]]).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self {
            side: self.side,
            values: self.values.iter().zip(&o.values).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect(),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            side: self.side,
            values: self.values.iter().zip(&o.values).map(|(a, b)| [a[0] + b[0], a[1] + b[1]]).collect(),
        }
    }
}

/// ‖g‖*² = Σ over both sides of (1/α) ∫* |g|².
pub fn g_star_norm(g12: &TraceData, g21: &TraceData, alpha: f64, q: &InterfaceQuadrature) -> Result<f64> {
    g12.check_layout(q)?;
    g21.check_layout(q)?;
    if alpha <= 0.0 {
        return Err(Error::InvalidConfig("Robin parameter must be positive".into()));
    }
    let side = |g: &TraceData| -> f64 { g.values.iter().zip(&q.w).map(|(v, w)| w * (v[0] * v[0] + v[1] * v[1])).sum() };
    Ok((side(g12) + side(g21)) / alpha)
}
