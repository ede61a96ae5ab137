//! Piecewise-constant body forces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box with a constant force vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceBox {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub f1: f64,
    #[serde(default)]
    pub f2: f64,
}

/// Body force as a sum of boxes; zero elsewhere.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub boxes: Vec<ForceBox>,
}

impl SourceSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(f1: f64, f2: f64) -> Self {
        Self { boxes: vec![ForceBox { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0, f1, f2 }] }
    }

    /// Built-in loads of the two test models.
    pub fn builtin(name: &str) -> Result<Self> {
        let b = |y0: f64, y1: f64, f1: f64| ForceBox { x0: 7.0 / 8.0, x1: 1.0, y0, y1, f1, f2: 0.0 };
        match name {
            "model1" => Ok(Self { boxes: vec![b(1.0 / 8.0, 1.0 / 2.0, -0.5), b(5.0 / 8.0, 7.0 / 8.0, 1.0)] }),
            "model2" => Ok(Self {
                boxes: vec![b(1.0 / 8.0, 1.0 / 4.0, 0.5), b(3.0 / 8.0, 5.0 / 8.0, -0.25), b(7.0 / 8.0, 1.0, 0.5)],
            }),
            _ => Err(Error::InvalidConfig(format!("unknown built-in source '{name}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, b) in self.boxes.iter().enumerate() {
            let inside = |v: f64| (0.0..=1.0).contains(&v);
            if !(inside(b.x0) && inside(b.x1) && inside(b.y0) && inside(b.y1) && b.x0 <= b.x1 && b.y0 <= b.y1) {
                return Err(Error::InvalidConfig(format!("force box {k} is not inside the unit square")));
            }
            if !(b.f1.is_finite() && b.f2.is_finite()) {
                return Err(Error::InvalidConfig(format!("force box {k} has a non-finite value")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        let mut f = [0.0; 2];
        for b in &self.boxes {
            if x >= b.x0 && x <= b.x1 && y >= b.y0 && y <= b.y1 {
                f[0] += b.f1;
                f[1] += b.f2;
            }
        }
        f
    }

    pub fn is_zero(&self) -> bool {
        self.boxes.iter().all(|b| b.f1 == 0.0 && b.f2 == 0.0)
    }
}
