//! Two-subdomain domain decomposition for linear elasticity with a
//! penalized unilateral contact boundary, in displacement and stress
//! (Arnold–Winther) form, with optional multiscale (CEM) subdomain solvers.

// Dense element kernels read more clearly with explicit index loops.
#![allow(clippy::needless_range_loop)]

pub mod dd;
pub mod error;
pub mod linalg;
pub mod material;
pub mod mesh;
pub mod metrics;
pub mod mixed;
pub mod msfem;
pub mod newton;
pub mod primal;
pub mod quadrature;
pub mod source;
pub mod trace;

pub use dd::{run_dd, DdConfig, DdOutcome, Formulation, IterationReport, Reference, RunOptions};
pub use error::{Error, Result};
pub use material::{MaterialField, PatternSpec, Phase};
pub use mesh::{InterfaceRule, Region, TwoScaleMesh};
pub use msfem::CemParams;
pub use newton::NewtonParams;
pub use source::SourceSpec;
pub use trace::{TraceData, TraceSide};
