//! Enriched H(div)-conforming mixed finite elements in two dimensions.
//!
//! Flux spaces `RT_k` on quadrilaterals and `BDM_k` on triangles, their
//! internally enriched versions `V_k^{n+}` (edge functions of degree `k`,
//! internal functions of order `k + n`), commuting projections, a statically
//! condensed Darcy solver and convergence-rate studies on structured meshes.

pub mod assembly;
pub mod error;
pub mod errors;
pub mod geometry;
pub mod mesh;
mod poly;
pub mod projection;
pub mod quadrature;
pub mod solver;
pub mod spaces;
pub mod study;

pub use error::{Error, Result};
