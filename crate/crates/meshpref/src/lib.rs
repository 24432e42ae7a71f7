//! Unpaired 3D preference learning on triangle meshes.
//!
//! The crate covers the full pipeline: OBJ I/O and mesh validation,
//! quadric simplification and adaptive face fusion toward a 256 x 64 patch
//! grid, 10-dimensional per-face geometric features, a Gaussian-kernel
//! Cauchy-Schwarz divergence with analytic gradients, a compact trainable
//! cross-attention reward scorer, a synthetic preference dataset, an
//! empirical check of the paired/unpaired divergence equivalence, and a
//! reward-guided vertex-deformation loop.

pub mod csdiv;
pub mod error;
pub mod features;
pub mod geom;
pub mod guidance;
pub mod manifest;
pub mod mesh;
pub mod obj;
pub mod prep;
pub mod reward;
pub mod shapes;
pub mod synth;
pub mod theorem;
pub mod verify;

pub use error::{Error, Result};
