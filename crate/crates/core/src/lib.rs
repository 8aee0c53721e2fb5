//! Certified convex input regions for ReLU classifiers.
//!
//! Given a network and a seed input, the crate produces a conjunction of
//! halfspaces over input space on which a class-dominance property provably
//! holds. Two constructions are provided: minimizing the seed's activation
//! pattern against the property itself, and minimizing it against a relaxed
//! input/logit relation whose critical halfspace then implies the property.
//! Verification runs on an in-crate branch-and-bound engine over a dense
//! simplex solver.

pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod harness;
pub mod infer;
pub mod lp;
pub mod model;
pub mod pattern;
pub mod sampling;
pub mod verify;
pub mod viz;

pub use error::{Error, Result};
pub use model::{forward, load_network, output_affine, pattern_of, AffineMap, ForwardTrace, Layer, Network};
pub use pattern::{halfspaces, supports, ActivationPattern, Halfspace, NeuronStatus, Polytope, Rel};

/// Constraint residual tolerance for returned LP points.
pub const TAU_LP: f64 = 1e-7;
/// Tolerance used when revalidating counterexamples by forward pass.
pub const TAU_CX: f64 = 1e-6;
/// Margin by which strict constraints are tightened before solving.
pub const DELTA_STRICT: f64 = 1e-6;

/// Version of the certificate, box, and network file formats.
pub const FORMAT_VERSION: u32 = 1;
