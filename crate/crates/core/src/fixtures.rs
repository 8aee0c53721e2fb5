//! Small networks committed with the crate.
//!
//! `fix1` is the 1-1-2 network `h = relu(x)`, `y = (h, −h)` on `x ∈ [−2, 2]`.
//!
//! `fix2` is a 2-4-2 network on `[−2, 2]²` used for the two-dimensional
//! figures. Its weights were found with `examples/search_fixture.rs` so that
//! the seed `(1, 0)` (pattern `0111`, class 0) minimizes to two constrained
//! neurons under the baseline (`0x1x`) and one under the interpolant at
//! logit factor 0.5 (`x1xx`), with the interpolant's box at least as large.
//! The constants below pin the facts the tests check by brute force.

use crate::model::Network;

pub const FIX1_JSON: &str = include_str!("../fixtures/fix1.json");
pub const FIX2_JSON: &str = include_str!("../fixtures/fix2.json");

/// The illustration seed of `fix2`.
pub const FIX2_SEED: [f64; 2] = [1.0, 0.0];
/// A `fix2` seed (class 0, cell `1100`) whose cell does not imply dominance,
/// so the baseline takes its affine fallback.
pub const FIX2_ELSE_SEED: [f64; 2] = [-1.0, -1.0];
/// Feasible complete patterns of `fix2` on its input box.
pub const FIX2_CELLS: usize = 10;
pub const FIX2_BASELINE_CONSTRAINED: usize = 2;
pub const FIX2_INTERPOLANT_CONSTRAINED: usize = 1;

pub fn fix1() -> Network {
    Network::from_json(FIX1_JSON).expect("fix1 fixture is valid")
}

pub fn fix2() -> Network {
    Network::from_json(FIX2_JSON).expect("fix2 fixture is valid")
}
