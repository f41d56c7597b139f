//! Quantum metric geometry at finite dimension.
//!
//! This crate models finite-dimensional C*-algebras (direct sums of complex
//! matrix blocks) together with Lip-norms — seminorms on the self-adjoint part
//! whose dual gauge metrizes the state space.  On top of that it computes
//! Monge-Kantorovich and bounded-Lipschitz distances between states by convex
//! optimization, builds bridges and tunnels between two quantum metric
//! spaces, and derives certified upper bounds on their Gromov-Hausdorff
//! distance.  A models layer provides the standard examples: fuzzy and
//! quantum tori from twisted group algebras, matrix filtrations, and the
//! Berezin quantization of the sphere.
//!
//! Numerical conventions used throughout:
//!
//! * all spectral quantities come from Hermitian eigendecompositions (of a
//!   matrix or of `MᴴM`), never from general SVD;
//! * every randomized routine takes an explicit seed and is reproducible;
//! * solvers report certified enclosures `[lower, upper]`, and quantities
//!   that are only heuristic are flagged as such rather than silently mixed
//!   with certified ones.

pub mod algebra;
pub mod bridge;
pub mod convex;
pub mod lipnorm;
pub mod linalg;
pub mod metric;
pub mod models;
pub mod par;
pub mod tunnel;

mod error;

pub use error::{Error, Result};
