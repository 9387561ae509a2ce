//! Generalization-bound auditing for dense networks.
//!
//! The central object is the Koopman-operator bound on the empirical Rademacher
//! complexity of a network `f = g ∘ b_L ∘ W_L ∘ σ_{L-1} ∘ … ∘ σ_1 ∘ b_1 ∘ W_1`,
//! whose weight-dependent part is a product of per-layer factors
//!
//! ```text
//! max{1, ‖W_j‖^{s_{j-1}}} / det(W_jᵀ W_j)^{1/4}
//! ```
//!
//! The crate computes that bound and its rank-deficient variants, the classical
//! norm-based competitors, spectral diagnostics of weight matrices, Monte-Carlo
//! lower estimates of Rademacher complexity, and a small training engine used to
//! reproduce regularized-training experiments on desk-scale problems.

pub mod bounds;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod matcore;
pub mod network;
pub mod oracle;
mod real;
pub mod special;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use matcore::{Matrix, Svd};
pub use network::{ActivationKind, Head, LayerSpec, NetworkSpec};
