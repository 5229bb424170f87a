//! Krylov Subspace Descent (KSD) for feedforward networks.
//!
//! Each outer iteration builds an orthonormal basis for the preconditioned
//! Krylov subspace `{(D⁻¹B)^k D⁻¹g : k < K}` plus the previous step, whitens it
//! with the reduced curvature matrix, and minimizes the real objective over
//! that subspace with BFGS on a data subset. Curvature products (`B`) are
//! matrix-free: Gauss-Newton products and exact Hessian products (R-operator).
//!
//! Also included are the baselines used for comparison (SGD, L-BFGS and a
//! Hessian-free truncated Newton method), data loading, and an experiment
//! harness that emits convergence CSVs.

pub mod curvature;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod objective;
pub mod optimizers;
pub mod oracle;
pub mod subspace;
pub mod vecops;

mod dense;

pub use curvature::CurvatureKind;
pub use error::{ConfigError, KsdError, Result};
pub use network::{Activation, LossKind, NetworkSpec, Sample, Target};
pub use objective::{NetworkObjective, Objective, QuadraticObjective};
