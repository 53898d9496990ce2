//! Two-objective constrained descent with unilateral gradient surgery.
//!
//! The erasure objective `L_e` is minimized while each step keeps the
//! first-order change of the preservation objective `L_p` inside a tolerance
//! `ε`. Two solvers are provided:
//!
//! - [`SolverKind::Explicit`] computes both gradients and applies the
//!   closed-form surgered direction (two gradient evaluations per step).
//! - [`SolverKind::Implicit`] tracks the dual weight `λ` from observed
//!   preservation-loss drift and backpropagates the composite
//!   `L_e + λ L_p` once per step.
//!
//! Linear scalarization, PCGrad and MGDA are available as baselines, and
//! [`analysis`] checks recorded traces against the dual, utility, and rate
//! bounds the method is expected to satisfy.
//!
//! All math is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix the 64-bit types used by the rest of the workspace.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
mod error;
pub mod fd;
pub mod objective;
pub mod rng;
mod scalar;
pub mod schedule;
pub mod surgery;
pub mod trace;
pub mod vector;

pub use error::{Error, Result};
pub use objective::{FnPair, ObjectivePair, Oracle, OracleCounts};
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use schedule::Schedule;
pub use surgery::{run, DriftMode, Instrumentation, RunAbort, RunOutput, SolverKind, SurgeryConfig, SurgeryState};
pub use trace::{IterateTrace, TraceRow};
pub use vector::{GradientPair, ParamVec};

/// 64-bit parameter vector, the default optimization state.
pub type ParamVector = ParamVec<f64>;
/// 32-bit parameter vector.
pub type ParamVector32 = ParamVec<f32>;
/// 64-bit gradient pair `(∇L_e, ∇L_p)`.
pub type Gradients = GradientPair<f64>;
/// 32-bit gradient pair.
pub type Gradients32 = GradientPair<f32>;
/// 64-bit solver state.
pub type State = SurgeryState<f64>;
