//! One-step time integrators for ordinary differential equations.
//!
//! The crate is organised around a small [`Stepper`](stepper::Stepper)
//! contract ("advance this state over an interval"). Explicit Runge–Kutta,
//! low-storage, and exact solvers implement it, and composite drivers
//! (operator splitting, the forcing method, multirate control, discrete
//! adjoints) are written against it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod adjoint;
pub mod anderson;
pub mod control;
pub mod diagnostics;
pub mod erk;
pub mod error;
pub mod harness;
pub mod lsrk;
pub mod multirate;
pub mod order_conditions;
pub mod splitting;
pub mod sprk;
pub mod stepper;
pub mod system;
pub mod vector;

pub use control::{ControllerKind, StepController, ToleranceSpec};
pub use error::{Error, Result};
pub use stepper::{AdaptiveStepper, Stepper};
pub use system::{FnSystem, OdeSystem, PartitionedOdeSystem};
