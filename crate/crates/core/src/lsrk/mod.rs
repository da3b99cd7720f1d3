//! Low-storage Runge–Kutta methods.
//!
//! * [`sts`]: second-order super-time-stepping (RKC and RKL), whose real
//!   stability interval grows quadratically with the stage count, for
//!   diffusion-dominated problems.
//! * [`ssp`]: strong-stability-preserving methods of orders 2, 3, and 4
//!   that keep only two stage registers live.

pub mod ssp;
pub mod sts;

pub use ssp::{ssp_evolve, ssp_step, SspConfig, SspFamily, SspWorkspace};
pub use sts::{
    select_stage_count, sts_evolve, sts_step, StsCoefficients, StsConfig, StsKind, StsOutcome,
    StsWorkspace,
};

/// Counts work-vector allocations so tests can check that storage does not
/// grow with the stage count.
#[derive(Debug, Default, Clone)]
pub(crate) struct Registers {
    pub vecs: Vec<Vec<f64>>,
    pub allocations: usize,
}

impl Registers {
    pub fn ensure(&mut self, count: usize, n: usize) {
        if self.vecs.len() != count || self.vecs.first().is_some_and(|v| v.len() != n) {
            self.vecs = (0..count).map(|_| vec![0.0; n]).collect();
            self.allocations += count;
        }
    }
}
