//! Benchmark problems and experiment drivers behind the `chronos` CLI.

pub mod aa_demo;
pub mod cli;
pub mod experiments;
pub mod gray_scott;
pub mod linear_scales;
pub mod lotka_volterra;
pub mod report;

pub use gray_scott::{relative_l2_error, GrayScott, LinearReactionExact, RiccatiReactionExact};
pub use lotka_volterra::{norm_error, LotkaVolterra, LV_PARAMS, LV_T_END, LV_Y0};
