//! Robust stochastic mirror descent (RSMD) for convex composite problems
//! `min_{x in X} phi(x) + psi(x)` driven by a stochastic gradient oracle whose
//! noise only has a bounded second moment.
//!
//! The crate is `no_std` and only needs `alloc`. It provides
//!
//! * [`geometry`]: norms, proxy functions, Bregman divergences and an exact
//!   separable solver for composite proximal steps,
//! * [`problems`]: synthetic quadratic instances with known optima and
//!   calibrated heavy-tailed gradient oracles,
//! * [`truncation`]: anchor gradients, thresholds and the truncation rule,
//! * [`rsmd`]: the mirror descent recursion, averaging and per-run diagnostics,
//! * [`certificate`]: computable accuracy certificates for arbitrary trajectories,
//! * [`multistage`]: the restart scheme for objectives with quadratic growth.
#![no_std]
// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod certificate;
mod error;
pub mod geometry;
pub mod linalg;
pub mod multistage;
pub mod problems;
pub mod rng;
pub mod rsmd;
pub mod truncation;

pub use error::{Error, Result};
pub use geometry::{
    CompositePenalty, Domain, FeasibleSet, Geometry, GeometryKind, Norm, NormBall,
};
pub use problems::{Instance, InstanceSpec, NoiseKind, NoiseModel};
pub use rsmd::{RsmdConfig, RunTrace, StepSizes};
pub use truncation::{ThresholdPolicy, TruncationConfig};
