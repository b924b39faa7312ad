//! Robust ancillary control through control Lyapunov functions and
//! Hamilton-Jacobi reachability.
//!
//! The pipeline: synthesize a feedback gain and quadratic Lyapunov function
//! from an LMI ([`clf`], solved by [`lmi`]), compute the nonlinear safe set on
//! a grid ([`hj`]), then line-search the largest additive disturbance bound
//! whose invariant ellipsoid still fits inside that set ([`roa`]). The
//! [`mpc`] and [`plants`] modules close the loop in simulation and
//! [`harness`] wires everything into reproducible scenarios.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clf;
pub mod harness;
pub mod hj;
pub mod lmi;
pub mod matrixkit;
pub mod mpc;
pub mod plants;
pub mod roa;

pub use clf::{ClfCertificate, ClfParams, LinearModel};
pub use harness::{Figure, HarnessError, Scenario};
pub use hj::{Grid2, TargetSet, ValueGrid};
pub use lmi::{AffineSdp, SdpSolution, SdpStatus};
pub use matrixkit::{DenseMatrix, SymMatrix};
pub use mpc::{MpcConfig, RefPoint};
pub use plants::sim::{AncillaryBlock, ControllerMode, Trajectory};
pub use roa::{Ellipsoid2, SafeRegion};
