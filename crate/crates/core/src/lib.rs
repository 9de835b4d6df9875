//! Gaussian-process implicit surfaces used directly as control barrier
//! functions.
//!
//! The crate is `no_std` (with `alloc`). It covers the whole numerical path:
//! point-cloud preprocessing into labelled safety samples, exact and sparse
//! (FITC) Gaussian-process regression with hyperparameter learning, analytic
//! gradients and Hessians of the resulting barrier `h = μ + c·σ²`, the
//! closed-form safety filter, kinematic/double-integrator simulations, and
//! surface metrics. File formats, timing and the CLI live in the `gcbf` crate.

#![no_std]
#![cfg_attr(test, allow(unused_imports))]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cbf;
pub mod error;
pub mod eval;
pub mod gp_full;
pub mod gp_sparse;
pub mod kernel;
pub mod linalg;
pub mod optim;
pub mod pointcloud;
pub mod safety_filter;
pub mod shapes;
pub mod sim;

pub use cbf::{CbfConfig, CbfEvaluation, SurfaceModel};
pub use error::{Error, Result};
pub use gp_full::{GpModel, Observations};
pub use gp_sparse::SparseGpModel;
pub use kernel::{Hyperparams, KernelFamily, KernelSpec};
pub use pointcloud::{PointCloud, SafetyDataset};
pub use safety_filter::RectifyResult;

/// Points and directions in the 3-D workspace, in meters.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 matrices (Hessians, rotations).
pub type Mat3 = nalgebra::Matrix3<f64>;
