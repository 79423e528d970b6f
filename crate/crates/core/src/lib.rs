//! Diffuse-domain discretizations of elliptic and parabolic problems on
//! stationary and moving domains.

pub mod asymptotics;
pub mod ddm_ops;
pub mod error;
pub mod grid;
pub mod harness;
pub mod levelset;
pub mod solvers;

pub use error::{DdmError, Result};
