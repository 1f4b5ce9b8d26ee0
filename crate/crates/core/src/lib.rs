//! Small-noise flows of anticipating Stratonovich SDEs, their Freidlin–Wentzell
//! skeletons and rate functions, and a law-of-the-iterated-logarithm lab.
//!
//! The crate is `no_std` with `alloc`; IO and the command line live in the
//! `lilsde` companion crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod coefficients;
pub mod error;
pub mod flow;
pub mod lil;
pub mod optim;
pub mod rate;
pub mod skeleton;
pub mod special;
pub mod wiener;

pub use coefficients::{
    rescale, CoefficientSystem, Family, Field, FieldSystem, LimitSystem, RescaledSystem, VectorField,
};
pub use error::{Error, ErrorClass, Result};
pub use flow::{InitialCondition, SamplePath, Scheme};
pub use lil::{run_convergence, run_recurrence, LilConfig, LilRecord, LilReport};
pub use rate::{
    dist_to_theta, rate_exact_full_rank, rate_variational, theta_bound, DistOptions, RateOptions, RateResult,
    ThetaQuery,
};
pub use skeleton::{energy, integrate_skeleton, Control};
pub use wiener::{loglog, phi, GeometricGrid, WienerPath};
