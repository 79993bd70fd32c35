//! Timestepper-based computational superstructures.
//!
//! A black-box cycle map `u -> Phi(u; lambda)` (one operating cycle, one
//! forcing period, one sweep of any iterative code) is all this crate needs
//! to
//!
//! * locate fixed points, stable or mildly unstable, with the Recursive
//!   Projection Method ([`rpm`]),
//! * compute the dominant Floquet multipliers with matrix-free Arnoldi
//!   ([`arnoldi`]),
//! * follow fixed-point branches through turning points with
//!   pseudo-arclength continuation ([`continuation`]),
//! * leap over slow cycle-to-cycle transients with coarse projective
//!   integration ([`projective`]).
//!
//! Every Jacobian action is estimated from extra map calls, and every map
//! call is counted by [`Timestepper`].

pub mod arnoldi;
pub mod continuation;
pub mod csv;
pub mod direct;
pub mod error;
pub mod linalg;
pub mod models;
pub mod projective;
pub mod rpm;
pub mod timestepper;

pub use error::{Error, Result};
pub use timestepper::{CycleMap, EpsilonPolicy, Parameters, Residual, StateVector, Timestepper};
