//! Solver for closed space-like graph hypersurfaces of prescribed scalar
//! curvature in conformally split Lorentzian spacetimes over a flat torus.
//!
//! The equation H₂ = f(x, ν) is solved by a curvature flow with elliptic
//! regularization of the curvature vector, driven to the degenerate limit by
//! a continuation loop over the regularization parameter.

// Index loops over fixed tensor components read better than iterator chains
// here, and `!(a < b)` deliberately rejects NaN where `a >= b` would not.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ambient;
pub mod cli;
pub mod continuation;
pub mod expr;
pub mod flow;
pub mod graphgeo;
pub mod scenario;
pub mod symcone;
