// Tensor code indexes several arrays per loop, and `!(a > b)` is how NaN is rejected.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod connections;
pub mod electrodynamics;
pub mod error;
pub mod expr;
pub mod geodesics;
pub mod linalg;
pub mod sampling;
pub mod structure;
pub mod suite;
pub mod tower;
