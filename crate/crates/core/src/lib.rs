//! Feedback Nash solvers and strategic intent demonstration for N-player
//! general-sum dynamic games.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checks;
pub mod environments;
pub mod error;
pub mod estimation;
pub mod ilq;
pub mod linalg;
pub mod lq_nash;
pub mod model;
pub mod oracles;
pub mod simulation;
pub mod teaching;

pub use error::{Error, Result};
