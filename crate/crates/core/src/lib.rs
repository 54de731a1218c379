//! Two-body gravitational discovery environment.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod eval;
pub mod library;
pub mod sim;
pub mod solvers;
pub mod tasks;
pub mod units;
