//! Multirotor translational-acceleration control with a disturbance observer,
//! plus robust-stability analysis of the observer's Q-filter.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod conversion;
pub mod dob;
pub mod linsys;
pub mod robust;
pub mod sim;
pub mod vehicle;
