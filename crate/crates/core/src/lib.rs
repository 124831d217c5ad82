#![allow(clippy::needless_range_loop)]

extern crate openblas_src;

pub mod baselines;
pub mod conic;
pub mod eval;
pub mod feasibility;
pub mod model;
pub mod numerics;
pub mod opt_core;
pub mod opt_nonoverlap;
pub mod opt_overlap;
pub mod slots;
