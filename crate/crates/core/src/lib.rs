//! Core algorithms for budgeted treatment allocation on networks with
//! interference.
//!
//! The crate is `no_std` (it needs `alloc`). With the default `std` feature
//! enabled, embarrassingly parallel loops (candidate gains, fitness
//! evaluation, Monte Carlo runs) are spread over a rayon pool; results are
//! identical for any worker count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod allocator;
pub mod dgp;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod math;
pub mod netest;
pub mod nn;
pub mod objective;
pub mod par;
pub mod rng;
pub mod tarnet;

pub use crate::{
    allocator::Allocation,
    dgp::{Dataset, DgpInstance, DgpParams, DgpWeights},
    error::{Error, Result},
    graph::Graph,
    linalg::Matrix,
    objective::{PotentialOutcomes, TotalEffect, TteObjective},
};
