//! Data-driven structural digital twin.
//!
//! A library of plane-stress plate models predicts strain-gauge readings for
//! every damage scenario. Noisy, load-normalized readings train optimal
//! classification trees (greedy warm start plus local search) that map a
//! measurement back to the best-matching library model. The trained trees
//! drive an online twin loop that tracks degradation and lowers the allowed
//! load factor once the estimated stiffness loss crosses a threshold.

// index loops mirror the matrix algebra
#![allow(clippy::needless_range_loop)]

pub mod datagen;
pub mod error;
pub mod eval;
pub mod fem;
pub mod hash;
pub mod layout;
pub mod learn;
pub mod library;
pub mod placement;
pub mod tree;
pub mod twin;

pub use error::{Error, Result};
