//! Motion-triggered intention anticipation.
//!
//! A two-layer LSTM anticipates a person's intention from per-frame hand
//! motion features and object observations. Object observations are the
//! expensive channel; a small policy network decides frame by frame
//! whether to refresh them, and is trained with a score-function
//! (REINFORCE) estimator jointly with the anticipator.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI
//! and configuration live in the `anticipate` companion crate.
//!
//! Layout:
//!
//! - [`diff`]: reverse-mode differentiation tape, parameter store, SGD.
//! - [`motion`]: the 1D-CNN motion encoder and window preprocessing.
//! - [`world`]: synthetic intention worlds and episode rendering.
//! - [`anticipator`]: hand fusion, embedding, LSTM and intention head.
//! - [`policy`]: the trigger policy network and decision rules.
//! - [`train`]: losses, rewards, pre-training and joint training.
//! - [`eval`]: accuracy at observation fractions and threshold sweeps.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod anticipator;
pub mod diff;
mod error;
pub mod eval;
pub mod math;
pub mod motion;
pub mod policy;
pub mod rng;
pub mod train;
pub mod world;

pub use error::{Error, Result};
