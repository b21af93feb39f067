//! Core algorithms for data-driven hyperparameter prediction.
//!
//! The pipeline built on this crate works in four stages: draw many
//! pairwise-dissimilar sub-datasets from a corpus ([`sample`]), encode each
//! sub-dataset as the trained weights of a small autoencoder ([`encode`]),
//! fit a meta network mapping those weights to known-good hyperparameters
//! ([`core_net`]), and refine each prediction with derivative-free local
//! search ([`lopt`]). The [`nn`] module is the self-contained network engine
//! underneath the encoders and the meta network; [`env`] defines the
//! evaluation environments (target learners) being tuned.
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats and the CLI
//! live in the companion `paramap-cli` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod core_net;
pub mod data;
pub mod encode;
pub mod env;
pub mod error;
pub mod label;
pub mod lopt;
pub mod nn;
pub mod sample;
pub mod seed;
pub mod stable_hash;
pub mod tensor;

pub use error::{Error, Result};
