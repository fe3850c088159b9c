//! Core library for content-based retrieval of synoptic weather maps.
//!
//! Everything in this crate is pure computation over in-memory buffers:
//! a small tensor type with reverse-mode autodiff ([`autodiff`]), a
//! convolutional autoencoder ([`cae`]) and a vector-quantized variant
//! ([`vqvae`]) trained from scratch, color-mask preprocessing for scanned
//! weather maps ([`imgproc`]), similarity metrics ([`metrics`]), an exact
//! embedding index with temporal exclusion ([`index`]), and a seeded
//! synthetic map generator ([`synthgen`]).
//!
//! The crate is `no_std`-compatible (`--no-default-features`, `alloc`
//! required); the default `std` feature only enables wall-clock timing in
//! training logs and std error traits. File IO, PNG codecs, and the
//! on-disk formats live in the companion CLI crate.
//!
//! Determinism is a contract, not an accident: every seeded entry point
//! produces bit-identical results for identical inputs within one build.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod cae;
pub mod digest;
pub mod imgproc;
pub mod index;
pub mod metrics;
pub mod synthgen;
pub mod tensor;
pub mod time;
pub mod vqvae;

pub use digest::Digest;
pub use tensor::{Scalar, Tensor, TensorError};
pub use time::Timestamp;
