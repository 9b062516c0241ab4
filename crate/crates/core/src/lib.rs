//! Weight-only analysis of gated-MLP transformer neurons.
//!
//! Each neuron of a SwiGLU/GeGLU MLP owns three weight vectors: the gate
//! and linear-input (reading) weights and the output weight. The cosines
//! between them sort neurons into IO classes such as enrichment or
//! depletion ([`taxonomy`]); layer-level summaries live in [`stats`],
//! output-weight functional roles in [`roles`], vocabulary projections in
//! [`lens`], and a single-neuron simulator in [`simulator`]. [`report`]
//! renders the summaries as SVG and [`cli`] ties everything to the
//! `neuron-io` binary.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod lens;
pub mod report;
pub mod roles;
pub mod simulator;
pub mod stats;
pub mod taxonomy;
pub mod weights;

pub use error::{Error, ErrorKind, Result};
