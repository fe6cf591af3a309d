//! Clock-driven spiking neural network engine for unsupervised learning of
//! local and global motion from event-camera data.
//!
//! The crate is organised bottom-up:
//!
//! * [`events`]: AER streams, a synthetic DVS, augmentation and file formats.
//! * [`neuron`]: adaptive LIF state updates, presynaptic traces, delays.
//! * [`plasticity`]: the trace-based stable STDP rule and reference rules.
//! * [`layers`]: convolutional, pooling and dense layers with WTA competition.
//! * [`network`]: configuration, layer-wise training, inference and weights I/O.
//! * [`flow`]: optical flow from learned spatiotemporal kernels and colour coding.

// `!(x > 0.0)` style guards deliberately reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod events;
pub mod flow;
pub mod layers;
pub mod network;
pub mod neuron;
pub mod plasticity;
mod util;

pub use error::{Error, Result};
pub use util::write_atomic;
