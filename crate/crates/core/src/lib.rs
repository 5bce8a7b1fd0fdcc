//! Listenable interpretations of audio classifiers.
//!
//! The crate trains a small convolutional audio-event classifier, pre-learns a
//! sparse NMF dictionary of spectral patterns, and fits a post-hoc interpreter
//! whose hidden encoding doubles as time activations of that dictionary. The
//! interpreter's per-component relevances select dictionary components that are
//! turned back into audio by soft masking and inverse STFT.

pub mod error;
pub mod classifier;
pub mod dsp;
pub mod interpreter;
pub mod metrics;
pub mod net;
pub mod nmf;
pub mod numerics;
pub mod synthgen;

pub use error::{Error, Result};
