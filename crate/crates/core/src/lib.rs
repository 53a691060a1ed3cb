//! Desk-scale simulation and training toolkit for deep-learning-assisted
//! photonic analog-to-digital conversion.
//!
//! The crate models a photonic sampling front-end (electro-optic
//! nonlinearity, time-interleaved channel mismatch, noise, quantization),
//! provides a from-scratch 1-D convolutional network engine with reverse-mode
//! gradients, builds the residual linearization/matching recovery nets,
//! trains them on synthetic corpora, and characterizes performance with
//! SINAD/ENOB/SFDR spectral metrics.

pub mod dataset;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod nets;
pub mod nn;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use nets::NetSpec;
pub use nn::{Net, NetKind, OptAlgorithm};
pub use signal::{ChannelSet, FrontEndConfig, MismatchProfile, MzmConfig, WaveformSpec};
