//! Face-mask presentation attack detection from intrinsic reflectance.
//!
//! Pipeline: frames are loaded and normalized ([`ingest`]), split into
//! shading and reflectance ([`intrinsic`]), summarized as intensity
//! histograms on three orthogonal planes ([`tophist`]), passed through a
//! temporal 1D CNN ([`cnn`]) whose last convolution provides per-plane
//! features, and classified by a linear SVM ([`classify`]). [`eval`] holds
//! the ISO/IEC 30107-3 metrics and the leave-one-subject-out protocol;
//! [`synth`] renders Lambertian test sequences with known ground truth.

pub mod classify;
pub mod cnn;
pub mod config;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod intrinsic;
pub mod pipeline;
pub mod synth;
pub mod tophist;

pub use error::{Error, Result};
