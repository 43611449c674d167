//! Temporal 1D CNN over histogram matrices.
//!
//! Activations are laid out `[time][bin][channel]`, so a `k × 1`
//! convolution is `k` matrix products over contiguous row blocks. The
//! network is generic over `f32` (training) and `f64` (gradient checks).

mod checkpoint;
mod network;
mod scalar;
mod train;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint};
pub use network::{
    standard_layers, FeatureReduce, Forward, Grads, Layer, LayerKind, Network, Shape,
    STANDARD_BINS, STANDARD_CHANNELS, STANDARD_TRACE,
};
pub use scalar::Scalar;
pub use train::{
    backward_step, evaluate, train, EpochStats, Sample, Sgd, TrainConfig, TrainReport,
};

use crate::ingest::Label;
use crate::tophist::HistogramMatrix;

/// Network input for a histogram matrix.
pub fn sample_from_matrix<T: Scalar>(m: &HistogramMatrix, label: Label) -> Sample<T> {
    Sample {
        input: m.values().iter().map(|&v| T::from_f64(v)).collect(),
        label: label.class_index(),
    }
}
