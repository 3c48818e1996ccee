//! Score-to-performance rendering for piano MIDI.
//!
//! The pipeline reads Standard MIDI Files, turns notes into fixed eight-token frames, runs a
//! note-compressing encoder-decoder transformer with pitch-constrained sampling, and writes the
//! result back either as plain MIDI or with the timing moved into a tempo track.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix the precision.

pub mod corpus;
pub mod inference;
pub mod metrics;
pub mod midi;
pub mod model;
pub mod scalar;
pub mod tempo;
pub mod tokenizer;

pub use scalar::Scalar;

pub type Matrix32 = model::Matrix<f32>;
pub type Matrix64 = model::Matrix<f64>;
pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;
pub type Params32 = model::Params<f32>;
pub type Params64 = model::Params<f64>;
pub type TransformerPerformer32 = inference::TransformerPerformer<f32>;
pub type TransformerPerformer64 = inference::TransformerPerformer<f64>;
pub type Distribution32 = metrics::Distribution<f32>;
pub type Distribution64 = metrics::Distribution<f64>;
pub type MetricReport32 = metrics::MetricReport<f32>;
pub type MetricReport64 = metrics::MetricReport<f64>;
