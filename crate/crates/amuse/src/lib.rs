//! Audio-visual question answering for music performances, at desk scale.
//!
//! The pipeline pairs three interactive modality encoders (video, audio,
//! question) exchanging attended tokens through cross-modal adapters with
//! explicitly musical features: per-segment tempo-change labels from a
//! built-in beat tracker, per-segment instrument presence timelines from a
//! pluggable source separator, and a detector-driven highway for musical
//! regions of interest. A final cross-modal attention layer fuses the module
//! outputs with the question and reports both answer logits and per-module
//! importance scores.
//!
//! Everything runs on a small float64 tensor kernel with a reverse-mode tape
//! ([`tensor`], [`graph`]), trains with Adam under an epoch-halving schedule
//! ([`optim`]), and verifies end-to-end against a seeded synthetic
//! concert-clip dataset with oracle answers ([`synth`]).

pub mod audio;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod graph;
pub mod model;
pub mod optim;
pub mod predictors;
pub mod report;
pub mod rhythm;
pub mod roi;
pub mod source;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{AmuseError, Result};
