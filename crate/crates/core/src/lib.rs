//! Real-time automatic accompaniment: score following, tempo modelling and
//! expressive accompaniment rendering over symbolic MIDI.

pub mod accompanist;
pub mod config;
pub mod engine;
pub mod error;
pub mod eval;
pub mod follower;
pub mod midi;
pub mod pitch;
pub mod score;
pub mod tempo;

pub use error::{Error, Result};
pub use pitch::PitchSet;
