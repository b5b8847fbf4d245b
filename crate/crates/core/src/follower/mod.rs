//! Score followers: estimate the soloist's current score position from the
//! stream of input windows.

mod hmm;
mod oltw;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::midi::InputWindow;
use crate::score::OnsetGrid;

pub use hmm::{pitch_log_likelihood, HmmConfig, HmmFollower, HmmState};
pub use oltw::{featurize_reference, frame_distance, Ensemble, FrameSequence, OltwConfig, OltwFollower};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScorePositionEstimate {
    pub position_beats: f64,
    /// Solo onset at or before the position.
    pub onset_index: Option<usize>,
    pub confidence: f64,
    pub timestamp_sec: f64,
    pub end_of_reference: bool,
}

impl ScorePositionEstimate {
    pub fn start(position_beats: f64) -> Self {
        ScorePositionEstimate {
            position_beats,
            onset_index: Some(0),
            confidence: 0.0,
            timestamp_sec: 0.0,
            end_of_reference: false,
        }
    }
}

pub trait ScoreFollower: Send {
    /// Consumes one input window (empty windows included).
    fn step(&mut self, window: &InputWindow) -> ScorePositionEstimate;

    /// Most recent estimate.
    fn estimate(&self) -> ScorePositionEstimate;

    /// Solo onset grid the positions refer to.
    fn grid(&self) -> &OnsetGrid;
}

impl<F: ScoreFollower + ?Sized> ScoreFollower for Box<F> {
    fn step(&mut self, window: &InputWindow) -> ScorePositionEstimate {
        (**self).step(window)
    }

    fn estimate(&self) -> ScorePositionEstimate {
        (**self).estimate()
    }

    fn grid(&self) -> &OnsetGrid {
        (**self).grid()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FollowerKind {
    Hmm,
    Oltw,
}

impl FollowerKind {
    pub const ALL: [FollowerKind; 2] = [FollowerKind::Hmm, FollowerKind::Oltw];

    pub fn name(self) -> &'static str {
        match self {
            FollowerKind::Hmm => "hmm",
            FollowerKind::Oltw => "oltw",
        }
    }
}

impl fmt::Display for FollowerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FollowerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        FollowerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown follower `{s}` (valid: hmm, oltw)")))
    }
}
