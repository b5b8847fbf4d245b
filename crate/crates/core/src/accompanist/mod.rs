//! Expressive accompaniment: the encoder turns the soloist's aligned onsets
//! into expressive parameters, the decoder renders accompaniment notes from
//! them and the scheduler keeps pending notes in step with the tempo model.

mod decoder;
mod encoder;
mod scheduler;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{AlignmentPoint, Part, PerformedNote, ReferencePerformance, Score, ONSET_EPSILON};

pub use decoder::{decode_accompaniment, decode_note, TempoContext};
pub use encoder::{articulation_log_ratio, Encoder};
pub use scheduler::{Scheduler, MAX_QUIET_SKIP};

/// Shortest note the decoder emits, in seconds.
pub const MIN_DURATION_SEC: f64 = 0.010;

#[derive(Clone, Debug, PartialEq)]
pub struct AccompanimentEvent {
    pub pitch: u8,
    pub onset_sec: f64,
    pub duration_sec: f64,
    pub velocity: u8,
    pub source_note_id: String,
    pub score_onset_beats: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpressiveParams {
    /// Smoothed soloist velocity.
    pub velocity: f64,
    /// Seconds per beat over the last aligned IOI.
    pub beat_period: f64,
    /// Mean log2 of performed over nominal duration.
    pub articulation_log_ratio: f64,
    /// Onset offset of each note of the last chord from the chord onset,
    /// keyed by note id.
    pub microtiming: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccompConfig {
    /// Accompaniment loudness relative to the soloist.
    pub balance: f64,
    /// Weight of the previous value in the velocity moving average.
    pub velocity_ema: f64,
    /// Pending notes closer than this to `now` are no longer re-timed.
    pub retime_horizon_ms: f64,
}

impl Default for AccompConfig {
    fn default() -> Self {
        AccompConfig {
            balance: 0.8,
            velocity_ema: 0.7,
            retime_horizon_ms: 20.0,
        }
    }
}

impl AccompConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.balance.is_finite() && self.balance > 0.0) {
            return Err(Error::Config(format!(
                "accomp.balance must be positive, got {}",
                self.balance
            )));
        }
        if !(0.0..=1.0).contains(&self.velocity_ema) {
            return Err(Error::Config(format!(
                "accomp.velocity_ema must lie in [0, 1], got {}",
                self.velocity_ema
            )));
        }
        if !(self.retime_horizon_ms.is_finite() && self.retime_horizon_ms >= 0.0) {
            return Err(Error::Config("accomp.retime_horizon_ms must be non-negative".into()));
        }
        Ok(())
    }

    pub fn horizon_sec(&self) -> f64 {
        self.retime_horizon_ms * 1e-3
    }
}

/// Per-note micro-timing and relative loudness taken from a recorded
/// accompaniment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccompanimentReference {
    notes: HashMap<String, ReferenceNote>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceNote {
    /// Offset from the aligned chord onset (seconds).
    pub microtiming_sec: f64,
    /// Velocity over the chord's mean velocity.
    pub velocity_ratio: f64,
}

/// Search radius when matching score notes to recorded notes.
const MATCH_RADIUS_SEC: f64 = 0.25;

impl AccompanimentReference {
    /// Matches every accompaniment note of `score` with the nearest unused
    /// recorded note of the same pitch around its aligned chord onset.
    /// `alignment` maps accompaniment score onsets to performance time.
    pub fn build(score: &Score, notes: &[PerformedNote], alignment: Vec<AlignmentPoint>) -> Result<Self> {
        let map = ReferencePerformance::new(notes.to_vec(), alignment)?;
        let mut used = vec![false; notes.len()];
        let mut out = HashMap::new();
        for chord in score.chords(Part::Accompaniment) {
            let t = map.score_to_perf(chord.onset_beats);
            let mut matched: Vec<(&str, f64, f64)> = Vec::new();
            for note in &chord.notes {
                let best = notes
                    .iter()
                    .enumerate()
                    .filter(|(i, p)| !used[*i] && p.pitch == note.pitch && (p.onset_sec - t).abs() <= MATCH_RADIUS_SEC)
                    .min_by(|a, b| (a.1.onset_sec - t).abs().total_cmp(&(b.1.onset_sec - t).abs()));
                if let Some((i, p)) = best {
                    used[i] = true;
                    matched.push((note.id.as_str(), p.onset_sec - t, p.velocity as f64));
                }
            }
            if matched.is_empty() {
                continue;
            }
            let mean = matched.iter().map(|m| m.2).sum::<f64>() / matched.len() as f64;
            for (id, xi, v) in matched {
                out.insert(
                    id.to_string(),
                    ReferenceNote {
                        microtiming_sec: xi,
                        velocity_ratio: if mean > 0.0 { v / mean } else { 1.0 },
                    },
                );
            }
        }
        Ok(AccompanimentReference { notes: out })
    }

    pub fn get(&self, note_id: &str) -> Option<ReferenceNote> {
        self.notes.get(note_id).copied()
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }
}

/// Loads an accompaniment reference from a recording and an alignment CSV
/// over the accompaniment onsets.
pub fn load_accompaniment_reference(
    perf: &[u8],
    alignment_csv: &[u8],
    score: &Score,
) -> Result<AccompanimentReference> {
    let events = crate::midi::read_smf_events(perf)?;
    let notes = crate::midi::notes_from_events(&events)?;
    let alignment = crate::score::parse_alignment_csv(alignment_csv)?;
    for chord in score.chords(Part::Accompaniment) {
        if !alignment
            .iter()
            .any(|a| (a.score_onset_beats - chord.onset_beats).abs() <= ONSET_EPSILON)
        {
            log::warn!(
                "accompaniment onset {} missing from the reference alignment",
                chord.onset_beats
            );
        }
    }
    AccompanimentReference::build(score, &notes, alignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::note;

    #[test]
    fn reference_matching() {
        let score = Score::new(
            vec![
                note("s0", 72, 0.0, 1.0, Part::Solo),
                note("a0", 48, 0.0, 1.0, Part::Accompaniment),
                note("a1", 55, 0.0, 1.0, Part::Accompaniment),
                note("a2", 48, 1.0, 1.0, Part::Accompaniment),
            ],
            4,
            4,
            None,
        )
        .unwrap();
        let perf = |pitch, onset_sec, velocity| PerformedNote {
            pitch,
            onset_sec,
            duration_sec: 0.4,
            velocity,
        };
        let notes = vec![perf(48, 1.01, 60), perf(55, 0.99, 40), perf(48, 1.5, 70)];
        let alignment = vec![
            AlignmentPoint {
                score_onset_beats: 0.0,
                perf_onset_sec: 1.0,
            },
            AlignmentPoint {
                score_onset_beats: 1.0,
                perf_onset_sec: 1.5,
            },
        ];
        let r = AccompanimentReference::build(&score, &notes, alignment).unwrap();
        let a0 = r.get("a0").unwrap();
        assert!((a0.microtiming_sec - 0.01).abs() < 1e-12);
        assert!((a0.velocity_ratio - 1.2).abs() < 1e-12);
        assert!((r.get("a1").unwrap().velocity_ratio - 0.8).abs() < 1e-12);
        assert_eq!(r.get("a2").unwrap().velocity_ratio, 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(AccompConfig::default().validate().is_ok());
        let bad = AccompConfig {
            velocity_ema: 1.5,
            ..AccompConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
