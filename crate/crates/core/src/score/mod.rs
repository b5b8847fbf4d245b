//! Scores, performances and reference alignments.
//!
//! A [`Score`] holds a flat list of notes split into a solo and an
//! accompaniment [`Part`]. Notes sharing a score onset form a chord; the
//! distinct onsets of one part make up its [`OnsetGrid`].

mod document;
mod reference;
mod smf;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pitch::PitchSet;

pub use document::{parse_beats, parse_score, PartMode};
pub use reference::{
    load_reference, parse_alignment_csv, write_alignment_csv, AlignmentPoint, ReferencePerformance, TempoCurve,
};
pub(crate) use smf::finish_track as finish_track_events;
pub use smf::{export_midi_score, import_midi_score, PartMap};

/// Onsets closer than this (in beats) are treated as the same score onset.
pub const ONSET_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Solo,
    Accompaniment,
}

impl Part {
    pub fn name(self) -> &'static str {
        match self {
            Part::Solo => "solo",
            Part::Accompaniment => "accompaniment",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreNote {
    pub id: String,
    pub pitch: u8,
    pub onset_beats: f64,
    pub duration_beats: f64,
    pub part: Part,
}

impl ScoreNote {
    fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidNote {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.pitch > 127 {
            return bad("pitch outside [0, 127]");
        }
        if !(self.onset_beats.is_finite() && self.onset_beats >= 0.0) {
            return bad("onset must be a non-negative number of beats");
        }
        if !(self.duration_beats.is_finite() && self.duration_beats > 0.0) {
            return bad("duration must be positive");
        }
        Ok(())
    }
}

/// Performed note: times in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerformedNote {
    pub pitch: u8,
    pub onset_sec: f64,
    pub duration_sec: f64,
    pub velocity: u8,
}

impl PerformedNote {
    pub fn offset_sec(&self) -> f64 {
        self.onset_sec + self.duration_sec
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Score {
    notes: Vec<ScoreNote>,
    pub beats_per_measure: u32,
    pub beat_unit: u32,
    pub initial_bpm: Option<f64>,
}

impl Score {
    /// Builds a score, checking note invariants and id uniqueness. The solo
    /// part must not be empty.
    pub fn new(
        notes: Vec<ScoreNote>,
        beats_per_measure: u32,
        beat_unit: u32,
        initial_bpm: Option<f64>,
    ) -> Result<Self> {
        let mut ids = HashSet::with_capacity(notes.len());
        for note in &notes {
            note.validate()?;
            if !ids.insert(note.id.as_str()) {
                return Err(Error::DuplicateId(note.id.clone()));
            }
        }
        if let Some(bpm) = initial_bpm {
            if !(bpm.is_finite() && bpm > 0.0) {
                return Err(Error::MalformedScore(format!(
                    "initial_bpm must be positive, got {bpm}"
                )));
            }
        }
        if beats_per_measure == 0 || beat_unit == 0 {
            return Err(Error::MalformedScore("time signature must be positive".into()));
        }
        let score = Score {
            notes,
            beats_per_measure,
            beat_unit,
            initial_bpm,
        };
        if score.part(Part::Solo).next().is_none() {
            return Err(Error::EmptyPart(Part::Solo.name()));
        }
        Ok(score)
    }

    pub fn notes(&self) -> &[ScoreNote] {
        &self.notes
    }

    pub fn part(&self, part: Part) -> impl Iterator<Item = &ScoreNote> {
        self.notes.iter().filter(move |n| n.part == part)
    }

    pub fn require_duet(&self) -> Result<()> {
        if self.part(Part::Accompaniment).next().is_none() {
            return Err(Error::EmptyPart(Part::Accompaniment.name()));
        }
        Ok(())
    }

    /// Seconds per beat implied by `initial_bpm`.
    pub fn initial_beat_period(&self) -> Option<f64> {
        self.initial_bpm.map(|bpm| 60.0 / bpm)
    }

    /// Notes of `part` grouped by score onset, sorted by onset.
    pub fn chords(&self, part: Part) -> Vec<Chord> {
        let mut notes: Vec<&ScoreNote> = self.part(part).collect();
        notes.sort_by(|a, b| {
            a.onset_beats
                .total_cmp(&b.onset_beats)
                .then(a.pitch.cmp(&b.pitch))
                .then(a.id.cmp(&b.id))
        });
        let mut chords: Vec<Chord> = Vec::new();
        for note in notes {
            match chords.last_mut() {
                Some(chord) if note.onset_beats - chord.onset_beats <= ONSET_EPSILON => {
                    chord.pitches.insert(note.pitch);
                    chord.notes.push(note.clone());
                }
                _ => chords.push(Chord {
                    onset_beats: note.onset_beats,
                    pitches: std::iter::once(note.pitch).collect(),
                    notes: vec![note.clone()],
                }),
            }
        }
        chords
    }
}

/// Notes of one part that share a score onset.
#[derive(Clone, Debug, PartialEq)]
pub struct Chord {
    pub onset_beats: f64,
    pub pitches: PitchSet,
    pub notes: Vec<ScoreNote>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnsetGrid {
    pub onsets: Vec<f64>,
    pub iois: Vec<f64>,
}

impl OnsetGrid {
    pub fn from_onsets(mut onsets: Vec<f64>) -> Self {
        onsets.sort_by(f64::total_cmp);
        onsets.dedup_by(|b, a| (*b - *a).abs() <= ONSET_EPSILON);
        let iois = onsets.windows(2).map(|w| w[1] - w[0]).collect();
        OnsetGrid { onsets, iois }
    }

    pub fn len(&self) -> usize {
        self.onsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }

    /// Index of the grid onset equal to `beats` (within [`ONSET_EPSILON`]).
    pub fn index_of(&self, beats: f64) -> Option<usize> {
        let i = self.onsets.partition_point(|&o| o < beats - ONSET_EPSILON);
        (i < self.onsets.len() && (self.onsets[i] - beats).abs() <= ONSET_EPSILON).then_some(i)
    }

    /// Index of the last onset at or before `beats`.
    pub fn index_at_or_before(&self, beats: f64) -> Option<usize> {
        let i = self.onsets.partition_point(|&o| o <= beats + ONSET_EPSILON);
        i.checked_sub(1)
    }
}

pub fn build_onset_grid(score: &Score, part: Part) -> Result<OnsetGrid> {
    let onsets: Vec<f64> = score.part(part).map(|n| n.onset_beats).collect();
    if onsets.is_empty() {
        return Err(Error::EmptyPart(part.name()));
    }
    Ok(OnsetGrid::from_onsets(onsets))
}

#[cfg(test)]
pub(crate) fn note(id: &str, pitch: u8, onset: f64, dur: f64, part: Part) -> ScoreNote {
    ScoreNote {
        id: id.to_string(),
        pitch,
        onset_beats: onset,
        duration_beats: dur,
        part,
    }
}
