//! Score document format.
//!
//! ```toml
//! version = 1
//! time_signature = "4/4"
//! initial_bpm = "120"
//!
//! [[notes]]
//! id = "s1"
//! pitch = 60
//! onset_beats = "0"
//! duration_beats = "1.5"
//! part = "solo"
//! ```
//!
//! Beat values are strings holding a decimal (`"1.25"`) or a fraction
//! (`"1/3"`), so documents never carry binary float artifacts.

use serde::{Deserialize, Serialize};

use super::{Part, Score, ScoreNote};
use crate::error::{Error, Result};

pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartMode {
    /// Both parts must be present.
    Duet,
    /// Only the solo part is required.
    SoloOnly,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: u32,
    time_signature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_bpm: Option<String>,
    #[serde(default)]
    notes: Vec<DocumentNote>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentNote {
    id: String,
    pitch: i64,
    onset_beats: String,
    duration_beats: String,
    part: Part,
}

/// Parses a decimal (`"2.75"`) or fractional (`"11/4"`) beat value.
pub fn parse_beats(text: &str) -> Option<f64> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num = parse_decimal(num.trim())?;
        let den = parse_decimal(den.trim())?;
        if den == 0.0 {
            return None;
        }
        return Some(num / den);
    }
    parse_decimal(text)
}

fn parse_decimal(text: &str) -> Option<f64> {
    let body = text.strip_prefix('-').unwrap_or(text);
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if int.is_empty() && frac.is_empty() || !digits(int) || !digits(frac) {
        return None;
    }
    text.parse().ok()
}

fn parse_time_signature(text: &str) -> Option<(u32, u32)> {
    let (num, den) = text.split_once('/')?;
    let num = num.trim().parse().ok()?;
    let den = den.trim().parse().ok()?;
    (num > 0 && den > 0).then_some((num, den))
}

pub fn parse_score(document: &[u8], mode: PartMode) -> Result<Score> {
    let text = std::str::from_utf8(document).map_err(|e| Error::MalformedScore(format!("not UTF-8: {e}")))?;
    let doc: Document = toml::from_str(text).map_err(|e| Error::MalformedScore(e.to_string()))?;
    if doc.version != DOCUMENT_VERSION {
        return Err(Error::MalformedScore(format!(
            "unsupported version {} (expected {DOCUMENT_VERSION})",
            doc.version
        )));
    }
    let (beats_per_measure, beat_unit) = parse_time_signature(&doc.time_signature)
        .ok_or_else(|| Error::MalformedScore(format!("bad time_signature `{}`", doc.time_signature)))?;
    let initial_bpm = doc
        .initial_bpm
        .as_deref()
        .map(|s| parse_beats(s).ok_or_else(|| Error::MalformedScore(format!("bad initial_bpm `{s}`"))))
        .transpose()?;

    let mut notes = Vec::with_capacity(doc.notes.len());
    for n in doc.notes {
        let beats = |field: &str, value: &str| {
            parse_beats(value).ok_or_else(|| Error::InvalidNote {
                id: n.id.clone(),
                reason: format!("{field} `{value}` is not a decimal or fraction"),
            })
        };
        let onset_beats = beats("onset_beats", &n.onset_beats)?;
        let duration_beats = beats("duration_beats", &n.duration_beats)?;
        let pitch = u8::try_from(n.pitch)
            .ok()
            .filter(|p| *p <= 127)
            .ok_or_else(|| Error::InvalidNote {
                id: n.id.clone(),
                reason: format!("pitch {} outside [0, 127]", n.pitch),
            })?;
        notes.push(ScoreNote {
            id: n.id,
            pitch,
            onset_beats,
            duration_beats,
            part: n.part,
        });
    }
    let score = Score::new(notes, beats_per_measure, beat_unit, initial_bpm)?;
    if mode == PartMode::Duet {
        score.require_duet()?;
    }
    Ok(score)
}

impl Score {
    /// Serializes the score as a document accepted by [`parse_score`].
    pub fn to_document(&self) -> String {
        let doc = Document {
            version: DOCUMENT_VERSION,
            time_signature: format!("{}/{}", self.beats_per_measure, self.beat_unit),
            initial_bpm: self.initial_bpm.map(|b| b.to_string()),
            notes: self
                .notes()
                .iter()
                .map(|n| DocumentNote {
                    id: n.id.clone(),
                    pitch: n.pitch as i64,
                    onset_beats: n.onset_beats.to_string(),
                    duration_beats: n.duration_beats.to_string(),
                    part: n.part,
                })
                .collect(),
        };
        toml::to_string(&doc).expect("score document serializes")
    }
}
