use serde::{Deserialize, Serialize};

use super::{build_onset_grid, Part, PerformedNote, Score, ONSET_EPSILON};
use crate::error::{Error, Result};

/// One row of an alignment CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPoint {
    pub score_onset_beats: f64,
    pub perf_onset_sec: f64,
}

/// Piecewise-constant beat period over score time. Segment `i` starts at
/// `starts[i]` and holds `periods[i]`; values extend past both ends.
#[derive(Clone, Debug, PartialEq)]
pub struct TempoCurve {
    starts: Vec<f64>,
    periods: Vec<f64>,
}

impl TempoCurve {
    fn from_alignment(points: &[AlignmentPoint]) -> Self {
        let (starts, periods) = points
            .windows(2)
            .map(|w| {
                let ds = w[1].score_onset_beats - w[0].score_onset_beats;
                let dp = w[1].perf_onset_sec - w[0].perf_onset_sec;
                (w[0].score_onset_beats, dp / ds)
            })
            .unzip();
        TempoCurve { starts, periods }
    }

    /// A curve holding one beat period everywhere.
    pub fn constant(beat_period: f64) -> Self {
        TempoCurve {
            starts: vec![0.0],
            periods: vec![beat_period],
        }
    }

    /// Beat period (seconds per beat) at score position `beats`.
    pub fn beat_period_at(&self, beats: f64) -> f64 {
        let i = self.starts.partition_point(|&s| s <= beats + ONSET_EPSILON);
        self.periods[i.saturating_sub(1)]
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.starts.iter().copied().zip(self.periods.iter().copied())
    }
}

/// A recorded performance aligned to the score's solo onsets.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePerformance {
    notes: Vec<PerformedNote>,
    alignment: Vec<AlignmentPoint>,
    tempo_curve: TempoCurve,
}

impl ReferencePerformance {
    /// Validates that the alignment has at least two points and is strictly
    /// increasing in both coordinates.
    pub fn new(mut notes: Vec<PerformedNote>, alignment: Vec<AlignmentPoint>) -> Result<Self> {
        if alignment.len() < 2 {
            return Err(Error::Alignment("at least two aligned onsets are required".into()));
        }
        for p in &alignment {
            if !(p.score_onset_beats.is_finite() && p.perf_onset_sec.is_finite()) {
                return Err(Error::Alignment("non-finite value".into()));
            }
        }
        for w in alignment.windows(2) {
            if w[1].score_onset_beats <= w[0].score_onset_beats {
                return Err(Error::Alignment(format!(
                    "score onsets not increasing at {}",
                    w[1].score_onset_beats
                )));
            }
            if w[1].perf_onset_sec <= w[0].perf_onset_sec {
                return Err(Error::Alignment(format!(
                    "performance onsets not increasing at score onset {}",
                    w[1].score_onset_beats
                )));
            }
        }
        notes.sort_by(|a, b| a.onset_sec.total_cmp(&b.onset_sec).then(a.pitch.cmp(&b.pitch)));
        let tempo_curve = TempoCurve::from_alignment(&alignment);
        Ok(ReferencePerformance {
            notes,
            alignment,
            tempo_curve,
        })
    }

    pub fn notes(&self) -> &[PerformedNote] {
        &self.notes
    }

    pub fn alignment(&self) -> &[AlignmentPoint] {
        &self.alignment
    }

    pub fn tempo_curve(&self) -> &TempoCurve {
        &self.tempo_curve
    }

    /// Beat period implied by the reference at score position `beats`.
    pub fn beat_period_at(&self, beats: f64) -> f64 {
        self.tempo_curve.beat_period_at(beats)
    }

    /// Piecewise-linear map from score beats to performance seconds.
    pub fn score_to_perf(&self, beats: f64) -> f64 {
        let a = &self.alignment;
        let i = a
            .partition_point(|p| p.score_onset_beats <= beats)
            .clamp(1, a.len() - 1);
        let (p0, p1) = (a[i - 1], a[i]);
        let slope = (p1.perf_onset_sec - p0.perf_onset_sec) / (p1.score_onset_beats - p0.score_onset_beats);
        p0.perf_onset_sec + (beats - p0.score_onset_beats) * slope
    }

    /// Inverse of [`score_to_perf`](Self::score_to_perf).
    pub fn perf_to_score(&self, seconds: f64) -> f64 {
        let a = &self.alignment;
        let i = a.partition_point(|p| p.perf_onset_sec <= seconds).clamp(1, a.len() - 1);
        let (p0, p1) = (a[i - 1], a[i]);
        let slope = (p1.score_onset_beats - p0.score_onset_beats) / (p1.perf_onset_sec - p0.perf_onset_sec);
        p0.score_onset_beats + (seconds - p0.perf_onset_sec) * slope
    }
}

pub fn parse_alignment_csv(bytes: &[u8]) -> Result<Vec<AlignmentPoint>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["score_onset_beats", "perf_onset_sec"] {
        return Err(Error::Alignment(format!(
            "expected header `score_onset_beats,perf_onset_sec`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_alignment_csv(points: &[AlignmentPoint]) -> String {
    let mut out = String::from("score_onset_beats,perf_onset_sec\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.score_onset_beats, p.perf_onset_sec));
    }
    out
}

/// Loads a reference performance from SMF bytes and an alignment CSV. Every
/// distinct solo onset of `score` must appear exactly once in the CSV.
pub fn load_reference(perf: &[u8], alignment_csv: &[u8], score: &Score) -> Result<ReferencePerformance> {
    let events = crate::midi::read_smf_events(perf)?;
    let notes = crate::midi::notes_from_events(&events)?;
    let alignment = parse_alignment_csv(alignment_csv)?;
    check_coverage(&alignment, score)?;
    ReferencePerformance::new(notes, alignment)
}

fn check_coverage(alignment: &[AlignmentPoint], score: &Score) -> Result<()> {
    let grid = build_onset_grid(score, Part::Solo)?;
    let mut seen = vec![false; grid.len()];
    for p in alignment {
        let idx = grid
            .index_of(p.score_onset_beats)
            .ok_or_else(|| Error::Alignment(format!("score onset {} is not a solo onset", p.score_onset_beats)))?;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(Error::Alignment(format!(
                "score onset {} aligned more than once",
                p.score_onset_beats
            )));
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Alignment(format!(
            "missing score onset {}",
            grid.onsets[missing]
        )));
    }
    Ok(())
}
