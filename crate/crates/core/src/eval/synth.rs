//! Synthetic duets and renditions of them. Every piece is a pure function of
//! its spec, seeds included.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::midi::{events_from_notes, MidiEvent};
use crate::score::{AlignmentPoint, Part, PerformedNote, ReferencePerformance, Score, ScoreNote, ONSET_EPSILON};

/// Bumped whenever generated pieces change.
pub const CORPUS_VERSION: u32 = 1;

/// Score IOI between a grace note and its main note, in beats.
pub const GRACE_BEATS: f64 = 1.0 / 16.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSpec {
    /// Solo onsets, grace notes not included.
    pub onsets: usize,
    pub bpm: f64,
    /// Solo IOIs are drawn from these (beats).
    pub iois: Vec<f64>,
    /// Every n-th solo onset gets a grace note before it (0 = none).
    pub grace_every: usize,
    /// Every n-th solo onset is a dyad (0 = none).
    pub dyad_every: usize,
    pub seed: u64,
}

impl ScoreSpec {
    pub fn new(onsets: usize, seed: u64) -> Self {
        ScoreSpec {
            onsets,
            bpm: 120.0,
            iois: vec![0.5, 1.0, 1.0, 1.5, 2.0],
            grace_every: 0,
            dyad_every: 5,
            seed,
        }
    }
}

fn note(id: String, pitch: u8, onset_beats: f64, duration_beats: f64, part: Part) -> ScoreNote {
    ScoreNote {
        id,
        pitch,
        onset_beats,
        duration_beats,
        part,
    }
}

/// Solo melody (random walk with occasional dyads and grace notes) over a
/// bass line on every beat.
pub fn generate_score(spec: &ScoreSpec) -> Result<Score> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut notes = Vec::new();
    let mut beat = 0.0;
    let mut pitch: i32 = 72;
    let mut prev: i32 = -1;
    for i in 0..spec.onsets {
        let ioi = spec.iois[rng.random_range(0..spec.iois.len())];
        let mut step = rng.random_range(1..=4) * if rng.random_bool(0.5) { 1 } else { -1 };
        if !(60..=84).contains(&(pitch + step)) {
            step = -step;
        }
        let grace = spec.grace_every > 0 && i > 0 && i % spec.grace_every == 0;
        if grace {
            let g = if pitch + 1 == prev { pitch - 1 } else { pitch + 1 } as u8;
            notes.push(note(format!("g{i}"), g, beat - GRACE_BEATS, GRACE_BEATS, Part::Solo));
        }
        notes.push(note(format!("s{i}"), pitch as u8, beat, ioi, Part::Solo));
        if spec.dyad_every > 0 && i % spec.dyad_every == spec.dyad_every - 1 {
            notes.push(note(format!("s{i}d"), (pitch - 4) as u8, beat, ioi, Part::Solo));
        }
        prev = pitch;
        pitch += step;
        beat += ioi;
    }
    let bass = [36u8, 43, 41, 38, 45, 40];
    for b in 0..beat.ceil() as usize {
        let p = bass[(b / 4) % bass.len()] + if b % 2 == 1 { 7 } else { 0 };
        notes.push(note(format!("a{b}"), p, b as f64, 1.0, Part::Accompaniment));
    }
    Score::new(notes, 4, 4, Some(spec.bpm))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderSpec {
    pub bpm: f64,
    /// Final over initial beat period of a linear ritardando (1 = none).
    pub ritardando: f64,
    /// Relative depth of a sinusoidal beat-period modulation.
    pub rubato_depth: f64,
    pub rubato_period_beats: f64,
    /// Standard deviation of per-onset timing noise.
    pub jitter_ms: f64,
    /// Fixed lead of a grace note before its main note.
    pub grace_sec: f64,
    pub lead_in_sec: f64,
    /// Performed over nominal duration.
    pub legato: f64,
    pub seed: u64,
}

impl RenderSpec {
    pub fn constant(bpm: f64, seed: u64) -> Self {
        RenderSpec {
            bpm,
            ritardando: 1.0,
            rubato_depth: 0.0,
            rubato_period_beats: 8.0,
            jitter_ms: 0.0,
            grace_sec: 0.1,
            lead_in_sec: 1.0,
            legato: 0.9,
            seed,
        }
    }

    pub fn with_ritardando(mut self, ratio: f64) -> Self {
        self.ritardando = ratio;
        self
    }

    pub fn with_rubato(mut self, depth: f64, period_beats: f64) -> Self {
        self.rubato_depth = depth;
        self.rubato_period_beats = period_beats;
        self
    }

    pub fn with_jitter(mut self, ms: f64) -> Self {
        self.jitter_ms = ms;
        self
    }
}

/// Beat-period curve of a rendition and its integral.
struct TimeMap {
    bp0: f64,
    ritardando: f64,
    length: f64,
    depth: f64,
    period: f64,
    lead_in: f64,
}

impl TimeMap {
    fn beat_period(&self, beats: f64) -> f64 {
        let rit = 1.0 + (self.ritardando - 1.0) * beats / self.length;
        let rub = 1.0 + self.depth * (std::f64::consts::TAU * beats / self.period).sin();
        self.bp0 * rit * rub
    }

    /// Seconds at score position `beats` (composite Simpson).
    fn time(&self, beats: f64) -> f64 {
        if beats <= 0.0 {
            return self.lead_in + beats * self.beat_period(0.0);
        }
        if self.ritardando == 1.0 && self.depth == 0.0 {
            return self.lead_in + beats * self.bp0;
        }
        let n = ((beats * 32.0).ceil() as usize).max(1) * 2;
        let h = beats / n as f64;
        let mut sum = self.beat_period(0.0) + self.beat_period(beats);
        for k in 1..n {
            sum += self.beat_period(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        self.lead_in + sum * h / 3.0
    }
}

/// Smallest gap kept between consecutive performed onsets.
const MIN_GAP_SEC: f64 = 0.005;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPerformance {
    pub solo: Vec<PerformedNote>,
    /// Solo score onsets against their performed times.
    pub alignment: Vec<AlignmentPoint>,
    pub accompaniment: Vec<PerformedNote>,
    pub accompaniment_alignment: Vec<AlignmentPoint>,
}

impl SyntheticPerformance {
    pub fn reference(&self) -> Result<ReferencePerformance> {
        ReferencePerformance::new(self.solo.clone(), self.alignment.clone())
    }

    pub fn solo_events(&self) -> Vec<MidiEvent> {
        events_from_notes(&self.solo)
    }

    /// (score onset, performed onset) of every solo onset.
    pub fn onset_pairs(&self) -> Vec<(f64, f64)> {
        self.alignment
            .iter()
            .map(|a| (a.score_onset_beats, a.perf_onset_sec))
            .collect()
    }
}

fn is_grace(onset: f64, next: Option<f64>) -> bool {
    next.is_some_and(|n| (n - onset - GRACE_BEATS).abs() <= ONSET_EPSILON)
}

/// Performs `score` under `spec`. Grace notes land `grace_sec` before their
/// main note regardless of tempo.
pub fn render_performance(score: &Score, spec: &RenderSpec) -> SyntheticPerformance {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = Normal::new(0.0, spec.jitter_ms.max(0.0) * 1e-3).expect("finite standard deviation");
    let solo_chords = score.chords(Part::Solo);
    let length = solo_chords.last().map_or(1.0, |c| c.onset_beats).max(1.0);
    let map = TimeMap {
        bp0: 60.0 / spec.bpm,
        ritardando: spec.ritardando,
        length,
        depth: spec.rubato_depth,
        period: spec.rubato_period_beats,
        lead_in: spec.lead_in_sec,
    };

    let onsets: Vec<f64> = solo_chords.iter().map(|c| c.onset_beats).collect();
    let mut times = vec![0.0; onsets.len()];
    // main notes first, grace notes hang off them
    let mut last = f64::NEG_INFINITY;
    for i in 0..onsets.len() {
        if is_grace(onsets[i], onsets.get(i + 1).copied()) {
            continue;
        }
        let mut t = map.time(onsets[i]);
        if spec.jitter_ms > 0.0 {
            t += jitter.sample(&mut rng);
        }
        let floor = last
            + if i > 0 && is_grace(onsets[i - 1], Some(onsets[i])) {
                2.0 * MIN_GAP_SEC + spec.grace_sec
            } else {
                MIN_GAP_SEC
            };
        t = t.max(floor).max(0.0);
        times[i] = t;
        last = t;
    }
    for i in 0..onsets.len() {
        if is_grace(onsets[i], onsets.get(i + 1).copied()) {
            times[i] = times[i + 1] - spec.grace_sec;
        }
    }

    let mut solo = Vec::new();
    let mut alignment = Vec::new();
    for (i, chord) in solo_chords.iter().enumerate() {
        let t = times[i];
        alignment.push(AlignmentPoint {
            score_onset_beats: chord.onset_beats,
            perf_onset_sec: t,
        });
        let grace = is_grace(chord.onset_beats, onsets.get(i + 1).copied());
        for n in &chord.notes {
            let nominal = if grace {
                spec.grace_sec
            } else {
                map.time(n.onset_beats + n.duration_beats) - map.time(n.onset_beats)
            };
            solo.push(PerformedNote {
                pitch: n.pitch,
                onset_sec: t,
                duration_sec: (nominal * spec.legato).max(0.01),
                velocity: rng.random_range(60..=90),
            });
        }
    }

    let mut accompaniment = Vec::new();
    let mut accompaniment_alignment = Vec::new();
    for chord in score.chords(Part::Accompaniment) {
        let t = map.time(chord.onset_beats);
        accompaniment_alignment.push(AlignmentPoint {
            score_onset_beats: chord.onset_beats,
            perf_onset_sec: t,
        });
        for n in &chord.notes {
            accompaniment.push(PerformedNote {
                pitch: n.pitch,
                onset_sec: t,
                duration_sec: ((map.time(n.onset_beats + n.duration_beats) - t) * spec.legato).max(0.01),
                velocity: rng.random_range(50..=70),
            });
        }
    }
    solo.sort_by(|a, b| a.onset_sec.total_cmp(&b.onset_sec).then(a.pitch.cmp(&b.pitch)));
    SyntheticPerformance {
        solo,
        alignment,
        accompaniment,
        accompaniment_alignment,
    }
}
