use super::ExpressiveParams;
use crate::midi::{ReleasedNote, WindowNote};
use crate::score::Chord;

/// log2 of a performed duration over its nominal length at beat period `b`.
pub fn articulation_log_ratio(performed_sec: f64, score_beats: f64, beat_period: f64) -> f64 {
    (performed_sec / (score_beats * beat_period)).log2()
}

#[derive(Clone, Debug)]
struct Sounding {
    pitch: u8,
    onset_sec: f64,
    nominal_sec: f64,
    chord: usize,
}

/// Tracks the soloist's expressive parameters across aligned onsets.
#[derive(Clone, Debug)]
pub struct Encoder {
    velocity_ema: f64,
    params: ExpressiveParams,
    started: bool,
    last: Option<(f64, f64)>,
    sounding: Vec<Sounding>,
    chords_seen: usize,
    /// (chord, sum of log ratios, count) of the latest chord with a
    /// completed note.
    articulation: Option<(usize, f64, usize)>,
}

impl Encoder {
    pub fn new(initial_beat_period: f64, velocity_ema: f64) -> Self {
        Encoder {
            velocity_ema,
            params: ExpressiveParams {
                velocity: 64.0,
                beat_period: initial_beat_period,
                articulation_log_ratio: 0.0,
                microtiming: Vec::new(),
            },
            started: false,
            last: None,
            sounding: Vec::new(),
            chords_seen: 0,
            articulation: None,
        }
    }

    pub fn params(&self) -> &ExpressiveParams {
        &self.params
    }

    /// Registers the soloist chord aligned to score onset `score_beats` and
    /// performed at `perf_sec` (its window end). `chord` gives the score
    /// notes used for nominal durations and ids.
    pub fn observe_onset(
        &mut self,
        perf_sec: f64,
        score_beats: f64,
        struck: &[WindowNote],
        chord: Option<&Chord>,
    ) -> &ExpressiveParams {
        if let Some((s0, p0)) = self.last {
            let ds = score_beats - s0;
            if ds > 0.0 && perf_sec > p0 {
                self.params.beat_period = (perf_sec - p0) / ds;
            }
        }
        self.last = Some((score_beats, perf_sec));

        if !struck.is_empty() {
            let mean = struck.iter().map(|n| n.velocity as f64).sum::<f64>() / struck.len() as f64;
            self.params.velocity = if self.started {
                self.velocity_ema * self.params.velocity + (1.0 - self.velocity_ema) * mean
            } else {
                mean
            };
            self.started = true;
        }

        let id = self.chords_seen;
        self.chords_seen += 1;
        self.params.microtiming.clear();
        for n in struck {
            let score_note = chord.and_then(|c| c.notes.iter().find(|s| s.pitch == n.pitch));
            let key = score_note.map_or_else(|| format!("p{}", n.pitch), |s| s.id.clone());
            self.params.microtiming.push((key, n.onset_sec - perf_sec));
            if let Some(s) = score_note {
                self.sounding.push(Sounding {
                    pitch: n.pitch,
                    onset_sec: n.onset_sec,
                    nominal_sec: s.duration_beats * self.params.beat_period,
                    chord: id,
                });
            }
        }
        &self.params
    }

    /// Folds completed notes into the articulation estimate. Notes still
    /// sounding do not count.
    pub fn observe_releases(&mut self, released: &[ReleasedNote]) -> &ExpressiveParams {
        for r in released {
            let Some(i) = self
                .sounding
                .iter()
                .position(|s| s.pitch == r.pitch && (s.onset_sec - r.onset_sec).abs() < 1e-9)
            else {
                continue;
            };
            let s = self.sounding.remove(i);
            let ratio = (r.duration_sec / s.nominal_sec).log2();
            self.articulation = match self.articulation {
                Some((c, sum, n)) if c == s.chord => Some((c, sum + ratio, n + 1)),
                Some((c, sum, n)) if c > s.chord => Some((c, sum, n)),
                _ => Some((s.chord, ratio, 1)),
            };
            if let Some((_, sum, n)) = self.articulation {
                self.params.articulation_log_ratio = sum / n as f64;
            }
        }
        &self.params
    }
}
