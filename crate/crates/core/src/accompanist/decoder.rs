use super::{AccompConfig, AccompanimentEvent, AccompanimentReference, ExpressiveParams, MIN_DURATION_SEC};
use crate::score::ScoreNote;

/// Tempo-model output the decoder extrapolates from: the predicted time of
/// the next soloist onset and the beat period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TempoContext {
    pub o_hat_next: f64,
    pub score_onset_next: f64,
    pub beat_period: f64,
}

impl TempoContext {
    /// Predicted performance time of score position `beats`.
    pub fn time_of(&self, beats: f64) -> f64 {
        self.o_hat_next + (beats - self.score_onset_next) * self.beat_period
    }
}

pub fn decode_note(
    note: &ScoreNote,
    params: &ExpressiveParams,
    tempo: &TempoContext,
    reference: Option<&AccompanimentReference>,
    cfg: &AccompConfig,
) -> AccompanimentEvent {
    let reference = reference.and_then(|r| r.get(&note.id));
    let xi = reference.map_or(0.0, |r| r.microtiming_sec);
    let ratio = reference.map_or(1.0, |r| r.velocity_ratio);
    let b = tempo.beat_period;
    let duration = (params.articulation_log_ratio.exp2() * note.duration_beats * b).max(MIN_DURATION_SEC);
    let velocity = (cfg.balance * params.velocity * ratio).round().clamp(1.0, 127.0) as u8;
    AccompanimentEvent {
        pitch: note.pitch,
        onset_sec: tempo.time_of(note.onset_beats) + xi,
        duration_sec: duration,
        velocity,
        source_note_id: note.id.clone(),
        score_onset_beats: note.onset_beats,
    }
}

/// Renders accompaniment notes at the current tempo and expression.
pub fn decode_accompaniment(
    notes: &[ScoreNote],
    params: &ExpressiveParams,
    tempo: &TempoContext,
    reference: Option<&AccompanimentReference>,
    cfg: &AccompConfig,
) -> Vec<AccompanimentEvent> {
    notes
        .iter()
        .map(|n| decode_note(n, params, tempo, reference, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{note, Part};

    fn params(velocity: f64, a: f64) -> ExpressiveParams {
        ExpressiveParams {
            velocity,
            beat_period: 0.5,
            articulation_log_ratio: a,
            microtiming: Vec::new(),
        }
    }

    fn ctx(b: f64) -> TempoContext {
        TempoContext {
            o_hat_next: 10.0,
            score_onset_next: 4.0,
            beat_period: b,
        }
    }

    #[test]
    fn duration_law() {
        let cfg = AccompConfig::default();
        let n = note("a", 48, 4.0, 1.0, Part::Accompaniment);
        let e = decode_note(&n, &params(64.0, 0.0), &ctx(0.6), None, &cfg);
        assert!((e.duration_sec - 0.6).abs() < 1e-12);
        let n = note("a", 48, 4.0, 2.0, Part::Accompaniment);
        let e = decode_note(&n, &params(64.0, -1.0), &ctx(0.5), None, &cfg);
        assert!((e.duration_sec - 0.5).abs() < 1e-12);
        let n = note("a", 48, 4.0, 0.001, Part::Accompaniment);
        assert_eq!(
            decode_note(&n, &params(64.0, 0.0), &ctx(0.5), None, &cfg).duration_sec,
            MIN_DURATION_SEC
        );
    }

    #[test]
    fn velocity_balance() {
        let cfg = AccompConfig::default();
        let n = note("a", 48, 4.0, 1.0, Part::Accompaniment);
        assert_eq!(decode_note(&n, &params(68.0, 0.0), &ctx(0.5), None, &cfg).velocity, 54);
        assert_eq!(
            decode_note(&n, &params(400.0, 0.0), &ctx(0.5), None, &cfg).velocity,
            127
        );
        assert_eq!(decode_note(&n, &params(0.0, 0.0), &ctx(0.5), None, &cfg).velocity, 1);
    }

    #[test]
    fn onsets_extrapolate_at_beat_period() {
        let cfg = AccompConfig::default();
        let notes = vec![
            note("a", 48, 4.0, 1.0, Part::Accompaniment),
            note("b", 50, 4.5, 1.0, Part::Accompaniment),
            note("c", 52, 3.5, 1.0, Part::Accompaniment),
        ];
        let events = decode_accompaniment(&notes, &params(64.0, 0.0), &ctx(0.5), None, &cfg);
        let onsets: Vec<f64> = events.iter().map(|e| e.onset_sec).collect();
        assert_eq!(onsets, vec![10.0, 10.25, 9.75]);
    }
}
