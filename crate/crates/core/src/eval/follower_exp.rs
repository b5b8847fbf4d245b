use super::metrics::{asynchrony_metrics, AsynchronyReport};
use crate::engine::{build_follower, EngineConfig};
use crate::error::{Error, Result};
use crate::follower::{FollowerKind, ScoreFollower};
use crate::midi::{events_from_notes, from_ns, to_ns, window_events, InputWindow, WindowConfig};
use crate::score::{ReferencePerformance, Score};
use crate::tempo::DEFAULT_BEAT_PERIOD;

/// Position estimate after every window, as (window end, beats).
pub fn follow<F: ScoreFollower + ?Sized>(follower: &mut F, windows: &[InputWindow]) -> Vec<(f64, f64)> {
    windows
        .iter()
        .map(|w| (w.window_end_sec, follower.step(w).position_beats))
        .collect()
}

/// First window end at which the position reaches each onset; infinite if
/// it never does.
pub fn detection_times(trace: &[(f64, f64)], onsets: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(onsets.len());
    let mut k = 0;
    for &o in onsets {
        while k < trace.len() && trace[k].1 < o - 1e-9 {
            k += 1;
        }
        out.push(trace.get(k).map_or(f64::INFINITY, |t| t.0));
    }
    out
}

/// End of the input window holding time `t`, for windows anchored at the
/// first event `first_event_sec`.
pub fn window_end_of(t: f64, first_event_sec: f64, cfg: &WindowConfig) -> f64 {
    let width = to_ns(cfg.width_sec).max(1);
    let anchor = to_ns(first_event_sec).div_euclid(width) * width;
    let index = (to_ns(t) - anchor).div_euclid(width);
    from_ns(anchor + (index + 1) * width)
}

/// Replays `test` through a follower and scores its onset detections
/// against the test alignment (both on window ends).
pub fn run_follower_experiment(
    score: &Score,
    test: &ReferencePerformance,
    references: &[ReferencePerformance],
    kind: FollowerKind,
    cfg: &EngineConfig,
) -> Result<AsynchronyReport> {
    let cfg = EngineConfig {
        follower: kind,
        ..cfg.clone()
    };
    let beat_period = cfg
        .initial_bpm
        .map(|bpm| 60.0 / bpm)
        .or(score.initial_beat_period())
        .unwrap_or(DEFAULT_BEAT_PERIOD);
    let mut follower = build_follower(score, references, &cfg, beat_period)?;
    let events = events_from_notes(test.notes());
    let first = events
        .first()
        .ok_or_else(|| Error::Experiment("test performance has no notes".into()))?
        .timestamp_sec;
    let windows = window_events(events, cfg.window)?;
    let trace = follow(&mut follower, &windows);
    let onsets = follower.grid().onsets.clone();
    let estimated: Vec<(f64, f64)> = onsets.iter().copied().zip(detection_times(&trace, &onsets)).collect();
    let truth: Vec<(f64, f64)> = test
        .alignment()
        .iter()
        .map(|a| (a.score_onset_beats, window_end_of(a.perf_onset_sec, first, &cfg.window)))
        .collect();
    asynchrony_metrics(&estimated, &truth)
}
