use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::score::TempoCurve;
use crate::tempo::{TempoModel, TempoObservation, TempoParams, TempoVariant};

/// One performance of a piece: its solo onsets and the reference curves
/// LTE may draw on.
#[derive(Clone, Debug, PartialEq)]
pub struct TempoTrial {
    /// (score onset, performed onset), strictly increasing in both.
    pub onsets: Vec<(f64, f64)>,
    /// True first beat period, the models' starting point.
    pub tau0: f64,
    pub curves: Vec<TempoCurve>,
}

impl TempoTrial {
    pub fn new(onsets: Vec<(f64, f64)>, curves: Vec<TempoCurve>) -> Result<Self> {
        if onsets.len() < 2 {
            return Err(Error::Experiment("a tempo trial needs at least two onsets".into()));
        }
        if onsets.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 <= w[0].1) {
            return Err(Error::Experiment("trial onsets must increase in score and time".into()));
        }
        let tau0 = (onsets[1].1 - onsets[0].1) / (onsets[1].0 - onsets[0].0);
        Ok(TempoTrial { onsets, tau0, curves })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TempoErrorReport {
    pub params: TempoParams,
    pub mean_abs_onset_error_ms: f64,
    pub mean_abs_tempo_error_ms_per_beat: f64,
    pub predictions: usize,
}

impl TempoErrorReport {
    pub fn variant(&self) -> TempoVariant {
        self.params.variant()
    }

    /// Lower onset error first; equal errors fall back to the smaller
    /// parameter vector.
    pub fn selection_order(&self, other: &Self) -> Ordering {
        self.mean_abs_onset_error_ms
            .total_cmp(&other.mean_abs_onset_error_ms)
            .then_with(|| compare_params(&self.params, &other.params))
    }
}

impl fmt::Display for TempoErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: onset {:.1} ms, tempo {:.1} ms/beat ({})",
            self.variant(),
            self.mean_abs_onset_error_ms,
            self.mean_abs_tempo_error_ms_per_beat,
            self.params
        )
    }
}

/// Lexicographic order over parameter values.
pub fn compare_params(a: &TempoParams, b: &TempoParams) -> Ordering {
    let (a, b) = (a.values(), b.values());
    for (x, y) in a.iter().zip(&b) {
        match x.1.total_cmp(&y.1) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Sums of absolute onset (ms) and tempo (ms/beat) errors over one trial.
fn trial_errors(trial: &TempoTrial, params: TempoParams) -> Result<(f64, f64, usize)> {
    let mut model = TempoModel::new(params, trial.tau0)?.with_reference_curves(trial.curves.clone());
    let (mut onset, mut tempo) = (0.0, 0.0);
    let on = &trial.onsets;
    for n in 0..on.len() - 1 {
        let (s, o) = on[n];
        let (s_next, o_next) = on[n + 1];
        let mut obs = TempoObservation::first(o, s, s_next - s);
        if n > 0 {
            obs = obs.with_previous(s - on[n - 1].0, o - on[n - 1].1);
        }
        let p = model.update(&obs);
        let tau_next = (o_next - o) / (s_next - s);
        onset += (p.o_hat_next - o_next).abs() * 1000.0;
        tempo += (p.b_next - tau_next).abs() * 1000.0;
    }
    Ok((onset, tempo, on.len() - 1))
}

/// Feeds every trial's onsets to a fresh model and averages the one-step
/// prediction errors over all predictions.
pub fn run_tempo_experiment(trials: &[TempoTrial], params: TempoParams) -> Result<TempoErrorReport> {
    let (mut onset, mut tempo, mut n) = (0.0, 0.0, 0);
    for t in trials {
        let (o, b, k) = trial_errors(t, params)?;
        onset += o;
        tempo += b;
        n += k;
    }
    if n == 0 {
        return Err(Error::Experiment("no predictions to evaluate".into()));
    }
    Ok(TempoErrorReport {
        params,
        mean_abs_onset_error_ms: onset / n as f64,
        mean_abs_tempo_error_ms_per_beat: tempo / n as f64,
        predictions: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n: usize, bp: f64) -> TempoTrial {
        TempoTrial::new((0..n).map(|i| (i as f64, 1.0 + bp * i as f64)).collect(), Vec::new()).unwrap()
    }

    #[test]
    fn reactive_constant_tempo_is_exact() {
        let r = run_tempo_experiment(&[constant(50, 0.6)], TempoParams::Reactive).unwrap();
        assert!(r.mean_abs_onset_error_ms < 1e-9);
        assert!(r.mean_abs_tempo_error_ms_per_beat < 1e-9);
        assert_eq!(r.predictions, 49);
    }

    #[test]
    fn tau0_is_first_beat_period() {
        let t = TempoTrial::new(vec![(0.0, 1.0), (2.0, 2.2), (3.0, 2.8)], Vec::new()).unwrap();
        assert!((t.tau0 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn invalid_trials() {
        assert!(TempoTrial::new(vec![(0.0, 1.0)], Vec::new()).is_err());
        assert!(TempoTrial::new(vec![(0.0, 1.0), (1.0, 1.0)], Vec::new()).is_err());
    }

    #[test]
    fn tie_break_prefers_smaller_params() {
        let mk = |eta| TempoErrorReport {
            params: TempoParams::MovingAverage { eta },
            mean_abs_onset_error_ms: 5.0,
            mean_abs_tempo_error_ms_per_beat: 1.0,
            predictions: 1,
        };
        assert_eq!(mk(0.2).selection_order(&mk(0.3)), Ordering::Less);
        assert_eq!(mk(0.3).selection_order(&mk(0.2)), Ordering::Greater);
    }
}
