//! Synchronization models predicting the next soloist onset and the beat
//! period from the onsets observed so far.
//!
//! Notation: `o` is an observed onset, `ô` its prediction, `A = ô - o` the
//! asynchrony, `b` the beat period (s/beat) and `τ = δperf / δscore` the
//! beat period implied by the last performed IOI.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::TempoCurve;

pub const MIN_BEAT_PERIOD: f64 = 0.05;
pub const MAX_BEAT_PERIOD: f64 = 5.0;
/// 120 bpm.
pub const DEFAULT_BEAT_PERIOD: f64 = 0.5;

/// Saturates a beat period to `[MIN_BEAT_PERIOD, MAX_BEAT_PERIOD]`.
pub fn clamp_beat_period(b: f64) -> f64 {
    if b.is_nan() {
        return DEFAULT_BEAT_PERIOD;
    }
    b.clamp(MIN_BEAT_PERIOD, MAX_BEAT_PERIOD)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TempoVariant {
    R,
    MA,
    L,
    LTE,
    JADAM,
    KT,
}

impl TempoVariant {
    pub const ALL: [TempoVariant; 6] = [
        TempoVariant::R,
        TempoVariant::MA,
        TempoVariant::L,
        TempoVariant::LTE,
        TempoVariant::JADAM,
        TempoVariant::KT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TempoVariant::R => "R",
            TempoVariant::MA => "MA",
            TempoVariant::L => "L",
            TempoVariant::LTE => "LTE",
            TempoVariant::JADAM => "JADAM",
            TempoVariant::KT => "KT",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(|v| v.name()).join(", ")
    }

    pub fn default_params(self) -> TempoParams {
        match self {
            TempoVariant::R => TempoParams::Reactive,
            TempoVariant::MA => TempoParams::MovingAverage { eta: 0.5 },
            TempoVariant::L => TempoParams::Linear { eta_o: 0.5, eta_b: 0.2 },
            TempoVariant::LTE => TempoParams::Lte { eta_o: 0.5, eta_b: 0.2 },
            TempoVariant::JADAM => TempoParams::Jadam {
                eta_o: 0.5,
                eta_b: 0.5,
                eta_a: 0.5,
            },
            TempoVariant::KT => TempoParams::Kalman {
                alpha: 1.0,
                beta: 1e-4,
                gamma: 1.0,
                lambda: 1e-2,
                v0: 1.0,
            },
        }
    }
}

impl fmt::Display for TempoVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TempoVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TempoVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown tempo variant `{s}` (valid: {})",
                    TempoVariant::valid_names()
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TempoParams {
    Reactive,
    MovingAverage {
        eta: f64,
    },
    Linear {
        eta_o: f64,
        eta_b: f64,
    },
    Lte {
        eta_o: f64,
        eta_b: f64,
    },
    Jadam {
        eta_o: f64,
        eta_b: f64,
        eta_a: f64,
    },
    Kalman {
        alpha: f64,
        beta: f64,
        gamma: f64,
        lambda: f64,
        v0: f64,
    },
}

impl TempoParams {
    pub fn variant(&self) -> TempoVariant {
        match self {
            TempoParams::Reactive => TempoVariant::R,
            TempoParams::MovingAverage { .. } => TempoVariant::MA,
            TempoParams::Linear { .. } => TempoVariant::L,
            TempoParams::Lte { .. } => TempoVariant::LTE,
            TempoParams::Jadam { .. } => TempoVariant::JADAM,
            TempoParams::Kalman { .. } => TempoVariant::KT,
        }
    }

    /// Parameter names and values, in a fixed order.
    pub fn values(&self) -> Vec<(&'static str, f64)> {
        match *self {
            TempoParams::Reactive => Vec::new(),
            TempoParams::MovingAverage { eta } => vec![("eta", eta)],
            TempoParams::Linear { eta_o, eta_b } | TempoParams::Lte { eta_o, eta_b } => {
                vec![("eta_o", eta_o), ("eta_b", eta_b)]
            }
            TempoParams::Jadam { eta_o, eta_b, eta_a } => vec![("eta_o", eta_o), ("eta_b", eta_b), ("eta_a", eta_a)],
            TempoParams::Kalman {
                alpha,
                beta,
                gamma,
                lambda,
                v0,
            } => vec![
                ("alpha", alpha),
                ("beta", beta),
                ("gamma", gamma),
                ("lambda", lambda),
                ("v0", v0),
            ],
        }
    }

    /// Builds the parameters of `variant` from its defaults and `overrides`
    /// (keys as listed by [`TempoParams::values`]).
    pub fn with_overrides(variant: TempoVariant, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut values: BTreeMap<&str, f64> = variant.default_params().values().into_iter().collect();
        for (key, v) in overrides {
            match values.get_mut(key.as_str()) {
                Some(slot) => *slot = *v,
                None => {
                    let known: Vec<&str> = values.keys().copied().collect();
                    return Err(Error::Config(format!(
                        "tempo.params.{key} does not apply to {variant} (accepted: [{}])",
                        known.join(", ")
                    )));
                }
            }
        }
        let g = |k: &str| values[k];
        let params = match variant {
            TempoVariant::R => TempoParams::Reactive,
            TempoVariant::MA => TempoParams::MovingAverage { eta: g("eta") },
            TempoVariant::L => TempoParams::Linear {
                eta_o: g("eta_o"),
                eta_b: g("eta_b"),
            },
            TempoVariant::LTE => TempoParams::Lte {
                eta_o: g("eta_o"),
                eta_b: g("eta_b"),
            },
            TempoVariant::JADAM => TempoParams::Jadam {
                eta_o: g("eta_o"),
                eta_b: g("eta_b"),
                eta_a: g("eta_a"),
            },
            TempoVariant::KT => TempoParams::Kalman {
                alpha: g("alpha"),
                beta: g("beta"),
                gamma: g("gamma"),
                lambda: g("lambda"),
                v0: g("v0"),
            },
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.values() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "tempo.params.{name} must be a non-negative number, got {v}"
                )));
            }
        }
        if let TempoParams::Kalman { lambda, v0, .. } = self {
            if *lambda <= 0.0 || *v0 <= 0.0 {
                return Err(Error::Config("tempo.params.lambda and v0 must be positive".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for TempoParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.values().iter().map(|(k, v)| format!("{k}={v}")).collect();
        if parts.is_empty() {
            f.write_str("-")
        } else {
            f.write_str(&parts.join(" "))
        }
    }
}

/// IOI between the previous observed onset and this one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreviousSpan {
    pub delta_score: f64,
    pub delta_perf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TempoObservation {
    /// Observed onset o_n (seconds).
    pub onset_sec: f64,
    /// Score onset of this observation (beats).
    pub score_onset_beats: f64,
    /// Score IOI to the onset being predicted (beats).
    pub delta_score_next: f64,
    /// `None` for the first observation.
    pub previous: Option<PreviousSpan>,
}

impl TempoObservation {
    pub fn first(onset_sec: f64, score_onset_beats: f64, delta_score_next: f64) -> Self {
        TempoObservation {
            onset_sec,
            score_onset_beats,
            delta_score_next,
            previous: None,
        }
    }

    pub fn with_previous(mut self, delta_score: f64, delta_perf: f64) -> Self {
        self.previous = Some(PreviousSpan {
            delta_score,
            delta_perf,
        });
        self
    }

    /// τ_n, the beat period implied by the last IOI.
    pub fn tau(&self) -> Option<f64> {
        self.previous
            .filter(|p| p.delta_score > 0.0)
            .map(|p| p.delta_perf / p.delta_score)
    }

    pub fn score_onset_next(&self) -> f64 {
        self.score_onset_beats + self.delta_score_next
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TempoState {
    /// Beat period b_n.
    pub b: f64,
    /// Prediction ô for the onset at `o_hat_score`; `None` before the first
    /// observation.
    pub o_hat: Option<f64>,
    pub o_hat_score: f64,
    /// τ of the previous update (JADAM).
    pub tau_prev: Option<f64>,
    /// Posterior beat-period variance (KT).
    pub v_hat: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TempoPrediction {
    pub o_hat_next: f64,
    pub b_next: f64,
    /// A_n of the observation just processed.
    pub asynchrony: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TempoModel {
    params: TempoParams,
    tau0: f64,
    curves: Vec<TempoCurve>,
    pub state: TempoState,
}

impl TempoModel {
    pub fn new(params: TempoParams, tau0: f64) -> Result<Self> {
        params.validate()?;
        if !(tau0.is_finite() && tau0 > 0.0) {
            return Err(Error::Config(format!(
                "initial beat period must be positive, got {tau0}"
            )));
        }
        let v0 = match params {
            TempoParams::Kalman { v0, .. } => v0,
            _ => 1.0,
        };
        let tau0 = clamp_beat_period(tau0);
        Ok(TempoModel {
            params,
            tau0,
            curves: Vec::new(),
            state: TempoState {
                b: tau0,
                o_hat: None,
                o_hat_score: 0.0,
                tau_prev: None,
                v_hat: v0,
            },
        })
    }

    /// Reference tempo curves for LTE; φ is their mean.
    pub fn with_reference_curves(mut self, curves: Vec<TempoCurve>) -> Self {
        self.curves = curves;
        self
    }

    pub fn params(&self) -> TempoParams {
        self.params
    }

    pub fn variant(&self) -> TempoVariant {
        self.params.variant()
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn beat_period(&self) -> f64 {
        self.state.b
    }

    /// Current prediction and the score onset it refers to.
    pub fn prediction(&self) -> Option<(f64, f64)> {
        self.state.o_hat.map(|o| (o, self.state.o_hat_score))
    }

    /// φ at a score onset, if any reference curve is configured.
    pub fn expected_beat_period(&self, score_onset: f64) -> Option<f64> {
        if self.curves.is_empty() {
            return None;
        }
        let sum: f64 = self.curves.iter().map(|c| c.beat_period_at(score_onset)).sum();
        Some(sum / self.curves.len() as f64)
    }

    /// Restarts from τ_0.
    pub fn reset(&mut self) {
        *self = TempoModel::new(self.params, self.tau0)
            .expect("parameters were validated")
            .with_reference_curves(std::mem::take(&mut self.curves));
    }

    /// Processes one observed onset.
    pub fn update(&mut self, obs: &TempoObservation) -> TempoPrediction {
        let o = obs.onset_sec;
        let b = self.state.b;
        // ô_n; onsets skipped since the last prediction extend it at b_n
        let o_hat = match self.state.o_hat {
            None => o,
            Some(p) => p + b * (obs.score_onset_beats - self.state.o_hat_score),
        };
        let a = o_hat - o;
        let delta = obs.delta_score_next;
        let tau = obs.tau();

        let (o_next, b_next) = match self.params {
            TempoParams::Reactive => (o + b * delta, tau.unwrap_or(b)),
            TempoParams::MovingAverage { eta } => (o + b * delta, tau.map_or(b, |t| eta * b + (1.0 - eta) * t)),
            TempoParams::Linear { eta_o, eta_b } => (o_hat + b * delta - eta_o * a, linear_beat_period(b, a, eta_b)),
            TempoParams::Lte { eta_o, eta_b } => {
                let b_next = match self.expected_beat_period(obs.score_onset_next()) {
                    Some(phi) => phi - eta_b * a,
                    None => linear_beat_period(b, a, eta_b),
                };
                (o_hat + b * delta - eta_o * a, b_next)
            }
            TempoParams::Jadam { eta_o, eta_b, eta_a } => {
                let o_ad = o_hat + b * delta - eta_o * a;
                let b_next = b - eta_b * a;
                let tau_hat = match tau {
                    Some(t) => {
                        let t_prev = self.state.tau_prev.unwrap_or(t);
                        eta_b * (2.0 * t - t_prev) + (1.0 - eta_b) * t
                    }
                    None => b,
                };
                let o_an = o + tau_hat * delta;
                let a_hat = o_ad - o_an;
                (o_an - eta_a * a_hat, b_next)
            }
            TempoParams::Kalman {
                alpha,
                beta,
                gamma,
                lambda,
                ..
            } => {
                let b_next = match obs.previous {
                    Some(span) => {
                        let b_pred = alpha * b;
                        let v = gamma * gamma * self.state.v_hat + beta;
                        let a_hat = span.delta_perf - b_pred * span.delta_score;
                        let kappa = v * span.delta_score / (v * span.delta_score * span.delta_score + lambda);
                        self.state.v_hat = (1.0 - kappa * span.delta_score) * v;
                        b_pred + kappa * a_hat
                    }
                    None => b,
                };
                let b_next = clamp_beat_period(b_next);
                (o_hat + b_next * delta, b_next)
            }
        };
        if tau.is_some() {
            self.state.tau_prev = tau;
        }
        let b_next = clamp_beat_period(b_next);
        self.state.b = b_next;
        self.state.o_hat = Some(o_next);
        self.state.o_hat_score = obs.score_onset_next();
        TempoPrediction {
            o_hat_next: o_next,
            b_next,
            asynchrony: a,
        }
    }
}

fn linear_beat_period(b: f64, a: f64, eta_b: f64) -> f64 {
    if a < 0.0 {
        b - eta_b * a
    } else {
        b - 2.0 * eta_b * a
    }
}
