//! Hidden Markov score follower with a scalar Kalman filter on the beat
//! period.
//!
//! Discrete states are one match state per solo onset followed by one
//! insertion state per onset (state `n + i` hosts extra notes played after
//! onset `i`). Inference is the forward algorithm in log space. The tempo
//! filter is updated with the MAP state only (hard assignment).

use serde::{Deserialize, Serialize};

use super::{ScoreFollower, ScorePositionEstimate};
use crate::error::{Error, Result};
use crate::midi::InputWindow;
use crate::pitch::PitchSet;
use crate::score::{build_onset_grid, OnsetGrid, Part, Score};
use crate::tempo::{clamp_beat_period, DEFAULT_BEAT_PERIOD};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Relative tolerance under which two beliefs count as tied for the MAP state;
/// the lower state index wins a tie.
pub(crate) const MAP_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmConfig {
    /// Stay on the same onset (and loop on an insertion state).
    pub p_self: f64,
    /// Move from an onset into its insertion state.
    pub p_insert: f64,
    /// Longest forward jump, in onsets.
    pub k_skip: usize,
    /// Ratio between the probabilities of successive jump lengths.
    pub skip_decay: f64,
    pub q_match: f64,
    pub q_spur: f64,
    /// IOI standard deviation is `sigma_ioi_rel * predicted + sigma_ioi_abs`.
    pub sigma_ioi_rel: f64,
    pub sigma_ioi_abs: f64,
    /// IOI density (1/s) for transitions into insertion states.
    pub insert_ioi_density: f64,
    pub tempo_process_noise: f64,
    pub tempo_initial_variance: f64,
    /// Initial belief mass spread over all states but the first match state.
    pub init_epsilon: f64,
    pub likelihood_floor: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig {
            p_self: 0.5,
            p_insert: 0.05,
            k_skip: 4,
            skip_decay: 0.1,
            q_match: 0.95,
            q_spur: 0.02,
            sigma_ioi_rel: 0.2,
            sigma_ioi_abs: 0.02,
            insert_ioi_density: 1.0,
            tempo_process_noise: 4e-4,
            tempo_initial_variance: 0.01,
            init_epsilon: 0.01,
            likelihood_floor: 1e-300,
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "follower.hmm.{name} must lie in (0, 1), got {v}"
        )))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("follower.hmm.{name} must be positive, got {v}")))
    }
}

impl HmmConfig {
    pub fn validate(&self) -> Result<()> {
        open_unit("p_self", self.p_self)?;
        open_unit("p_insert", self.p_insert)?;
        open_unit("q_match", self.q_match)?;
        open_unit("q_spur", self.q_spur)?;
        open_unit("init_epsilon", self.init_epsilon)?;
        open_unit("likelihood_floor", self.likelihood_floor)?;
        if self.p_self + self.p_insert >= 1.0 {
            return Err(Error::Config("follower.hmm.p_self + p_insert must be below 1".into()));
        }
        if self.k_skip == 0 {
            return Err(Error::Config("follower.hmm.k_skip must be at least 1".into()));
        }
        positive("skip_decay", self.skip_decay)?;
        positive("sigma_ioi_abs", self.sigma_ioi_abs)?;
        positive("insert_ioi_density", self.insert_ioi_density)?;
        positive("tempo_process_noise", self.tempo_process_noise)?;
        positive("tempo_initial_variance", self.tempo_initial_variance)?;
        if !(self.sigma_ioi_rel.is_finite() && self.sigma_ioi_rel >= 0.0) {
            return Err(Error::Config("follower.hmm.sigma_ioi_rel must be non-negative".into()));
        }
        Ok(())
    }

    /// Normalized geometric weights for jumps of 1..=min(k_skip, available)
    /// onsets.
    pub fn skip_weights(&self, available: usize) -> Vec<f64> {
        let k = self.k_skip.min(available);
        let raw: Vec<f64> = (0..k).map(|j| self.skip_decay.powi(j as i32)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// IOI standard deviation for a predicted IOI.
    pub fn sigma_ioi(&self, predicted: f64) -> f64 {
        self.sigma_ioi_rel * predicted + self.sigma_ioi_abs
    }
}

/// Log-probability of observing `observed` struck pitches from a state that
/// expects `expected`, as a product over all 128 pitches.
pub fn pitch_log_likelihood(expected: PitchSet, observed: PitchSet, q_match: f64, q_spur: f64) -> f64 {
    let hit = expected.intersection(observed).len() as f64;
    let miss = expected.difference(observed).len() as f64;
    let spur = observed.difference(expected).len() as f64;
    let silent = 128.0 - expected.union(observed).len() as f64;
    hit * q_match.ln() + miss * (1.0 - q_match).ln() + spur * q_spur.ln() + silent * (1.0 - q_spur).ln()
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Index of the largest value; values within [`MAP_TIE_TOLERANCE`] of the
/// maximum resolve to the lowest index.
pub(crate) fn map_index(values: &[f64]) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .position(|&v| v >= max - max.abs() * MAP_TIE_TOLERANCE)
        .unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmmState {
    /// Posterior over `2n` states (match states first).
    pub belief: Vec<f64>,
    pub kalman_beat_period: f64,
    pub kalman_variance: f64,
    /// End of the last non-empty window.
    pub last_window_end_sec: Option<f64>,
    pub last_reported_onset_index: usize,
    /// Last onset the tempo filter was updated with, and its time.
    pub last_matched: Option<(usize, f64)>,
    pub entropy: f64,
}

#[derive(Clone, Debug)]
pub struct HmmFollower {
    cfg: HmmConfig,
    grid: OnsetGrid,
    expected: Vec<PitchSet>,
    transitions: Vec<Vec<(usize, f64)>>,
    state: HmmState,
    estimate: ScorePositionEstimate,
}

impl HmmFollower {
    /// Follower over the solo part of `score`, starting at `initial_bpm`.
    pub fn new(score: &Score, cfg: HmmConfig, initial_bpm: f64) -> Result<Self> {
        build_onset_grid(score, Part::Solo)?;
        let chords = score
            .chords(Part::Solo)
            .into_iter()
            .map(|c| (c.onset_beats, c.pitches))
            .collect();
        if !(initial_bpm.is_finite() && initial_bpm > 0.0) {
            return Err(Error::Config(format!(
                "initial bpm must be positive, got {initial_bpm}"
            )));
        }
        Self::from_chords(chords, cfg, 60.0 / initial_bpm)
    }

    /// Follower over explicit `(onset_beats, pitches)` chords sorted by onset.
    pub fn from_chords(chords: Vec<(f64, PitchSet)>, cfg: HmmConfig, beat_period: f64) -> Result<Self> {
        cfg.validate()?;
        if chords.is_empty() {
            return Err(Error::EmptyPart(Part::Solo.name()));
        }
        let grid = OnsetGrid::from_onsets(chords.iter().map(|c| c.0).collect());
        if grid.len() != chords.len() {
            return Err(Error::MalformedScore("solo chords must have distinct onsets".into()));
        }
        let expected: Vec<PitchSet> = chords.iter().map(|c| c.1).collect();
        let n = expected.len();
        let transitions = build_transitions(&cfg, n);

        let mut belief = vec![0.0; 2 * n];
        if n == 1 {
            belief[0] = 1.0 - cfg.init_epsilon;
            belief[1] = cfg.init_epsilon;
        } else {
            let spread = cfg.init_epsilon / (2 * n - 1) as f64;
            belief.fill(spread);
            belief[0] = 1.0 - cfg.init_epsilon;
        }
        let beat_period = if beat_period.is_finite() && beat_period > 0.0 {
            clamp_beat_period(beat_period)
        } else {
            DEFAULT_BEAT_PERIOD
        };
        let state = HmmState {
            entropy: entropy(&belief),
            belief,
            kalman_beat_period: beat_period,
            kalman_variance: cfg.tempo_initial_variance,
            last_window_end_sec: None,
            last_reported_onset_index: 0,
            last_matched: None,
        };
        let estimate = ScorePositionEstimate::start(grid.onsets[0]);
        Ok(HmmFollower {
            cfg,
            grid,
            expected,
            transitions,
            state,
            estimate,
        })
    }

    pub fn state(&self) -> &HmmState {
        &self.state
    }

    pub fn config(&self) -> &HmmConfig {
        &self.cfg
    }

    pub fn num_onsets(&self) -> usize {
        self.expected.len()
    }

    fn host(&self, state: usize) -> usize {
        state % self.expected.len()
    }

    fn log_ioi(&self, from: usize, to: usize, ioi: f64) -> f64 {
        let n = self.expected.len();
        if to >= n {
            return self.cfg.insert_ioi_density.ln();
        }
        let span = self.grid.onsets[to] - self.grid.onsets[self.host(from)];
        let predicted = self.state.kalman_beat_period * span;
        let sigma = self.cfg.sigma_ioi(predicted);
        let z = (ioi - predicted) / sigma;
        -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
    }

    fn update_tempo(&mut self, onset: usize, time: f64) {
        if let Some((prev, prev_time)) = self.state.last_matched {
            if onset <= prev {
                return;
            }
            let span = self.grid.onsets[onset] - self.grid.onsets[prev];
            let observed = time - prev_time;
            let b = self.state.kalman_beat_period;
            let p = self.state.kalman_variance + self.cfg.tempo_process_noise;
            let r = self.cfg.sigma_ioi(b * span).powi(2);
            let gain = p * span / (span * span * p + r);
            self.state.kalman_beat_period = clamp_beat_period(b + gain * (observed - b * span));
            self.state.kalman_variance = (1.0 - gain * span) * p;
        }
        self.state.last_matched = Some((onset, time));
    }
}

fn entropy(belief: &[f64]) -> f64 {
    -belief.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

fn build_transitions(cfg: &HmmConfig, n: usize) -> Vec<Vec<(usize, f64)>> {
    let mut out = vec![Vec::new(); 2 * n];
    for i in 0..n {
        let forward = cfg.skip_weights(n - 1 - i);
        let mut from_match = vec![(i, cfg.p_self), (n + i, cfg.p_insert)];
        let mut from_insert = vec![(n + i, cfg.p_self)];
        if forward.is_empty() {
            // nowhere to go: the forward mass stays put
            from_match[0].1 = 1.0 - cfg.p_insert;
            from_insert[0].1 = 1.0;
        } else {
            let advance = 1.0 - cfg.p_self - cfg.p_insert;
            for (k, w) in forward.iter().enumerate() {
                from_match.push((i + 1 + k, advance * w));
                from_insert.push((i + 1 + k, (1.0 - cfg.p_self) * w));
            }
        }
        out[i] = from_match;
        out[n + i] = from_insert;
    }
    out
}

impl ScoreFollower for HmmFollower {
    fn step(&mut self, window: &InputWindow) -> ScorePositionEstimate {
        let t = window.window_end_sec;
        self.estimate.timestamp_sec = t;
        if window.is_empty() {
            return self.estimate;
        }
        let n = self.expected.len();
        let observed = window.pitches();
        let floor = self.cfg.likelihood_floor.ln();
        let log_pitch: Vec<f64> = (0..2 * n)
            .map(|s| {
                let expected = if s < n { self.expected[s] } else { PitchSet::EMPTY };
                pitch_log_likelihood(expected, observed, self.cfg.q_match, self.cfg.q_spur)
            })
            .collect();

        let mut log_alpha = vec![f64::NEG_INFINITY; 2 * n];
        match self.state.last_window_end_sec {
            None => {
                for s in 0..2 * n {
                    log_alpha[s] = self.state.belief[s].ln() + log_pitch[s].max(floor);
                }
            }
            Some(prev) => {
                let ioi = t - prev;
                for from in 0..2 * n {
                    let b = self.state.belief[from];
                    if b <= 0.0 {
                        continue;
                    }
                    let lb = b.ln();
                    for &(to, p) in &self.transitions[from] {
                        let emission = (log_pitch[to] + self.log_ioi(from, to, ioi)).max(floor);
                        log_alpha[to] = log_add(log_alpha[to], lb + p.ln() + emission);
                    }
                }
            }
        }
        let total = log_alpha.iter().copied().fold(f64::NEG_INFINITY, log_add);
        for (b, la) in self.state.belief.iter_mut().zip(&log_alpha) {
            *b = (la - total).exp();
        }
        self.state.last_window_end_sec = Some(t);
        self.state.entropy = entropy(&self.state.belief);

        let map = map_index(&self.state.belief);
        let confidence = self.state.belief[map];
        if map < n {
            self.update_tempo(map, t);
        }
        let reported = self.host(map).max(self.state.last_reported_onset_index);
        self.state.last_reported_onset_index = reported;
        log::trace!(
            "hmm t={t:.3} map={map} onset={reported} p={confidence:.4} H={:.4} b={:.4}",
            self.state.entropy,
            self.state.kalman_beat_period
        );
        self.estimate = ScorePositionEstimate {
            position_beats: self.grid.onsets[reported],
            onset_index: Some(reported),
            confidence,
            timestamp_sec: t,
            end_of_reference: false,
        };
        self.estimate
    }

    fn estimate(&self) -> ScorePositionEstimate {
        self.estimate
    }

    fn grid(&self) -> &OnsetGrid {
        &self.grid
    }
}
