//! Slow, straightforward reimplementations used as test oracles.
#![allow(dead_code)]

use accompanion_core::eval::{asynchrony_metrics, detection_times, window_end_of, AsynchronyReport};
use accompanion_core::follower::{frame_distance, FrameSequence, HmmConfig, HmmFollower, ScoreFollower};
use accompanion_core::midi::{events_from_notes, window_events, InputWindow, MidiEvent, WindowConfig};
use accompanion_core::score::{OnsetGrid, ReferencePerformance};
use accompanion_core::PitchSet;
use rand::Rng;

/// Forward algorithm over an explicit 2n x 2n transition matrix, in
/// probability space, with the same hard-assignment tempo filter.
pub struct DenseHmm {
    pub cfg: HmmConfig,
    pub onsets: Vec<f64>,
    pub expected: Vec<PitchSet>,
    pub matrix: Vec<Vec<f64>>,
    pub belief: Vec<f64>,
    pub beat_period: f64,
    pub variance: f64,
    pub last_end: Option<f64>,
    pub last_matched: Option<(usize, f64)>,
    pub reported: usize,
}

pub fn gaussian(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

pub fn pitch_probability(expected: PitchSet, observed: PitchSet, q_match: f64, q_spur: f64) -> f64 {
    let mut p = 1.0;
    for pitch in 0..128u8 {
        p *= match (expected.contains(pitch), observed.contains(pitch)) {
            (true, true) => q_match,
            (true, false) => 1.0 - q_match,
            (false, true) => q_spur,
            (false, false) => 1.0 - q_spur,
        };
    }
    p
}

/// Lowest index whose value is within a relative 1e-12 of the maximum.
pub fn argmax_low(values: &[f64]) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().position(|&v| v >= max - max.abs() * 1e-12).unwrap()
}

impl DenseHmm {
    pub fn new(chords: &[(f64, PitchSet)], cfg: HmmConfig, beat_period: f64) -> Self {
        let n = chords.len();
        let mut matrix = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            let k = cfg.k_skip.min(n - 1 - i);
            let raw: Vec<f64> = (0..k).map(|j| cfg.skip_decay.powi(j as i32)).collect();
            let total: f64 = raw.iter().sum();
            matrix[i][n + i] = cfg.p_insert;
            if k == 0 {
                matrix[i][i] = 1.0 - cfg.p_insert;
                matrix[n + i][n + i] = 1.0;
            } else {
                matrix[i][i] = cfg.p_self;
                matrix[n + i][n + i] = cfg.p_self;
                for (j, w) in raw.iter().enumerate() {
                    matrix[i][i + 1 + j] = (1.0 - cfg.p_self - cfg.p_insert) * w / total;
                    matrix[n + i][i + 1 + j] = (1.0 - cfg.p_self) * w / total;
                }
            }
        }
        let mut belief = vec![cfg.init_epsilon / (2 * n - 1) as f64; 2 * n];
        belief[0] = 1.0 - cfg.init_epsilon;
        DenseHmm {
            variance: cfg.tempo_initial_variance,
            cfg,
            onsets: chords.iter().map(|c| c.0).collect(),
            expected: chords.iter().map(|c| c.1).collect(),
            matrix,
            belief,
            beat_period,
            last_end: None,
            last_matched: None,
            reported: 0,
        }
    }

    fn n(&self) -> usize {
        self.onsets.len()
    }

    fn ioi_density(&self, from: usize, to: usize, ioi: f64) -> f64 {
        let n = self.n();
        if to >= n {
            return self.cfg.insert_ioi_density;
        }
        let predicted = self.beat_period * (self.onsets[to] - self.onsets[from % n]);
        gaussian(
            ioi,
            predicted,
            self.cfg.sigma_ioi_rel * predicted + self.cfg.sigma_ioi_abs,
        )
    }

    /// Processes one window; returns the MAP state for non-empty windows.
    pub fn step(&mut self, window: &InputWindow) -> Option<usize> {
        if window.onsets.is_empty() {
            return None;
        }
        let n = self.n();
        let mut observed = PitchSet::EMPTY;
        for o in &window.onsets {
            observed.insert(o.pitch);
        }
        let pitch: Vec<f64> = (0..2 * n)
            .map(|s| {
                let e = if s < n { self.expected[s] } else { PitchSet::EMPTY };
                pitch_probability(e, observed, self.cfg.q_match, self.cfg.q_spur)
            })
            .collect();
        let floor = self.cfg.likelihood_floor;
        let t = window.window_end_sec;
        let mut alpha = vec![0.0; 2 * n];
        match self.last_end {
            None => {
                for s in 0..2 * n {
                    alpha[s] = self.belief[s] * pitch[s].max(floor);
                }
            }
            Some(prev) => {
                for to in 0..2 * n {
                    for from in 0..2 * n {
                        let a = self.matrix[from][to];
                        if a > 0.0 && self.belief[from] > 0.0 {
                            let e = (pitch[to] * self.ioi_density(from, to, t - prev)).max(floor);
                            alpha[to] += self.belief[from] * a * e;
                        }
                    }
                }
            }
        }
        let total: f64 = alpha.iter().sum();
        self.belief = alpha.iter().map(|a| a / total).collect();
        self.last_end = Some(t);
        let map = argmax_low(&self.belief);
        if map < n {
            match self.last_matched {
                Some((prev, prev_t)) if map > prev => {
                    let span = self.onsets[map] - self.onsets[prev];
                    let b = self.beat_period;
                    let p = self.variance + self.cfg.tempo_process_noise;
                    let r = (self.cfg.sigma_ioi_rel * b * span + self.cfg.sigma_ioi_abs).powi(2);
                    let gain = p * span / (span * span * p + r);
                    self.beat_period = (b + gain * (t - prev_t - b * span)).clamp(0.05, 5.0);
                    self.variance = (1.0 - gain * span) * p;
                    self.last_matched = Some((map, t));
                }
                Some(_) => {}
                None => self.last_matched = Some((map, t)),
            }
        }
        self.reported = self.reported.max(map % n);
        Some(map)
    }
}

/// Leading windows without onsets are skipped, as the online follower does.
pub fn active_frames(windows: &[InputWindow]) -> (usize, Vec<PitchSet>) {
    let start = windows
        .iter()
        .position(|w| !w.onsets.is_empty())
        .unwrap_or(windows.len());
    (start, windows[start..].iter().map(|w| w.active).collect())
}

/// Unconstrained DTW with the online follower's step weights (diagonal 2,
/// horizontal and vertical 1), ending at the last cell of both sequences.
/// Returns, per input frame, the last reference frame on the optimal path.
pub fn full_dtw_path(input: &[PitchSet], reference: &[PitchSet]) -> Vec<usize> {
    full_dtw(input, reference).0
}

/// Optimal path (as in [`full_dtw_path`]) and its accumulated cost.
pub fn full_dtw(input: &[PitchSet], reference: &[PitchSet]) -> (Vec<usize>, f64) {
    let (t_len, m) = (input.len(), reference.len());
    // 0 diagonal, 1 vertical (from previous row), 2 horizontal
    let mut moves = vec![0u8; t_len * m];
    let mut prev = vec![f64::INFINITY; m];
    let mut row = vec![f64::INFINITY; m];
    for t in 0..t_len {
        for j in 0..m {
            let d = frame_distance(input[t], reference[j]);
            let (mut best, mut mv) = (f64::INFINITY, 0u8);
            if t == 0 && j == 0 {
                best = 2.0 * d;
            }
            if t > 0 && j > 0 && prev[j - 1] + 2.0 * d < best {
                best = prev[j - 1] + 2.0 * d;
                mv = 0;
            }
            if t > 0 && prev[j] + d < best {
                best = prev[j] + d;
                mv = 1;
            }
            if j > 0 && row[j - 1] + d < best {
                best = row[j - 1] + d;
                mv = 2;
            }
            row[j] = best;
            moves[t * m + j] = mv;
        }
        std::mem::swap(&mut prev, &mut row);
    }
    let total = prev[m - 1];
    let mut last = vec![0usize; t_len];
    let (mut t, mut j) = (t_len - 1, m - 1);
    let mut seen = vec![false; t_len];
    loop {
        if !seen[t] {
            last[t] = j;
            seen[t] = true;
        }
        if t == 0 && j == 0 {
            break;
        }
        match moves[t * m + j] {
            0 => {
                t -= 1;
                j -= 1;
            }
            1 => t -= 1,
            _ => j -= 1,
        }
    }
    (last, total)
}

/// Offline ensemble: full DTW per reference, mean position per input
/// window, kept monotone. Scored with the same detection rule as the
/// online experiment.
pub fn dtw_oracle_report(
    test: &ReferencePerformance,
    references: &[FrameSequence],
    grid: &OnsetGrid,
) -> AsynchronyReport {
    let cfg = WindowConfig::default();
    let events = events_from_notes(test.notes());
    let first = events[0].timestamp_sec;
    let windows = window_events(events, cfg).unwrap();
    let (start, frames) = active_frames(&windows);
    let per_ref: Vec<Vec<f64>> = references
        .iter()
        .map(|r| {
            let path = full_dtw_path(&frames, &r.frames);
            let mut pos = r.frame_to_score(0).min(grid.onsets[0]);
            path.iter()
                .map(|&j| {
                    pos = pos.max(r.frame_to_score(j));
                    pos
                })
                .collect()
        })
        .collect();
    let initial = references
        .iter()
        .map(|r| r.frame_to_score(0).min(grid.onsets[0]))
        .sum::<f64>()
        / references.len() as f64;
    let mut pos = initial;
    let trace: Vec<(f64, f64)> = windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if i >= start {
                let k = i - start;
                let mean = per_ref.iter().map(|p| p[k]).sum::<f64>() / per_ref.len() as f64;
                pos = pos.max(mean);
            }
            (w.window_end_sec, pos)
        })
        .collect();
    let estimated: Vec<(f64, f64)> = grid
        .onsets
        .iter()
        .copied()
        .zip(detection_times(&trace, &grid.onsets))
        .collect();
    let truth: Vec<(f64, f64)> = test
        .alignment()
        .iter()
        .map(|a| (a.score_onset_beats, window_end_of(a.perf_onset_sec, first, &cfg)))
        .collect();
    asynchrony_metrics(&estimated, &truth).unwrap()
}

pub fn set(pitches: &[u8]) -> PitchSet {
    pitches.iter().copied().collect()
}

pub fn windows_for(notes: &[(f64, &[u8])]) -> Vec<InputWindow> {
    let mut events = Vec::new();
    for &(t, pitches) in notes {
        for &p in pitches {
            events.push(MidiEvent::note_on(p, 80, t));
            events.push(MidiEvent::note_off(p, t + 0.2));
        }
    }
    events.sort_by(|a, b| a.timestamp_sec.total_cmp(&b.timestamp_sec));
    window_events(events, WindowConfig::default()).unwrap()
}

/// Runs the follower and the dense oracle side by side; returns the MAP
/// states of the non-empty windows.
pub fn compare(chords: &[(f64, PitchSet)], windows: &[InputWindow], beat_period: f64) -> Vec<usize> {
    let cfg = HmmConfig::default();
    let mut fast = HmmFollower::from_chords(chords.to_vec(), cfg.clone(), beat_period).unwrap();
    let mut dense = DenseHmm::new(chords, cfg, beat_period);
    let mut maps = Vec::new();
    for w in windows {
        let est = fast.step(w);
        let map = dense.step(w);
        let state = fast.state();
        let sum: f64 = state.belief.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "belief sums to {sum}");
        for (a, b) in state.belief.iter().zip(&dense.belief) {
            assert!((a - b).abs() < 1e-9, "belief {a} vs {b}");
        }
        if let Some(map) = map {
            assert_eq!(argmax_low(&state.belief), map);
            maps.push(map);
        }
        assert_eq!(state.last_matched.map(|m| m.0), dense.last_matched.map(|m| m.0));
        assert!((state.kalman_beat_period - dense.beat_period).abs() < 1e-9);
        assert_eq!(state.last_reported_onset_index, dense.reported);
        assert_eq!(est.onset_index, Some(dense.reported));
    }
    maps
}

/// Random score of at most 8 chords and a stream of at most 20 played
/// chords, mostly drawn from the score.
pub fn random_hmm_case(rng: &mut impl Rng) -> (Vec<(f64, PitchSet)>, Vec<InputWindow>, f64) {
    let n = rng.random_range(1..=8);
    let mut onset = 0.0;
    let chords: Vec<(f64, PitchSet)> = (0..n)
        .map(|_| {
            let size = rng.random_range(1..=3);
            let pitches: Vec<u8> = (0..size).map(|_| rng.random_range(55..80)).collect();
            let c = (onset, set(&pitches));
            onset += [0.5, 1.0, 1.5, 2.0][rng.random_range(0..4)];
            c
        })
        .collect();
    let count = rng.random_range(1..=20);
    let mut t = 0.0;
    let played: Vec<(f64, Vec<u8>)> = (0..count)
        .map(|_| {
            t += rng.random_range(0.05..1.2);
            let pitches = if rng.random_bool(0.7) {
                let c = chords[rng.random_range(0..n)].1;
                c.iter().collect()
            } else {
                let size = rng.random_range(1..=3);
                (0..size).map(|_| rng.random_range(50..85)).collect()
            };
            (t, pitches)
        })
        .collect();
    let refs: Vec<(f64, &[u8])> = played.iter().map(|(t, p)| (*t, p.as_slice())).collect();
    (chords, windows_for(&refs), rng.random_range(0.3..0.8))
}
