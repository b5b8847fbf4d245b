//! On-line time warping against score-aligned reference performances.
//!
//! Each input window is one row of a banded cost matrix; reference frames
//! are its columns. Accumulated costs use the symmetric step weights
//! (diagonal 2, horizontal and vertical 1), so dividing by `t + j + 2`
//! gives the mean local distance along the best path into a cell.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ScoreFollower, ScorePositionEstimate};
use crate::error::{Error, Result};
use crate::midi::{InputWindow, WindowConfig};
use crate::pitch::PitchSet;
use crate::score::{OnsetGrid, ReferencePerformance};

const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OltwConfig {
    /// Width of the cost band (context), in seconds.
    pub window_sec: f64,
    /// Largest reference advance per input frame, in seconds.
    pub step_sec: f64,
}

impl Default for OltwConfig {
    fn default() -> Self {
        OltwConfig {
            window_sec: 2.0,
            step_sec: 0.1,
        }
    }
}

impl OltwConfig {
    /// Band width and step size in frames of `frame_sec`.
    pub fn frames(&self, frame_sec: f64) -> Result<(usize, usize)> {
        let window = (self.window_sec / frame_sec).round();
        let step = (self.step_sec / frame_sec).round();
        if !(step >= 1.0 && window > step) {
            return Err(Error::Config(format!(
                "follower.oltw needs window_sec > step_sec >= one frame, got {} / {}",
                self.window_sec, self.step_sec
            )));
        }
        Ok((window as usize, step as usize))
    }
}

/// Local distance between two frames: Jaccard distance of the pitch sets.
pub fn frame_distance(a: PitchSet, b: PitchSet) -> f64 {
    a.jaccard_distance(b)
}

/// Reference performance as pitch-activity frames, with the map from frame
/// index to score position.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<PitchSet>,
    pub frame_sec: f64,
    /// Performance time at which frame 0 starts.
    pub anchor_sec: f64,
    /// `(frame, score onset)` pairs, strictly increasing in both.
    pub knots: Vec<(usize, f64)>,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame containing performance time `t`.
    pub fn frame_of(&self, t: f64) -> usize {
        let ns = crate::midi::to_ns(t - self.anchor_sec).max(0);
        (ns / crate::midi::to_ns(self.frame_sec)) as usize
    }

    /// Score position at reference frame `frame`: linear between knots,
    /// constant outside them.
    pub fn frame_to_score(&self, frame: usize) -> f64 {
        let k = &self.knots;
        let i = k.partition_point(|&(f, _)| f <= frame);
        if i == 0 {
            return k[0].1;
        }
        if i == k.len() {
            return k[k.len() - 1].1;
        }
        let (f0, s0) = k[i - 1];
        let (f1, s1) = k[i];
        s0 + (s1 - s0) * (frame - f0) as f64 / (f1 - f0) as f64
    }
}

/// Binary pitch-activity frames of a reference performance. Frame 0 starts
/// at the first onset rounded down to the frame grid; each note is active
/// in every frame its (capped) sounding interval overlaps. One silent frame
/// is kept after the last note.
pub fn featurize_reference(reference: &ReferencePerformance, cfg: &WindowConfig) -> FrameSequence {
    use crate::midi::{from_ns, to_ns};
    let width = to_ns(cfg.width_sec).max(1);
    let cap = to_ns(cfg.sustain_cap_sec);
    let notes = reference.notes();
    let first_ns = notes
        .iter()
        .map(|n| to_ns(n.onset_sec))
        .chain(reference.alignment().iter().map(|a| to_ns(a.perf_onset_sec)))
        .min()
        .unwrap_or(0);
    let anchor = first_ns.div_euclid(width) * width;

    let spans: Vec<(usize, usize, u8)> = notes
        .iter()
        .map(|n| {
            let on = to_ns(n.onset_sec) - anchor;
            let off = (to_ns(n.offset_sec()) - anchor).min(on + cap).max(on + 1);
            let first = (on / width) as usize;
            let end = ((off + width - 1) / width) as usize;
            (first, end, n.pitch)
        })
        .collect();
    let last = spans.iter().map(|s| s.1).max().unwrap_or(0);
    let mut frames = vec![PitchSet::EMPTY; last + 1];
    for (first, end, pitch) in spans {
        for f in &mut frames[first..end] {
            f.insert(pitch);
        }
    }

    let mut seq = FrameSequence {
        frames,
        frame_sec: from_ns(width),
        anchor_sec: from_ns(anchor),
        knots: Vec::new(),
    };
    for a in reference.alignment() {
        let frame = seq.frame_of(a.perf_onset_sec);
        match seq.knots.last_mut() {
            Some(last) if last.0 == frame => last.1 = a.score_onset_beats,
            _ => seq.knots.push((frame, a.score_onset_beats)),
        }
    }
    let needed = seq.knots.last().map_or(0, |k| k.0 + 1);
    if seq.frames.len() < needed {
        seq.frames.resize(needed, PitchSet::EMPTY);
    }
    seq
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    /// Consume input only.
    Input,
    /// Advance the reference only.
    Reference,
    Both,
}

/// One stored row of the cost matrix: columns `lo..=j` of input frame `t`.
#[derive(Clone, Debug)]
struct CostRow {
    t: usize,
    lo: usize,
    frame: PitchSet,
    cost: Vec<f64>,
}

impl CostRow {
    fn get(&self, k: usize) -> f64 {
        if k < self.lo {
            return f64::INFINITY;
        }
        self.cost.get(k - self.lo).copied().unwrap_or(f64::INFINITY)
    }
}

/// Streaming online time warping: the cost matrix is grown by rows
/// (input frames) and columns (reference frames) inside a band of the last
/// `band` rows and columns. After each input frame the direction is chosen
/// by where the normalized cost is lowest on the frontier (last row and
/// last column). Runs in either direction are capped at `step` frames.
#[derive(Clone, Debug)]
pub struct OltwFollower {
    reference: FrameSequence,
    grid: OnsetGrid,
    band: usize,
    step: usize,
    rows: VecDeque<CostRow>,
    /// Reference frontier.
    j: usize,
    /// Consecutive input frames without a reference advance.
    input_run: usize,
    /// Direction chosen after the last input frame; `Both` adds a column
    /// right after the next row.
    pending: Direction,
    estimate: ScorePositionEstimate,
}

impl OltwFollower {
    pub fn new(reference: FrameSequence, grid: OnsetGrid, cfg: &OltwConfig) -> Result<Self> {
        if reference.is_empty() || reference.knots.is_empty() {
            return Err(Error::Alignment("reference has no frames".into()));
        }
        if grid.is_empty() {
            return Err(Error::EmptyPart("solo"));
        }
        let (band, step) = cfg.frames(reference.frame_sec)?;
        let start = reference.frame_to_score(0).min(grid.onsets[0]);
        Ok(OltwFollower {
            reference,
            grid,
            band,
            step,
            rows: VecDeque::with_capacity(band + 1),
            j: 0,
            input_run: 0,
            pending: Direction::Input,
            estimate: ScorePositionEstimate::start(start),
        })
    }

    pub fn reference(&self) -> &FrameSequence {
        &self.reference
    }

    /// Current reference frame, `None` before the first input frame.
    pub fn current_frame(&self) -> Option<usize> {
        (!self.rows.is_empty()).then_some(self.j)
    }

    /// Accumulated (unnormalized) cost at the frontier cell.
    pub fn path_cost(&self) -> f64 {
        self.rows.back().map_or(0.0, |r| r.get(self.j))
    }

    pub fn band_frames(&self) -> usize {
        self.band
    }

    pub fn step_frames(&self) -> usize {
        self.step
    }

    fn add_row(&mut self, frame: PitchSet) {
        let lo = (self.j + 1).saturating_sub(self.band);
        let prev = self.rows.back();
        let t = prev.map_or(0, |r| r.t + 1);
        let mut cost = Vec::with_capacity(self.j + 1 - lo);
        for k in lo..=self.j {
            let d = frame_distance(frame, self.reference.frames[k]);
            let mut best = if t == 0 && k == 0 { 2.0 * d } else { f64::INFINITY };
            if let Some(p) = prev {
                if k > 0 {
                    best = best.min(p.get(k - 1) + 2.0 * d);
                }
                best = best.min(p.get(k) + d);
            }
            if k > lo {
                best = best.min(cost[k - 1 - lo] + d);
            }
            cost.push(best);
        }
        self.rows.push_back(CostRow { t, lo, frame, cost });
        if self.rows.len() > self.band {
            self.rows.pop_front();
        }
    }

    fn add_column(&mut self) {
        let k = self.j + 1;
        let target = self.reference.frames[k];
        let mut below: Option<(f64, f64)> = None;
        for row in self.rows.iter_mut() {
            let d = frame_distance(row.frame, target);
            let mut best = row.get(k - 1) + d;
            if let Some((diag, vert)) = below {
                best = best.min(diag + 2.0 * d).min(vert + d);
            }
            below = Some((row.get(k - 1), best));
            row.cost.push(best);
        }
        self.j = k;
    }

    fn normalized(row: &CostRow, k: usize) -> f64 {
        row.get(k) / (row.t + k + 2) as f64
    }

    /// Lowest normalized cost on the frontier decides the direction; ties
    /// go to the diagonal, then to a reference advance.
    fn direction(&self, advanced: usize) -> Direction {
        let at_end = self.j + 1 >= self.reference.len();
        if at_end {
            return Direction::Input;
        }
        if advanced >= self.step {
            return Direction::Input;
        }
        if self.input_run >= self.step {
            return Direction::Reference;
        }
        let last = self.rows.back().expect("at least one row");
        let corner = Self::normalized(last, self.j);
        let in_row = (last.lo..self.j).map(|k| Self::normalized(last, k));
        let in_col = self.rows.iter().rev().skip(1).map(|r| Self::normalized(r, self.j));
        let col_min = in_col.fold(f64::INFINITY, f64::min);
        let best = in_row.fold(corner.min(col_min), f64::min);
        if corner <= best + TIE_TOLERANCE {
            Direction::Both
        } else if col_min <= best + TIE_TOLERANCE {
            Direction::Reference
        } else {
            Direction::Input
        }
    }

    /// Consumes one input frame of pitch activity.
    pub fn push_frame(&mut self, frame: PitchSet, timestamp_sec: f64) -> ScorePositionEstimate {
        let started = !self.rows.is_empty();
        self.add_row(frame);
        let mut advanced = 0;
        if self.pending == Direction::Both && self.j + 1 < self.reference.len() {
            self.add_column();
            advanced += 1;
        }
        loop {
            match self.direction(advanced) {
                Direction::Reference => {
                    self.add_column();
                    self.input_run = 0;
                    advanced += 1;
                }
                d => {
                    self.pending = d;
                    break;
                }
            }
        }
        self.input_run = if advanced == 0 && started {
            self.input_run + 1
        } else {
            0
        };

        let last = self.rows.back().expect("row just added");
        let at_end = self.j + 1 >= self.reference.len();
        let position = self.reference.frame_to_score(self.j).max(self.estimate.position_beats);
        self.estimate = ScorePositionEstimate {
            position_beats: position,
            onset_index: self.grid.index_at_or_before(position),
            confidence: (1.0 - Self::normalized(last, self.j)).clamp(0.0, 1.0),
            timestamp_sec,
            end_of_reference: at_end,
        };
        self.estimate
    }
}

impl ScoreFollower for OltwFollower {
    fn step(&mut self, window: &InputWindow) -> ScorePositionEstimate {
        if self.rows.is_empty() && window.is_empty() {
            // soloist has not started
            self.estimate.timestamp_sec = window.window_end_sec;
            return self.estimate;
        }
        self.push_frame(window.active, window.window_end_sec)
    }

    fn estimate(&self) -> ScorePositionEstimate {
        self.estimate
    }

    fn grid(&self) -> &OnsetGrid {
        &self.grid
    }
}

/// Several followers stepped with the same windows; the estimate is the mean
/// of their positions in beats.
#[derive(Clone, Debug)]
pub struct Ensemble<F> {
    members: Vec<F>,
    estimate: ScorePositionEstimate,
}

impl<F: ScoreFollower> Ensemble<F> {
    pub fn new(members: Vec<F>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::Config("an ensemble needs at least one follower".into()));
        };
        let position = members.iter().map(|m| m.estimate().position_beats).sum::<f64>() / members.len() as f64;
        let estimate = ScorePositionEstimate {
            position_beats: position,
            onset_index: first.grid().index_at_or_before(position),
            ..first.estimate()
        };
        Ok(Ensemble { members, estimate })
    }

    pub fn members(&self) -> &[F] {
        &self.members
    }

    /// Aggregates member estimates that have already been updated.
    pub fn combine(&mut self, estimates: &[ScorePositionEstimate], timestamp_sec: f64) -> ScorePositionEstimate {
        let k = estimates.len() as f64;
        let mean = estimates.iter().map(|e| e.position_beats).sum::<f64>() / k;
        let position = mean.max(self.estimate.position_beats);
        self.estimate = ScorePositionEstimate {
            position_beats: position,
            onset_index: self.members[0].grid().index_at_or_before(position),
            confidence: estimates.iter().map(|e| e.confidence).sum::<f64>() / k,
            timestamp_sec,
            end_of_reference: estimates.iter().all(|e| e.end_of_reference),
        };
        self.estimate
    }
}

impl<F: ScoreFollower> ScoreFollower for Ensemble<F> {
    fn step(&mut self, window: &InputWindow) -> ScorePositionEstimate {
        let estimates: Vec<_> = self.members.iter_mut().map(|m| m.step(window)).collect();
        self.combine(&estimates, window.window_end_sec)
    }

    fn estimate(&self) -> ScorePositionEstimate {
        self.estimate
    }

    fn grid(&self) -> &OnsetGrid {
        self.members[0].grid()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{AlignmentPoint, PerformedNote};

    fn perf(notes: &[(u8, f64, f64)], align: &[(f64, f64)]) -> ReferencePerformance {
        let notes = notes
            .iter()
            .map(|&(pitch, onset_sec, duration_sec)| PerformedNote {
                pitch,
                onset_sec,
                duration_sec,
                velocity: 64,
            })
            .collect();
        let alignment = align
            .iter()
            .map(|&(score_onset_beats, perf_onset_sec)| AlignmentPoint {
                score_onset_beats,
                perf_onset_sec,
            })
            .collect();
        ReferencePerformance::new(notes, alignment).unwrap()
    }

    fn window(index: u64, end: f64, active: PitchSet, struck: bool) -> InputWindow {
        InputWindow {
            frame_index: index,
            window_end_sec: end,
            onsets: if struck {
                active
                    .iter()
                    .map(|p| crate::midi::WindowNote {
                        pitch: p,
                        velocity: 64,
                        onset_sec: end - 0.005,
                    })
                    .collect()
            } else {
                Vec::new()
            },
            active,
            released: Vec::new(),
        }
    }

    #[test]
    fn single_note_frames() {
        let r = perf(&[(60, 0.0, 0.05), (62, 1.0, 0.5)], &[(0.0, 0.0), (1.0, 1.0)]);
        let f = featurize_reference(&r, &WindowConfig::default());
        for i in 0..5 {
            assert!(f.frames[i].contains(60), "frame {i}");
        }
        assert!(!f.frames[5].contains(60));
    }

    #[test]
    fn gap_frames_are_empty() {
        let r = perf(&[(60, 0.0, 0.05), (62, 0.08, 0.05)], &[(0.0, 0.0), (1.0, 0.08)]);
        let f = featurize_reference(&r, &WindowConfig::default());
        assert_eq!(f.frames[5..8], [PitchSet::EMPTY; 3]);
        assert!(f.frames[8].contains(62));
        // trailing silence trimmed to one frame
        assert_eq!(f.len(), 14);
        assert!(f.frames[13].is_empty());
    }

    #[test]
    fn overlapping_notes_union() {
        let r = perf(&[(60, 0.0, 0.05), (64, 0.02, 0.05)], &[(0.0, 0.0), (1.0, 0.02)]);
        let f = featurize_reference(&r, &WindowConfig::default());
        assert_eq!(f.frames[3].iter().collect::<Vec<_>>(), vec![60, 64]);
        assert_eq!(f.frames[1].iter().collect::<Vec<_>>(), vec![60]);
    }

    #[test]
    fn frame_to_score_interpolates() {
        let r = perf(&[(60, 0.0, 0.5), (62, 0.5, 0.5)], &[(0.0, 0.0), (1.0, 0.5)]);
        let f = featurize_reference(&r, &WindowConfig::default());
        assert_eq!(f.knots, vec![(0, 0.0), (50, 1.0)]);
        assert!((f.frame_to_score(25) - 0.5).abs() < 1e-12);
        assert_eq!(f.frame_to_score(80), 1.0);
    }

    fn identity_setup() -> (FrameSequence, OnsetGrid) {
        let notes: Vec<(u8, f64, f64)> = (0..12).map(|i| (60 + (i % 5) as u8, i as f64 * 0.3, 0.25)).collect();
        let align: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, i as f64 * 0.3)).collect();
        let r = perf(&notes, &align);
        let grid = OnsetGrid::from_onsets((0..12).map(|i| i as f64).collect());
        (featurize_reference(&r, &WindowConfig::default()), grid)
    }

    #[test]
    fn identity_tracks_diagonal() {
        let (seq, grid) = identity_setup();
        let mut f = OltwFollower::new(seq.clone(), grid, &OltwConfig::default()).unwrap();
        for (t, frame) in seq.frames.iter().enumerate() {
            let est = f.push_frame(*frame, t as f64);
            assert_eq!(f.current_frame(), Some(t));
            assert_eq!(est.position_beats, seq.frame_to_score(t));
        }
        assert!(f.estimate().end_of_reference);
    }

    #[test]
    fn silent_start_stays_at_first_onset() {
        let (seq, grid) = identity_setup();
        let mut f = OltwFollower::new(seq, grid, &OltwConfig::default()).unwrap();
        for k in 0..20 {
            let est = f.step(&window(k, 0.01 * (k + 1) as f64, PitchSet::EMPTY, false));
            assert_eq!(est.position_beats, 0.0);
            assert_eq!(est.onset_index, Some(0));
        }
        assert_eq!(f.current_frame(), None);
    }

    #[test]
    fn advance_bounded_by_step() {
        let (seq, grid) = identity_setup();
        let mut f = OltwFollower::new(seq, grid, &OltwConfig::default()).unwrap();
        let mut last = -1i64;
        // input jumps straight to the end of the piece
        let target: PitchSet = [64].into_iter().collect();
        for t in 0..40 {
            f.push_frame(target, t as f64);
            let cur = f.current_frame().unwrap() as i64;
            assert!(cur >= last && cur - last <= 10);
            last = cur;
        }
    }

    #[test]
    fn ensemble_mean() {
        let (seq, grid) = identity_setup();
        let a = OltwFollower::new(seq.clone(), grid.clone(), &OltwConfig::default()).unwrap();
        let b = OltwFollower::new(seq, grid, &OltwConfig::default()).unwrap();
        let mut e = Ensemble::new(vec![a, b]).unwrap();
        let mk = |p: f64, end: bool| ScorePositionEstimate {
            position_beats: p,
            onset_index: None,
            confidence: 1.0,
            timestamp_sec: 0.0,
            end_of_reference: end,
        };
        assert_eq!(e.combine(&[mk(10.0, false), mk(12.0, true)], 0.0).position_beats, 11.0);
        assert!(Ensemble::<OltwFollower>::new(Vec::new()).is_err());
    }

    #[test]
    fn single_member_passthrough() {
        let (seq, grid) = identity_setup();
        let mut solo = OltwFollower::new(seq.clone(), grid.clone(), &OltwConfig::default()).unwrap();
        let mut e = Ensemble::new(vec![
            OltwFollower::new(seq.clone(), grid, &OltwConfig::default()).unwrap()
        ])
        .unwrap();
        for (k, frame) in seq.frames.iter().enumerate() {
            let w = window(k as u64, 0.01 * (k + 1) as f64, *frame, true);
            assert_eq!(solo.step(&w).position_beats, e.step(&w).position_beats);
        }
    }
}
