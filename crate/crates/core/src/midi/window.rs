//! Aggregation of the live event stream into fixed-width input windows.
//!
//! Every note-on inside a window is treated as part of one chord whose
//! performed onset is the window's end. Note-offs never open a window of
//! their own; they only end a pitch's activity and report the completed
//! note's duration.

use super::event::{EventKind, MidiEvent};
use super::{from_ns, to_ns, WINDOW_SEC};
use crate::error::{Error, Result};
use crate::pitch::PitchSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowConfig {
    pub width_sec: f64,
    /// Held pitches stop counting as active after this long.
    pub sustain_cap_sec: f64,
    /// Timestamps may run backwards by up to this much before it is a fault.
    pub regression_tolerance_sec: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            width_sec: WINDOW_SEC,
            sustain_cap_sec: 2.0,
            regression_tolerance_sec: 0.001,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowNote {
    pub pitch: u8,
    pub velocity: u8,
    pub onset_sec: f64,
}

/// A note whose note-off arrived inside the window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReleasedNote {
    pub pitch: u8,
    pub velocity: u8,
    pub onset_sec: f64,
    pub duration_sec: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InputWindow {
    pub frame_index: u64,
    pub window_end_sec: f64,
    /// Note-ons received in this window, in arrival order.
    pub onsets: Vec<WindowNote>,
    /// Pitches sounding at any instant of the window (sustained activity).
    pub active: PitchSet,
    pub released: Vec<ReleasedNote>,
}

impl InputWindow {
    /// A window without note-ons.
    pub fn is_empty(&self) -> bool {
        self.onsets.is_empty()
    }

    /// Pitches struck in this window.
    pub fn pitches(&self) -> PitchSet {
        self.onsets.iter().map(|n| n.pitch).collect()
    }
}

#[derive(Clone, Copy, Debug)]
struct Held {
    on_ns: i64,
    onset_sec: f64,
    velocity: u8,
}

#[derive(Debug)]
pub struct Windower {
    cfg: WindowConfig,
    width_ns: i64,
    cap_ns: i64,
    anchor_ns: Option<i64>,
    index: u64,
    onsets: Vec<WindowNote>,
    touched: PitchSet,
    struck: PitchSet,
    released: Vec<ReleasedNote>,
    held: [Option<Held>; 128],
    last_ts: f64,
}

impl Windower {
    pub fn new(cfg: WindowConfig) -> Self {
        let width_ns = to_ns(cfg.width_sec).max(1);
        Windower {
            cfg,
            width_ns,
            cap_ns: to_ns(cfg.sustain_cap_sec),
            anchor_ns: None,
            index: 0,
            onsets: Vec::new(),
            touched: PitchSet::EMPTY,
            struck: PitchSet::EMPTY,
            released: Vec::new(),
            held: [None; 128],
            last_ts: f64::NEG_INFINITY,
        }
    }

    fn start_ns(&self, index: u64) -> i64 {
        self.anchor_ns.unwrap_or(0) + index as i64 * self.width_ns
    }

    /// Feeds one event; returns the windows that closed before it.
    pub fn push(&mut self, event: MidiEvent) -> Result<Vec<InputWindow>> {
        let event = event.normalized();
        let mut t = event.timestamp_sec;
        if t < self.last_ts - self.cfg.regression_tolerance_sec {
            return Err(Error::ClockFault {
                last: self.last_ts,
                got: t,
            });
        }
        t = t.max(self.last_ts);
        self.last_ts = t;
        let t_ns = to_ns(t);

        let anchor = *self
            .anchor_ns
            .get_or_insert_with(|| t_ns.div_euclid(self.width_ns) * self.width_ns);
        let target = ((t_ns - anchor) / self.width_ns) as u64;
        let mut closed = Vec::new();
        while self.index < target {
            closed.push(self.close());
        }

        let pitch = event.pitch & 0x7f;
        match event.kind {
            EventKind::NoteOn => {
                if let Some(prev) = self.held[pitch as usize].take() {
                    self.release(pitch, prev, t);
                }
                self.held[pitch as usize] = Some(Held {
                    on_ns: t_ns,
                    onset_sec: t,
                    velocity: event.velocity,
                });
                self.touched.insert(pitch);
                self.struck.insert(pitch);
                self.onsets.push(WindowNote {
                    pitch,
                    velocity: event.velocity,
                    onset_sec: t,
                });
            }
            EventKind::NoteOff => {
                if let Some(prev) = self.held[pitch as usize].take() {
                    self.release(pitch, prev, t);
                    // zero overlap with this window
                    if t_ns <= self.start_ns(self.index) && !self.struck.contains(pitch) {
                        self.touched.remove(pitch);
                    }
                }
            }
        }
        Ok(closed)
    }

    fn release(&mut self, pitch: u8, held: Held, t: f64) {
        self.released.push(ReleasedNote {
            pitch,
            velocity: held.velocity,
            onset_sec: held.onset_sec,
            duration_sec: (t - held.onset_sec).max(1e-6),
        });
    }

    /// Closes every window that ends at or before `t` (emitting empty windows
    /// across silences).
    pub fn advance_to(&mut self, t: f64) -> Vec<InputWindow> {
        let Some(_) = self.anchor_ns else {
            return Vec::new();
        };
        let t_ns = to_ns(t);
        let mut closed = Vec::new();
        while self.start_ns(self.index + 1) <= t_ns {
            closed.push(self.close());
        }
        closed
    }

    /// Closes the window in progress, if any.
    pub fn finish(&mut self) -> Option<InputWindow> {
        self.anchor_ns.map(|_| self.close())
    }

    fn close(&mut self) -> InputWindow {
        let end_ns = self.start_ns(self.index + 1);
        let window = InputWindow {
            frame_index: self.index,
            window_end_sec: from_ns(end_ns),
            onsets: std::mem::take(&mut self.onsets),
            active: self.touched,
            released: std::mem::take(&mut self.released),
        };
        self.index += 1;
        self.struck = PitchSet::EMPTY;
        self.touched = PitchSet::EMPTY;
        for (p, h) in self.held.iter().enumerate() {
            if let Some(h) = h {
                if h.on_ns + self.cap_ns > end_ns {
                    self.touched.insert(p as u8);
                }
            }
        }
        window
    }
}

/// Windows an entire event stream, ending with the window that holds the
/// last event.
pub fn window_events(events: impl IntoIterator<Item = MidiEvent>, cfg: WindowConfig) -> Result<Vec<InputWindow>> {
    let mut windower = Windower::new(cfg);
    let mut out = Vec::new();
    for e in events {
        out.extend(windower.push(e)?);
    }
    out.extend(windower.finish());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn on(p: u8, t: f64) -> MidiEvent {
        MidiEvent::note_on(p, 80, t)
    }

    fn off(p: u8, t: f64) -> MidiEvent {
        MidiEvent::note_off(p, t)
    }

    #[test]
    fn same_window_chord() {
        let w = window_events([on(60, 0.003), on(64, 0.007)], WindowConfig::default()).unwrap();
        assert_eq!(w.len(), 1);
        assert!((w[0].window_end_sec - 0.010).abs() < 1e-12);
        assert_eq!(w[0].pitches().iter().collect::<Vec<_>>(), vec![60, 64]);
    }

    #[test]
    fn two_windows() {
        let w = window_events([on(60, 0.003), on(64, 0.013)], WindowConfig::default()).unwrap();
        assert_eq!(w.len(), 2);
        assert!((w[0].window_end_sec - 0.010).abs() < 1e-12);
        assert!((w[1].window_end_sec - 0.020).abs() < 1e-12);
        assert_eq!(w[1].pitches().iter().collect::<Vec<_>>(), vec![64]);
    }

    #[test]
    fn silence_emits_empty_windows() {
        let mut windower = Windower::new(WindowConfig::default());
        assert!(windower.push(on(60, 0.005)).unwrap().is_empty());
        let first = windower.advance_to(0.010);
        assert_eq!(first.len(), 1);
        let silent = windower.advance_to(0.060);
        assert_eq!(silent.len(), 5);
        assert!(silent.iter().all(InputWindow::is_empty));
        // held note keeps sounding through the silent windows
        assert!(silent.iter().all(|w| w.active.contains(60)));
    }

    #[test]
    fn clock_fault() {
        let mut windower = Windower::new(WindowConfig::default());
        windower.push(on(60, 1.0)).unwrap();
        // within tolerance: clamped
        assert!(windower.push(on(62, 0.9995)).is_ok());
        assert!(matches!(windower.push(on(64, 0.9)), Err(Error::ClockFault { .. })));
    }

    #[test]
    fn note_off_reports_duration_and_clears_activity() {
        let w = window_events(
            [on(60, 0.0), off(60, 0.05), on(62, 0.08), off(62, 0.1)],
            WindowConfig::default(),
        )
        .unwrap();
        // windows [0,10) .. [100,110)
        assert_eq!(w.len(), 11);
        assert!(w[4].active.contains(60));
        assert!(w[4].released.is_empty());
        assert_eq!(w[5].released.len(), 1);
        assert!((w[5].released[0].duration_sec - 0.05).abs() < 1e-12);
        // off exactly at window start: not active in that window
        assert!(!w[5].active.contains(60));
        assert!(w[6].active.is_empty() && w[7].active.is_empty());
        assert!(w[8].active.contains(62));
        assert!(!w[10].active.contains(62));
    }

    #[test]
    fn sustain_cap() {
        let cfg = WindowConfig {
            sustain_cap_sec: 0.05,
            ..WindowConfig::default()
        };
        let mut windower = Windower::new(cfg);
        windower.push(on(60, 0.0)).unwrap();
        let w = windower.advance_to(0.1);
        assert!(w[4].active.contains(60));
        assert!(!w[5].active.contains(60));
    }

    #[test]
    fn phase_anchored_at_first_event() {
        let w = window_events([on(60, 1.2345), on(62, 1.2399)], WindowConfig::default()).unwrap();
        assert_eq!(w.len(), 1);
        assert!((w[0].window_end_sec - 1.24).abs() < 1e-12);
        assert_eq!(w[0].frame_index, 0);
    }

    proptest! {
        #[test]
        fn windows_partition_the_stream(
            mut gaps in prop::collection::vec((0u32..40_000, any::<bool>(), 50u8..70), 1..60)
        ) {
            gaps.sort();
            let mut t = 0.0;
            let mut events = Vec::new();
            for (gap_us, is_on, pitch) in &gaps {
                t += *gap_us as f64 * 1e-6;
                events.push(if *is_on { on(*pitch, t) } else { off(*pitch, t) });
            }
            let windows = window_events(events.clone(), WindowConfig::default()).unwrap();
            let n_on = events.iter().filter(|e| e.is_note_on()).count();
            prop_assert_eq!(windows.iter().map(|w| w.onsets.len()).sum::<usize>(), n_on);
            for pair in windows.windows(2) {
                prop_assert_eq!(pair[1].frame_index, pair[0].frame_index + 1);
                prop_assert!((pair[1].window_end_sec - pair[0].window_end_sec - 0.01).abs() < 1e-9);
            }
            for w in &windows {
                let start = w.window_end_sec - 0.01;
                for n in &w.onsets {
                    prop_assert!(n.onset_sec >= start - 1e-9 && n.onset_sec < w.window_end_sec + 1e-9);
                }
            }
        }
    }
}
