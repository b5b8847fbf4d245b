use std::collections::VecDeque;
use std::time::{Duration, Instant};

use super::event::MidiEvent;
use super::smf::read_smf_events;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClockMode {
    /// Events are yielded immediately with their scaled file times.
    Virtual,
    /// Events are yielded in real time, sleeping between them.
    Wall,
}

/// Stream of recorded events, time-scaled by `1 / speed`.
#[derive(Debug)]
pub struct Replay {
    events: VecDeque<MidiEvent>,
    clock: ClockMode,
    started: Option<Instant>,
}

impl Replay {
    pub fn remaining(&self) -> usize {
        self.events.len()
    }
}

impl Iterator for Replay {
    type Item = MidiEvent;

    fn next(&mut self) -> Option<MidiEvent> {
        let event = self.events.pop_front()?;
        if self.clock == ClockMode::Wall {
            let start = *self.started.get_or_insert_with(Instant::now);
            let due = start + Duration::from_secs_f64(event.timestamp_sec.max(0.0));
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        Some(event)
    }
}

pub fn replay_events(mut events: Vec<MidiEvent>, speed: f64, clock: ClockMode) -> Result<Replay> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(Error::Config(format!("replay speed must be positive, got {speed}")));
    }
    for e in &mut events {
        e.timestamp_sec /= speed;
    }
    Ok(Replay {
        events: events.into(),
        clock,
        started: None,
    })
}

pub fn replay_performance(smf: &[u8], speed: f64, clock: ClockMode) -> Result<Replay> {
    replay_events(read_smf_events(smf)?, speed, clock)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{window_events, write_smf_events, WindowConfig};

    fn file() -> Vec<u8> {
        write_smf_events(&[
            MidiEvent::note_on(60, 80, 0.5),
            MidiEvent::note_on(64, 80, 0.75),
            MidiEvent::note_off(60, 1.0),
            MidiEvent::note_off(64, 1.5),
        ])
    }

    #[test]
    fn unit_speed_keeps_file_times() {
        let original = read_smf_events(&file()).unwrap();
        let replayed: Vec<_> = replay_performance(&file(), 1.0, ClockMode::Virtual).unwrap().collect();
        assert_eq!(original, replayed);
        assert_eq!(replayed[0].timestamp_sec, 0.5);
    }

    #[test]
    fn double_speed_halves_times() {
        let replayed: Vec<_> = replay_performance(&file(), 2.0, ClockMode::Virtual).unwrap().collect();
        let times: Vec<f64> = replayed.iter().map(|e| e.timestamp_sec).collect();
        assert_eq!(times, vec![0.25, 0.375, 0.5, 0.75]);
    }

    #[test]
    fn replay_windows_are_deterministic() {
        let run = || {
            let events = replay_performance(&file(), 1.0, ClockMode::Virtual).unwrap();
            window_events(events, WindowConfig::default()).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bad_speed() {
        assert!(matches!(
            replay_performance(&file(), 0.0, ClockMode::Virtual),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn wall_clock_paces_events() {
        let events = vec![MidiEvent::note_on(60, 80, 0.0), MidiEvent::note_off(60, 0.03)];
        let start = Instant::now();
        let n = replay_events(events, 1.0, ClockMode::Wall).unwrap().count();
        assert_eq!(n, 2);
        assert!(start.elapsed() >= Duration::from_millis(25));
    }
}
