use std::collections::BTreeMap;

use super::event::MidiEvent;
use super::smf::write_smf_events;
use super::to_ns;
use crate::accompanist::AccompanimentEvent;
use crate::error::Result;

/// Destination for outgoing note events.
pub trait MidiSink {
    fn send(&mut self, event: MidiEvent) -> Result<()>;
}

impl<S: MidiSink + ?Sized> MidiSink for &mut S {
    fn send(&mut self, event: MidiEvent) -> Result<()> {
        (**self).send(event)
    }
}

impl<S: MidiSink + ?Sized> MidiSink for Box<S> {
    fn send(&mut self, event: MidiEvent) -> Result<()> {
        (**self).send(event)
    }
}

/// Records events in memory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<MidiEvent>,
}

impl MidiSink for EventLog {
    fn send(&mut self, event: MidiEvent) -> Result<()> {
        self.events.push(event);
        Ok(())
    }
}

/// Collects events and renders them as an SMF.
#[derive(Clone, Debug, Default)]
pub struct SmfWriter {
    events: Vec<MidiEvent>,
}

impl SmfWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[MidiEvent] {
        &self.events
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        write_smf_events(&self.events)
    }
}

impl MidiSink for SmfWriter {
    fn send(&mut self, event: MidiEvent) -> Result<()> {
        self.events.push(event);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DispatchStats {
    pub note_ons: usize,
    pub note_offs: usize,
    /// Events whose scheduled time had already passed on submission.
    pub late: usize,
}

#[derive(Clone, Copy, Debug)]
enum Action {
    On { pitch: u8, velocity: u8, duration: f64 },
    Off { pitch: u8, token: u64 },
}

// note-offs sort before note-ons at the same instant
const RANK_OFF: u8 = 0;
const RANK_ON: u8 = 1;

/// Time-ordered output stage. Note-ons fire at their scheduled time (less
/// the configured output latency) and schedule their own note-off.
#[derive(Debug)]
pub struct Dispatcher<S> {
    sink: S,
    latency_sec: f64,
    queue: BTreeMap<(i64, u8, u64), (f64, Action)>,
    sounding: [Option<u64>; 128],
    seq: u64,
    stats: DispatchStats,
    last_sent: f64,
}

impl<S: MidiSink> Dispatcher<S> {
    pub fn new(sink: S, latency_sec: f64) -> Self {
        Dispatcher {
            sink,
            latency_sec,
            queue: BTreeMap::new(),
            sounding: [None; 128],
            seq: 0,
            stats: DispatchStats::default(),
            last_sent: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, at: f64, rank: u8, action: Action) {
        self.seq += 1;
        self.queue.insert((to_ns(at), rank, self.seq), (at, action));
    }

    /// Queues an event. One scheduled before `now` fires at `now` and counts
    /// as late.
    pub fn submit(&mut self, event: &AccompanimentEvent, now: f64) {
        let mut at = event.onset_sec - self.latency_sec;
        if at < now {
            at = now;
            self.stats.late += 1;
        }
        self.push(
            at,
            RANK_ON,
            Action::On {
                pitch: event.pitch & 0x7f,
                velocity: event.velocity.clamp(1, 127),
                duration: event.duration_sec,
            },
        );
    }

    /// Emits everything due at or before `now`.
    pub fn advance(&mut self, now: f64) -> Result<()> {
        let limit = to_ns(now);
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > limit {
                break;
            }
            let (at, action) = entry.remove();
            self.fire(at, action)?;
        }
        Ok(())
    }

    /// Emits every queued event in order, including all pending note-offs.
    pub fn flush(&mut self) -> Result<()> {
        while let Some((_, (at, action))) = self.queue.pop_first() {
            self.fire(at, action)?;
        }
        Ok(())
    }

    /// Drops queued note-ons and silences every sounding pitch at `now`.
    pub fn all_notes_off(&mut self, now: f64) -> Result<()> {
        self.queue.clear();
        let now = now.max(self.last_sent);
        self.last_sent = now;
        for pitch in 0..128u8 {
            if self.sounding[pitch as usize].take().is_some() {
                self.sink.send(MidiEvent::note_off(pitch, now))?;
                self.stats.note_offs += 1;
            }
        }
        Ok(())
    }

    fn fire(&mut self, at: f64, action: Action) -> Result<()> {
        // keys are rounded to whole nanoseconds; keep emitted times monotone
        let at = at.max(self.last_sent);
        self.last_sent = at;
        match action {
            Action::On {
                pitch,
                velocity,
                duration,
            } => {
                if self.sounding[pitch as usize].take().is_some() {
                    // re-strike: end the sounding note first
                    self.sink.send(MidiEvent::note_off(pitch, at))?;
                    self.stats.note_offs += 1;
                }
                self.sink.send(MidiEvent::note_on(pitch, velocity, at))?;
                self.stats.note_ons += 1;
                self.seq += 1;
                let token = self.seq;
                self.sounding[pitch as usize] = Some(token);
                self.push(at + duration.max(0.0), RANK_OFF, Action::Off { pitch, token });
            }
            Action::Off { pitch, token } => {
                if self.sounding[pitch as usize] == Some(token) {
                    self.sounding[pitch as usize] = None;
                    self.sink.send(MidiEvent::note_off(pitch, at))?;
                    self.stats.note_offs += 1;
                }
            }
        }
        Ok(())
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn sounding(&self) -> usize {
        self.sounding.iter().filter(|s| s.is_some()).count()
    }

    pub fn stats(&self) -> DispatchStats {
        self.stats
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn into_sink(self) -> S {
        self.sink
    }
}

/// Dispatches a time-ordered batch of events to `sink`, including every
/// note-off.
pub fn emit_events<S: MidiSink>(events: &[AccompanimentEvent], sink: S) -> Result<(S, DispatchStats)> {
    let start = events.iter().map(|e| e.onset_sec).fold(f64::INFINITY, f64::min);
    let mut dispatcher = Dispatcher::new(sink, 0.0);
    for e in events {
        dispatcher.submit(e, if start.is_finite() { start } else { 0.0 });
    }
    dispatcher.flush()?;
    let stats = dispatcher.stats();
    Ok((dispatcher.into_sink(), stats))
}
