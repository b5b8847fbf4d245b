use std::collections::{HashMap, VecDeque};

use midly::num::{u15, u24, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEventKind};

use super::event::{EventKind, MidiEvent};
use crate::error::{Error, Result};
use crate::score::PerformedNote;

/// Ticks per quarter note in files written by [`write_smf_events`].
pub const SMF_PPQ: u16 = 960;
const DEFAULT_TEMPO_US: u32 = 500_000;

/// Reads every note event of an SMF (all tracks merged) with its time in
/// seconds, honouring tempo changes.
pub fn read_smf_events(bytes: &[u8]) -> Result<Vec<MidiEvent>> {
    let smf = Smf::parse(bytes).map_err(|e| Error::Smf(e.to_string()))?;

    let mut tempo_changes: Vec<(u64, u32)> = Vec::new();
    let mut raw: Vec<(u64, usize, usize, EventKind, u8, u8)> = Vec::new();
    for (track_index, track) in smf.tracks.iter().enumerate() {
        let mut tick = 0u64;
        for (i, ev) in track.iter().enumerate() {
            tick += ev.delta.as_int() as u64;
            match ev.kind {
                TrackEventKind::Meta(MetaMessage::Tempo(us)) => tempo_changes.push((tick, us.as_int())),
                TrackEventKind::Midi { message, .. } => match message {
                    MidiMessage::NoteOn { key, vel } => {
                        let kind = if vel.as_int() == 0 {
                            EventKind::NoteOff
                        } else {
                            EventKind::NoteOn
                        };
                        raw.push((tick, track_index, i, kind, key.as_int(), vel.as_int()));
                    }
                    MidiMessage::NoteOff { key, .. } => {
                        raw.push((tick, track_index, i, EventKind::NoteOff, key.as_int(), 0));
                    }
                    _ => {}
                },
                _ => {}
            }
        }
    }
    tempo_changes.sort_by_key(|(t, _)| *t);
    raw.sort_by_key(|&(tick, track, i, ..)| (tick, track, i));

    let to_seconds: Box<dyn Fn(u64) -> f64> = match smf.header.timing {
        Timing::Metrical(ppq) => {
            let ppq = ppq.as_int() as f64;
            if ppq == 0.0 {
                return Err(Error::Smf("zero ticks per quarter note".into()));
            }
            // (start tick, seconds at start tick, microseconds per quarter)
            let mut segments = vec![(0u64, 0.0f64, DEFAULT_TEMPO_US)];
            for (tick, us) in tempo_changes {
                let &(t0, s0, us0) = segments.last().unwrap();
                let s = s0 + (tick - t0) as f64 * us0 as f64 * 1e-6 / ppq;
                if tick == t0 {
                    segments.pop();
                }
                segments.push((tick, s, us));
            }
            Box::new(move |tick| {
                let i = segments.partition_point(|(t, ..)| *t <= tick) - 1;
                let (t0, s0, us) = segments[i];
                s0 + (tick - t0) as f64 * us as f64 * 1e-6 / ppq
            })
        }
        Timing::Timecode(fps, sub) => {
            let ticks_per_sec = fps.as_f32() as f64 * sub as f64;
            if ticks_per_sec == 0.0 {
                return Err(Error::Smf("zero SMPTE resolution".into()));
            }
            Box::new(move |tick| tick as f64 / ticks_per_sec)
        }
    };

    Ok(raw
        .into_iter()
        .map(|(tick, _, _, kind, pitch, velocity)| MidiEvent {
            kind,
            pitch,
            velocity,
            timestamp_sec: to_seconds(tick),
        })
        .collect())
}

/// Pairs note-ons with note-offs (earliest open note-on of the pitch first).
pub fn notes_from_events(events: &[MidiEvent]) -> Result<Vec<PerformedNote>> {
    let mut open: HashMap<u8, VecDeque<(f64, u8)>> = HashMap::new();
    let mut notes = Vec::new();
    for e in events {
        let e = e.normalized();
        match e.kind {
            EventKind::NoteOn => open
                .entry(e.pitch)
                .or_default()
                .push_back((e.timestamp_sec, e.velocity)),
            EventKind::NoteOff => {
                if let Some((on, velocity)) = open.get_mut(&e.pitch).and_then(VecDeque::pop_front) {
                    let duration_sec = e.timestamp_sec - on;
                    if duration_sec > 0.0 {
                        notes.push(PerformedNote {
                            pitch: e.pitch,
                            onset_sec: on,
                            duration_sec,
                            velocity,
                        });
                    }
                }
            }
        }
    }
    if let Some((pitch, q)) = open.iter().find(|(_, q)| !q.is_empty()) {
        return Err(Error::UnmatchedNoteOn {
            track: 0,
            pitch: *pitch,
            tick: (q[0].0 * 1000.0) as u64,
        });
    }
    notes.sort_by(|a, b| a.onset_sec.total_cmp(&b.onset_sec).then(a.pitch.cmp(&b.pitch)));
    Ok(notes)
}

/// Note-on/note-off events of `notes`, time-ordered with note-offs first at
/// equal times.
pub fn events_from_notes(notes: &[PerformedNote]) -> Vec<MidiEvent> {
    let mut events: Vec<MidiEvent> = notes
        .iter()
        .flat_map(|n| {
            [
                MidiEvent::note_on(n.pitch, n.velocity.max(1), n.onset_sec),
                MidiEvent::note_off(n.pitch, n.offset_sec()),
            ]
        })
        .collect();
    events.sort_by(|a, b| {
        a.timestamp_sec
            .total_cmp(&b.timestamp_sec)
            .then(a.is_note_on().cmp(&b.is_note_on()))
            .then(a.pitch.cmp(&b.pitch))
    });
    events
}

/// Writes events as a single-track SMF at 120 bpm and [`SMF_PPQ`] ticks per
/// quarter, so one second is 1920 ticks. Output is a pure function of input.
pub fn write_smf_events(events: &[MidiEvent]) -> Vec<u8> {
    let ticks_per_sec = SMF_PPQ as f64 * 1e6 / DEFAULT_TEMPO_US as f64;
    let mut kinds: Vec<(u64, TrackEventKind<'static>)> =
        vec![(0, TrackEventKind::Meta(MetaMessage::Tempo(u24::new(DEFAULT_TEMPO_US))))];
    for e in events {
        let tick = (e.timestamp_sec.max(0.0) * ticks_per_sec).round() as u64;
        let message = match e.kind {
            EventKind::NoteOn => MidiMessage::NoteOn {
                key: u7::new(e.pitch & 0x7f),
                vel: u7::new(e.velocity.clamp(1, 127)),
            },
            EventKind::NoteOff => MidiMessage::NoteOff {
                key: u7::new(e.pitch & 0x7f),
                vel: u7::new(0),
            },
        };
        kinds.push((
            tick,
            TrackEventKind::Midi {
                channel: u4::new(0),
                message,
            },
        ));
    }
    let track = crate::score::finish_track_events(kinds);
    let header = Header::new(Format::SingleTrack, Timing::Metrical(u15::new(SMF_PPQ)));
    let mut out = Vec::new();
    midly::write_std(&header, std::iter::once(&track), &mut out).expect("writing to a Vec cannot fail");
    out
}
