use std::collections::{BTreeMap, HashMap, VecDeque};

use midly::num::{u15, u24, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};

use super::{Part, Score, ScoreNote};
use crate::error::{Error, Result};

/// Which SMF track feeds which score part. Tracks not listed are ignored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartMap(pub BTreeMap<usize, Part>);

impl PartMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, track: usize, part: Part) -> Self {
        self.0.insert(track, part);
        self
    }

    pub fn get(&self, track: usize) -> Option<Part> {
        self.0.get(&track).copied()
    }
}

struct RawNote {
    track: usize,
    index: usize,
    pitch: u8,
    on: u64,
    off: u64,
}

/// Converts a PPQ-timed SMF into a [`Score`]. Note-offs close the earliest
/// open note-on of the same pitch and channel on that track.
pub fn import_midi_score(smf: &[u8], part_map: &PartMap) -> Result<Score> {
    let smf = Smf::parse(smf).map_err(|e| Error::Smf(e.to_string()))?;
    let ppq = match smf.header.timing {
        Timing::Metrical(ppq) => ppq.as_int() as f64,
        Timing::Timecode(..) => return Err(Error::SmpteUnsupported),
    };
    if ppq == 0.0 {
        return Err(Error::Smf("zero ticks per quarter note".into()));
    }

    let mut time_signature = None;
    let mut tempo_us = None;
    let mut raw: Vec<(Part, RawNote)> = Vec::new();

    for (track_index, track) in smf.tracks.iter().enumerate() {
        let part = part_map.get(track_index);
        let mut tick: u64 = 0;
        let mut open: HashMap<(u8, u8), VecDeque<u64>> = HashMap::new();
        let mut count = 0usize;
        for event in track {
            tick += event.delta.as_int() as u64;
            match event.kind {
                TrackEventKind::Meta(MetaMessage::TimeSignature(num, den_pow, _, _)) => {
                    time_signature.get_or_insert((num as u32, 1u32 << den_pow.min(31)));
                }
                TrackEventKind::Meta(MetaMessage::Tempo(us)) => {
                    tempo_us.get_or_insert(us.as_int());
                }
                TrackEventKind::Midi { channel, message } if part.is_some() => {
                    let (key, is_on) = match message {
                        MidiMessage::NoteOn { key, vel } => (key.as_int(), vel.as_int() > 0),
                        MidiMessage::NoteOff { key, .. } => (key.as_int(), false),
                        _ => continue,
                    };
                    let slot = open.entry((channel.as_int(), key)).or_default();
                    if is_on {
                        slot.push_back(tick);
                    } else if let Some(on) = slot.pop_front() {
                        if tick > on {
                            raw.push((
                                part.unwrap(),
                                RawNote {
                                    track: track_index,
                                    index: count,
                                    pitch: key,
                                    on,
                                    off: tick,
                                },
                            ));
                            count += 1;
                        } else {
                            log::warn!("track {track_index}: dropping zero-length note {key} at tick {tick}");
                        }
                    }
                }
                _ => {}
            }
        }
        if let Some(((_, pitch), ticks)) = open.iter().find(|(_, q)| !q.is_empty()) {
            return Err(Error::UnmatchedNoteOn {
                track: track_index,
                pitch: *pitch,
                tick: ticks[0],
            });
        }
    }

    // Onsets within one tick of each other belong to the same chord.
    let mut snapped: BTreeMap<Part, Vec<u64>> = BTreeMap::new();
    for (part, note) in &raw {
        snapped.entry(*part).or_default().push(note.on);
    }
    let snap_tables: BTreeMap<Part, BTreeMap<u64, u64>> = snapped
        .into_iter()
        .map(|(part, mut onsets)| {
            onsets.sort_unstable();
            onsets.dedup();
            let mut table = BTreeMap::new();
            let mut anchor = None;
            for t in onsets {
                let a = match anchor {
                    Some(a) if t - a <= 1 => a,
                    _ => {
                        anchor = Some(t);
                        t
                    }
                };
                table.insert(t, a);
            }
            (part, table)
        })
        .collect();

    let notes = raw
        .into_iter()
        .map(|(part, n)| {
            let on = snap_tables[&part][&n.on];
            ScoreNote {
                id: format!("t{}n{}", n.track, n.index),
                pitch: n.pitch,
                onset_beats: on as f64 / ppq,
                duration_beats: (n.off - on) as f64 / ppq,
                part,
            }
        })
        .collect();

    let (bpm_num, bpm_den) = time_signature.unwrap_or((4, 4));
    let initial_bpm = tempo_us.map(|us| 60_000_000.0 / us as f64);
    Score::new(notes, bpm_num, bpm_den, initial_bpm)
}

/// Writes `score` as a format-1 SMF: track 0 holds meta events, track 1 the
/// solo part and track 2 the accompaniment.
pub fn export_midi_score(score: &Score, ppq: u16) -> Vec<u8> {
    let to_tick = |beats: f64| (beats * ppq as f64).round() as u64;
    let mut meta = vec![(
        0u64,
        TrackEventKind::Meta(MetaMessage::TimeSignature(
            score.beats_per_measure.min(255) as u8,
            score.beat_unit.max(1).trailing_zeros() as u8,
            24,
            8,
        )),
    )];
    if let Some(bpm) = score.initial_bpm {
        let us = (60_000_000.0 / bpm).round().clamp(1.0, 16_777_215.0) as u32;
        meta.push((0, TrackEventKind::Meta(MetaMessage::Tempo(u24::new(us)))));
    }
    let mut tracks = vec![finish_track(meta)];
    for part in [Part::Solo, Part::Accompaniment] {
        let mut events = Vec::new();
        for n in score.part(part) {
            let on = to_tick(n.onset_beats);
            let off = to_tick(n.onset_beats + n.duration_beats).max(on + 1);
            let key = u7::new(n.pitch);
            events.push((off, note_kind(key, false)));
            events.push((on, note_kind(key, true)));
        }
        // note-offs sort before note-ons at the same tick
        events.sort_by_key(|(t, kind)| {
            (
                *t,
                matches!(
                    kind,
                    TrackEventKind::Midi {
                        message: MidiMessage::NoteOn { .. },
                        ..
                    }
                ),
            )
        });
        tracks.push(finish_track(events));
    }
    let header = Header::new(Format::Parallel, Timing::Metrical(u15::new(ppq.min(0x7fff))));
    let mut out = Vec::new();
    midly::write_std(&header, tracks.iter(), &mut out).expect("writing to a Vec cannot fail");
    out
}

fn note_kind(key: u7, on: bool) -> TrackEventKind<'static> {
    let message = if on {
        MidiMessage::NoteOn { key, vel: u7::new(64) }
    } else {
        MidiMessage::NoteOff { key, vel: u7::new(0) }
    };
    TrackEventKind::Midi {
        channel: u4::new(0),
        message,
    }
}

pub(crate) fn finish_track(mut events: Vec<(u64, TrackEventKind<'static>)>) -> Vec<TrackEvent<'static>> {
    events.sort_by_key(|(t, _)| *t);
    let mut last = 0u64;
    let mut track: Vec<TrackEvent<'static>> = events
        .into_iter()
        .map(|(t, kind)| {
            let delta = t - last;
            last = t;
            TrackEvent {
                delta: u28::new(delta.min(0x0fff_ffff) as u32),
                kind,
            }
        })
        .collect();
    track.push(TrackEvent {
        delta: u28::new(0),
        kind: TrackEventKind::Meta(MetaMessage::EndOfTrack),
    });
    track
}
