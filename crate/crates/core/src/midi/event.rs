#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    NoteOn,
    NoteOff,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MidiEvent {
    pub kind: EventKind,
    pub pitch: u8,
    pub velocity: u8,
    pub timestamp_sec: f64,
}

impl MidiEvent {
    pub fn note_on(pitch: u8, velocity: u8, timestamp_sec: f64) -> Self {
        MidiEvent {
            kind: EventKind::NoteOn,
            pitch,
            velocity,
            timestamp_sec,
        }
        .normalized()
    }

    pub fn note_off(pitch: u8, timestamp_sec: f64) -> Self {
        MidiEvent {
            kind: EventKind::NoteOff,
            pitch,
            velocity: 0,
            timestamp_sec,
        }
    }

    /// A note-on with velocity 0 is a note-off.
    pub fn normalized(self) -> Self {
        match self {
            MidiEvent {
                kind: EventKind::NoteOn,
                velocity: 0,
                ..
            } => MidiEvent {
                kind: EventKind::NoteOff,
                ..self
            },
            other => other,
        }
    }

    pub fn is_note_on(&self) -> bool {
        self.kind == EventKind::NoteOn
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_velocity_note_on_is_note_off() {
        let e = MidiEvent::note_on(60, 0, 1.0);
        assert_eq!(e.kind, EventKind::NoteOff);
        assert_eq!(MidiEvent::note_on(60, 1, 1.0).kind, EventKind::NoteOn);
    }
}
