//! MIDI routing: event types, SMF read/write, input windowing, file replay
//! and time-ordered output dispatch.

mod dispatch;
mod event;
mod port;
mod replay;
mod smf;
mod window;

pub use dispatch::{emit_events, DispatchStats, Dispatcher, EventLog, MidiSink, SmfWriter};
pub use event::{EventKind, MidiEvent};
pub use port::{list_ports, open_input_port, open_output_port, resolve_port, RawMidiParser, RawPortSink};
pub use replay::{replay_events, replay_performance, ClockMode, Replay};
pub use smf::{events_from_notes, notes_from_events, read_smf_events, write_smf_events, SMF_PPQ};
pub use window::{window_events, InputWindow, ReleasedNote, WindowConfig, WindowNote, Windower};

/// Width of an input window in seconds.
pub const WINDOW_SEC: f64 = 0.010;

/// Converts seconds to integer nanoseconds for exact window arithmetic.
pub(crate) fn to_ns(seconds: f64) -> i64 {
    (seconds * 1e9).round() as i64
}

pub(crate) fn from_ns(ns: i64) -> f64 {
    ns as f64 * 1e-9
}
