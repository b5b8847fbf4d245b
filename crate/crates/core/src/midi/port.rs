//! Raw MIDI device ports (`/dev/snd/midiC*D*`, `/dev/midi*`).
//!
//! A port is named either by its device path or by its index in
//! [`list_ports`].

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::dispatch::MidiSink;
use super::event::{EventKind, MidiEvent};
use crate::error::{Error, Result};

const DEVICE_DIRS: [&str; 2] = ["/dev/snd", "/dev"];

fn is_midi_device(name: &str) -> bool {
    name.starts_with("midi") || name.starts_with("amidi")
}

/// Raw MIDI devices present on this machine, sorted by path.
pub fn list_ports() -> Vec<PathBuf> {
    let mut ports = Vec::new();
    for dir in DEVICE_DIRS {
        let Ok(entries) = std::fs::read_dir(dir) else { continue };
        for entry in entries.flatten() {
            if entry.file_name().to_str().is_some_and(is_midi_device) {
                ports.push(entry.path());
            }
        }
    }
    ports.sort();
    ports
}

/// Resolves a port given by path or by index into [`list_ports`].
pub fn resolve_port(name: &str) -> Result<PathBuf> {
    let path = Path::new(name);
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    let ports = list_ports();
    if let Ok(index) = name.parse::<usize>() {
        if let Some(p) = ports.get(index) {
            return Ok(p.clone());
        }
    }
    let available: Vec<String> = ports.iter().map(|p| p.display().to_string()).collect();
    Err(Error::SinkUnavailable(format!(
        "no MIDI port `{name}` (available: [{}])",
        available.join(", ")
    )))
}

pub fn open_input_port(name: &str) -> Result<File> {
    let path = resolve_port(name)?;
    File::open(&path).map_err(|e| Error::SinkUnavailable(format!("{}: {e}", path.display())))
}

pub fn open_output_port(name: &str) -> Result<RawPortSink<File>> {
    let path = resolve_port(name)?;
    let file = OpenOptions::new()
        .write(true)
        .open(&path)
        .map_err(|e| Error::SinkUnavailable(format!("{}: {e}", path.display())))?;
    Ok(RawPortSink::new(file))
}

/// Incremental decoder for a raw MIDI byte stream. Handles running status
/// and interleaved real-time bytes; only note messages are reported.
#[derive(Debug, Default)]
pub struct RawMidiParser {
    status: Option<u8>,
    data: Vec<u8>,
    in_sysex: bool,
}

impl RawMidiParser {
    pub fn new() -> Self {
        Self::default()
    }

    fn expected_len(status: u8) -> usize {
        match status & 0xf0 {
            0xc0 | 0xd0 => 1,
            0xf0 => match status {
                0xf1 | 0xf3 => 1,
                0xf2 => 2,
                _ => 0,
            },
            _ => 2,
        }
    }

    /// Feeds one byte; returns a note event when a note message completes.
    pub fn push(&mut self, byte: u8, timestamp_sec: f64) -> Option<MidiEvent> {
        if byte >= 0xf8 {
            return None;
        }
        if byte & 0x80 != 0 {
            self.data.clear();
            match byte {
                0xf0 => {
                    self.in_sysex = true;
                    self.status = None;
                }
                0xf7 => self.in_sysex = false,
                0xf1..=0xf6 => {
                    self.in_sysex = false;
                    // system common cancels running status
                    self.status = (Self::expected_len(byte) > 0).then_some(byte);
                }
                _ => {
                    self.in_sysex = false;
                    self.status = Some(byte);
                }
            }
            return None;
        }
        if self.in_sysex {
            return None;
        }
        let status = self.status?;
        self.data.push(byte);
        if self.data.len() < Self::expected_len(status) {
            return None;
        }
        let (a, b) = (self.data[0], self.data.get(1).copied().unwrap_or(0));
        self.data.clear();
        if status >= 0xf0 {
            self.status = None;
            return None;
        }
        match status & 0xf0 {
            0x90 => Some(MidiEvent::note_on(a, b, timestamp_sec)),
            0x80 => Some(MidiEvent::note_off(a, timestamp_sec)),
            _ => None,
        }
    }
}

/// Writes note messages on channel 1 to any byte sink.
#[derive(Debug)]
pub struct RawPortSink<W: Write> {
    out: W,
}

impl<W: Write> RawPortSink<W> {
    pub fn new(out: W) -> Self {
        RawPortSink { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> MidiSink for RawPortSink<W> {
    fn send(&mut self, event: MidiEvent) -> Result<()> {
        let bytes = match event.kind {
            EventKind::NoteOn => [0x90, event.pitch & 0x7f, event.velocity.clamp(1, 127)],
            EventKind::NoteOff => [0x80, event.pitch & 0x7f, 0],
        };
        self.out
            .write_all(&bytes)
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::SinkUnavailable(e.to_string()))
    }
}
