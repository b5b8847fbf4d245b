use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed score document: {0}")]
    MalformedScore(String),
    #[error("score part `{0}` has no notes")]
    EmptyPart(&'static str),
    #[error("note `{id}`: {reason}")]
    InvalidNote { id: String, reason: String },
    #[error("duplicate note id `{0}`")]
    DuplicateId(String),
    #[error("invalid MIDI file: {0}")]
    Smf(String),
    #[error("SMPTE time division is not supported")]
    SmpteUnsupported,
    #[error("note-on without matching note-off (track {track}, pitch {pitch}, tick {tick})")]
    UnmatchedNoteOn { track: usize, pitch: u8, tick: u64 },
    #[error("alignment: {0}")]
    Alignment(String),
    #[error("clock fault: timestamp {got:.6}s regressed from {last:.6}s")]
    ClockFault { last: f64, got: f64 },
    #[error("MIDI sink unavailable: {0}")]
    SinkUnavailable(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("experiment: {0}")]
    Experiment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
