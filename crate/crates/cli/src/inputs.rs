//! Loading scores, performances and run configuration from disk.

use std::path::{Path, PathBuf};

use accompanion_core::accompanist::{load_accompaniment_reference, AccompanimentReference};
use accompanion_core::config::{alignment_path, RunConfig};
use accompanion_core::midi::{notes_from_events, read_smf_events, MidiEvent};
use accompanion_core::score::{
    import_midi_score, load_reference, parse_alignment_csv, parse_score, Part, PartMap, PartMode, ReferencePerformance,
    Score,
};
use anyhow::{Context, Result};
use clap::Args;

/// How to read a score file.
#[derive(Args, Clone, Debug)]
pub struct ScoreArgs {
    /// Score document (.toml) or MIDI score (.mid)
    #[arg(long)]
    pub score: PathBuf,
    /// MIDI score track holding the solo part
    #[arg(long, default_value_t = 0)]
    pub solo_track: usize,
    /// MIDI score track holding the accompaniment part
    #[arg(long, default_value_t = 1)]
    pub accomp_track: usize,
}

impl ScoreArgs {
    pub fn load(&self, mode: PartMode) -> Result<Score> {
        let bytes = read(&self.score)?;
        let score = if is_midi(&self.score) {
            let mut map = PartMap::new().with(self.solo_track, Part::Solo);
            if mode == PartMode::Duet {
                map = map.with(self.accomp_track, Part::Accompaniment);
            }
            let score = import_midi_score(&bytes, &map)?;
            if mode == PartMode::Duet {
                score.require_duet()?;
            }
            score
        } else {
            parse_score(&bytes, mode)?
        };
        Ok(score)
    }
}

fn is_midi(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read `{}`", path.display()))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write `{}`", path.display()))
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("config `{}`", p.display())),
        None => Ok(RunConfig::default()),
    }
}

pub fn read_events(path: &Path) -> Result<Vec<MidiEvent>> {
    read_smf_events(&read(path)?).with_context(|| format!("performance `{}`", path.display()))
}

/// A performance SMF checked against `score`, with its sibling alignment CSV.
pub fn load_performance(path: &Path, score: &Score) -> Result<ReferencePerformance> {
    let csv = alignment_path(path);
    load_reference(&read(path)?, &read(&csv)?, score).with_context(|| format!("reference `{}`", path.display()))
}

/// A performance SMF and its sibling alignment CSV, without a score.
pub fn load_unscored_performance(path: &Path) -> Result<ReferencePerformance> {
    let notes = notes_from_events(&read_events(path)?)?;
    let alignment = parse_alignment_csv(&read(&alignment_path(path))?)?;
    ReferencePerformance::new(notes, alignment).with_context(|| format!("reference `{}`", path.display()))
}

pub fn load_accompaniment(path: &Path, score: &Score) -> Result<AccompanimentReference> {
    let csv = alignment_path(path);
    load_accompaniment_reference(&read(path)?, &read(&csv)?, score)
        .with_context(|| format!("accompaniment reference `{}`", path.display()))
}
