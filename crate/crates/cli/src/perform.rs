//! `replay` and `live`: the accompaniment pipeline on recorded or live input.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Instant;

use accompanion_core::accompanist::MAX_QUIET_SKIP;
use accompanion_core::config::RunConfig;
use accompanion_core::engine::{
    run_live, run_replay, spawn_port_reader, spawn_replay_source, write_onset_log, Engine, EngineConfig, RunOutcome,
};
use accompanion_core::follower::FollowerKind;
use accompanion_core::midi::{
    open_input_port, open_output_port, replay_events, ClockMode, MidiEvent, MidiSink, RawPortSink, SmfWriter,
};
use accompanion_core::score::PartMode;
use accompanion_core::tempo::TempoVariant;
use anyhow::{bail, Context, Result};
use clap::Args;

use crate::inputs::{self, ScoreArgs};

/// Options shared by every mode that drives the engine.
#[derive(Args, Clone, Debug)]
pub struct EngineArgs {
    #[command(flatten)]
    pub score: ScoreArgs,
    /// Score follower [default: from config, else hmm]
    #[arg(long, value_parser = parse_follower)]
    pub follower: Option<FollowerKind>,
    /// Tempo model: R, MA, L, LTE, JADAM or KT [default: from config, else LTE]
    #[arg(long, value_parser = parse_variant)]
    pub tempo: Option<TempoVariant>,
    /// Reference performances (SMF, alignment in the sibling .csv)
    #[arg(long, num_args = 1..)]
    pub refs: Vec<PathBuf>,
    /// Accompaniment reference performance (SMF, alignment in the sibling .csv)
    #[arg(long)]
    pub accomp_ref: Option<PathBuf>,
    /// Initial tempo in beats per minute [default: the score's]
    #[arg(long)]
    pub bpm: Option<f64>,
}

pub fn parse_follower(s: &str) -> Result<FollowerKind, String> {
    s.parse().map_err(|e: accompanion_core::Error| e.to_string())
}

pub fn parse_variant(s: &str) -> Result<TempoVariant, String> {
    s.parse().map_err(|e: accompanion_core::Error| e.to_string())
}

impl EngineArgs {
    /// Applies the flags on top of the config file.
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(kind) = self.follower {
            cfg.follower.kind = kind;
        }
        if let Some(variant) = self.tempo {
            if cfg.tempo.variant()? != variant && !cfg.tempo.params.is_empty() {
                log::warn!(
                    "ignoring tempo.params from the config: they belong to {}",
                    cfg.tempo.variant
                );
                cfg.tempo.params.clear();
            }
            cfg.tempo.variant = variant.name().to_string();
        }
        if !self.refs.is_empty() {
            cfg.follower.oltw.references = self.refs.clone();
        }
        if let Some(r) = &self.accomp_ref {
            cfg.accomp.reference = Some(r.clone());
        }
        if let Some(bpm) = self.bpm {
            cfg.tempo.initial_bpm = Some(bpm);
        }
        cfg.validate()?;
        Ok(())
    }

    pub fn build(&self, cfg: &mut RunConfig) -> Result<(Engine, EngineConfig)> {
        self.apply(cfg)?;
        let score = self.score.load(PartMode::Duet)?;
        let references = cfg
            .follower
            .oltw
            .references
            .iter()
            .map(|p| inputs::load_performance(p, &score))
            .collect::<Result<Vec<_>>>()?;
        let accompaniment = cfg
            .accomp
            .reference
            .as_deref()
            .map(|p| inputs::load_accompaniment(p, &score))
            .transpose()?;
        let engine_cfg = EngineConfig::from_run_config(cfg)?;
        let engine = Engine::new(&score, &references, accompaniment, &engine_cfg)?;
        log::info!(
            "follower {}, tempo {} ({}), {} reference(s)",
            engine_cfg.follower,
            engine_cfg.tempo.variant(),
            engine_cfg.tempo,
            references.len()
        );
        Ok((engine, engine_cfg))
    }
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Recorded solo performance (SMF)
    #[arg(long)]
    pub solo: PathBuf,
    /// Where to write the accompaniment SMF
    #[arg(long)]
    pub out: PathBuf,
    /// Per-onset log CSV [default: <out>.log.csv]
    #[arg(long)]
    pub onset_log: Option<PathBuf>,
}

pub fn replay(args: &ReplayArgs, cfg: &mut RunConfig) -> Result<()> {
    let (mut engine, engine_cfg) = args.engine.build(cfg)?;
    let events = inputs::read_events(&args.solo)?;
    let (writer, outcome) = run_replay(&mut engine, events, engine_cfg.window, SmfWriter::new())?;
    inputs::write(&args.out, &writer.to_bytes())?;
    let log_path = args
        .onset_log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("log.csv"));
    write_log(&log_path, &outcome)?;
    report(&outcome, &args.out, &log_path);
    Ok(())
}

fn write_log(path: &Path, outcome: &RunOutcome) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot write `{}`", path.display()))?;
    write_onset_log(&outcome.log, file)?;
    Ok(())
}

fn report(outcome: &RunOutcome, out: &Path, log_path: &Path) {
    println!(
        "{} solo onsets logged, {} accompaniment notes played, {} onsets skipped",
        outcome.log.len(),
        outcome.stats.note_ons,
        outcome.skipped_onsets
    );
    if outcome.large_jumps > 0 {
        println!(
            "warning: the follower jumped past more than {MAX_QUIET_SKIP} onsets {} time(s)",
            outcome.large_jumps
        );
    }
    println!("accompaniment: {}", out.display());
    println!("onset log: {}", log_path.display());
}

#[derive(Args, Debug)]
pub struct LiveArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Soloist input port (device path or index)
    #[arg(long, conflicts_with = "replay")]
    pub input_port: Option<String>,
    /// Play a recorded solo in real time instead of reading a port
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Playback speed factor for --replay
    #[arg(long, default_value_t = 1.0, requires = "replay")]
    pub speed: f64,
    /// Accompaniment output port (device path or index)
    #[arg(long)]
    pub output_port: Option<String>,
    /// Output latency compensation in milliseconds
    #[arg(long)]
    pub latency_ms: Option<f64>,
    /// Also record the accompaniment to this SMF
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-onset log CSV
    #[arg(long)]
    pub onset_log: Option<PathBuf>,
}

/// Sends to the output port, if any, and records everything sent.
struct LiveSink {
    port: Option<RawPortSink<File>>,
    record: SmfWriter,
}

impl MidiSink for LiveSink {
    fn send(&mut self, event: MidiEvent) -> accompanion_core::Result<()> {
        if let Some(port) = &mut self.port {
            port.send(event)?;
        }
        self.record.send(event)
    }
}

pub fn live(args: &LiveArgs, cfg: &mut RunConfig) -> Result<()> {
    if let Some(p) = &args.input_port {
        cfg.midi.input_port = Some(p.clone());
    }
    if let Some(p) = &args.output_port {
        cfg.midi.output_port = Some(p.clone());
    }
    if let Some(ms) = args.latency_ms {
        cfg.midi.latency_ms = ms;
    }
    let (mut engine, engine_cfg) = args.engine.build(cfg)?;

    let port = cfg.midi.output_port.as_deref().map(open_output_port).transpose()?;
    if port.is_none() && args.out.is_none() {
        bail!("nowhere to send the accompaniment: give --output-port or --out");
    }
    let sink = LiveSink {
        port,
        record: SmfWriter::new(),
    };

    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)).context("cannot install the interrupt handler")?;

    let (tx, rx) = mpsc::channel();
    let start = Instant::now();
    match (&args.replay, cfg.midi.input_port.as_deref()) {
        (Some(path), _) => {
            let events: Vec<MidiEvent> =
                replay_events(inputs::read_events(path)?, args.speed, ClockMode::Virtual)?.collect();
            spawn_replay_source(events, start, tx);
        }
        (None, Some(name)) => spawn_port_reader(open_input_port(name)?, start, tx),
        (None, None) => bail!("no solo input: give --input-port or --replay"),
    }
    log::info!("listening; interrupt to stop");

    let latency = cfg.midi.latency_ms * 1e-3;
    let (sink, outcome) = run_live(&mut engine, rx, engine_cfg.window, sink, latency, start, &stop)?;
    if stop.load(Ordering::Relaxed) {
        log::info!("stopped by interrupt");
    }
    if let Some(out) = &args.out {
        inputs::write(out, &sink.record.to_bytes())?;
        println!("accompaniment: {}", out.display());
    }
    if let Some(path) = &args.onset_log {
        write_log(path, &outcome)?;
        println!("onset log: {}", path.display());
    }
    println!(
        "{} solo onsets, {} accompaniment notes played",
        outcome.log.len(),
        outcome.stats.note_ons
    );
    Ok(())
}
