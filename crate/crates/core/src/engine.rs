//! Accompaniment pipeline: input windows drive the score follower, detected
//! soloist onsets drive the tempo model and the encoder, and the scheduler
//! hands timed accompaniment notes to the dispatcher.

use std::io::Read;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use crate::accompanist::{AccompConfig, AccompanimentEvent, AccompanimentReference, Encoder, Scheduler, TempoContext};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::follower::{
    featurize_reference, Ensemble, FollowerKind, HmmConfig, HmmFollower, OltwConfig, OltwFollower, ScoreFollower,
    ScorePositionEstimate,
};
use crate::midi::{DispatchStats, Dispatcher, InputWindow, MidiEvent, MidiSink, RawMidiParser, WindowConfig, Windower};
use crate::score::{build_onset_grid, Chord, OnsetGrid, Part, ReferencePerformance, Score};
use crate::tempo::{TempoModel, TempoObservation, TempoParams, DEFAULT_BEAT_PERIOD};

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub follower: FollowerKind,
    pub hmm: HmmConfig,
    pub oltw: OltwConfig,
    pub tempo: TempoParams,
    /// Overrides the score's starting tempo.
    pub initial_bpm: Option<f64>,
    pub accomp: AccompConfig,
    pub window: WindowConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            follower: FollowerKind::Hmm,
            hmm: HmmConfig::default(),
            oltw: OltwConfig::default(),
            tempo: crate::tempo::TempoVariant::LTE.default_params(),
            initial_bpm: None,
            accomp: AccompConfig::default(),
            window: WindowConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_run_config(cfg: &RunConfig) -> Result<Self> {
        Ok(EngineConfig {
            follower: cfg.follower.kind,
            hmm: cfg.follower.hmm.clone(),
            oltw: cfg.follower.oltw.oltw_config(),
            tempo: cfg.tempo.params()?,
            initial_bpm: cfg.tempo.initial_bpm,
            accomp: cfg.accomp.accomp_config(),
            window: WindowConfig::default(),
        })
    }
}

/// One row of the per-onset log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnsetLogRow {
    pub score_onset: f64,
    /// Time the onset was detected (window end).
    pub perf_sec: f64,
    pub est_position: f64,
    /// Predicted time of this onset.
    pub o_hat: f64,
    /// Beat period after the update.
    pub beat_period: f64,
    /// Predicted minus detected onset time (seconds).
    pub asynchrony: f64,
}

pub fn write_onset_log<W: std::io::Write>(rows: &[OnsetLogRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "score_onset",
        "perf_sec",
        "est_position",
        "o_hat",
        "beat_period",
        "asynchrony",
    ])?;
    for r in rows {
        w.write_record([
            format!("{}", r.score_onset),
            format!("{:.6}", r.perf_sec),
            format!("{:.6}", r.est_position),
            format!("{:.6}", r.o_hat),
            format!("{:.6}", r.beat_period),
            format!("{:.6}", r.asynchrony),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Builds the follower selected by `cfg`.
pub fn build_follower(
    score: &Score,
    references: &[ReferencePerformance],
    cfg: &EngineConfig,
    beat_period: f64,
) -> Result<Box<dyn ScoreFollower>> {
    match cfg.follower {
        FollowerKind::Hmm => Ok(Box::new(HmmFollower::new(score, cfg.hmm.clone(), 60.0 / beat_period)?)),
        FollowerKind::Oltw => {
            if references.is_empty() {
                return Err(Error::Config(
                    "the oltw follower needs at least one reference performance".into(),
                ));
            }
            let grid = build_onset_grid(score, Part::Solo)?;
            let members = references
                .iter()
                .map(|r| OltwFollower::new(featurize_reference(r, &cfg.window), grid.clone(), &cfg.oltw))
                .collect::<Result<Vec<_>>>()?;
            Ok(Box::new(Ensemble::new(members)?))
        }
    }
}

pub struct Engine {
    grid: OnsetGrid,
    chords: Vec<Chord>,
    follower: Box<dyn ScoreFollower>,
    tempo: TempoModel,
    encoder: Encoder,
    scheduler: Scheduler,
    heard: bool,
    last: Option<(usize, f64)>,
    log: Vec<OnsetLogRow>,
}

impl Engine {
    pub fn new(
        score: &Score,
        references: &[ReferencePerformance],
        accompaniment: Option<AccompanimentReference>,
        cfg: &EngineConfig,
    ) -> Result<Self> {
        score.require_duet()?;
        cfg.accomp.validate()?;
        let beat_period = match cfg.initial_bpm {
            Some(bpm) if bpm.is_finite() && bpm > 0.0 => 60.0 / bpm,
            Some(bpm) => return Err(Error::Config(format!("initial tempo must be positive, got {bpm}"))),
            None => score.initial_beat_period().unwrap_or(DEFAULT_BEAT_PERIOD),
        };
        let follower = build_follower(score, references, cfg, beat_period)?;
        let tempo = TempoModel::new(cfg.tempo, beat_period)?
            .with_reference_curves(references.iter().map(|r| r.tempo_curve().clone()).collect());
        Ok(Engine {
            grid: build_onset_grid(score, Part::Solo)?,
            chords: score.chords(Part::Solo),
            follower,
            tempo,
            encoder: Encoder::new(beat_period, cfg.accomp.velocity_ema),
            scheduler: Scheduler::new(score, cfg.accomp.clone(), accompaniment),
            heard: false,
            last: None,
            log: Vec::new(),
        })
    }

    pub fn tempo(&self) -> &TempoModel {
        &self.tempo
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn log(&self) -> &[OnsetLogRow] {
        &self.log
    }

    /// Feeds one window through follower, tempo model, encoder and
    /// scheduler.
    pub fn process(&mut self, window: &InputWindow) -> ScorePositionEstimate {
        let est = self.follower.step(window);
        self.encoder.observe_releases(&window.released);
        self.heard |= !window.onsets.is_empty();
        let Some(index) = est.onset_index.filter(|_| self.heard) else {
            return est;
        };
        if self.last.is_some_and(|(i, _)| index <= i) {
            return est;
        }
        let now = window.window_end_sec;
        let score_onset = self.grid.onsets[index];
        let delta_next = match self.grid.onsets.get(index + 1) {
            Some(next) => next - score_onset,
            None => self.grid.iois.last().copied().unwrap_or(1.0),
        };
        let mut obs = TempoObservation::first(now, score_onset, delta_next);
        if let Some((i, t)) = self.last {
            obs = obs.with_previous(score_onset - self.grid.onsets[i], now - t);
        }
        let prediction = self.tempo.update(&obs);
        self.last = Some((index, now));

        let chord = self
            .chords
            .get(index)
            .filter(|c| (c.onset_beats - score_onset).abs() < 1e-9);
        self.encoder.observe_onset(now, score_onset, &window.onsets, chord);
        let ctx = TempoContext {
            o_hat_next: prediction.o_hat_next,
            score_onset_next: obs.score_onset_next(),
            beat_period: prediction.b_next,
        };
        self.scheduler.update(now, score_onset, &ctx, self.encoder.params());
        log::debug!(
            "onset {score_onset} at {now:.3}s: position {:.3}, b {:.4}, A {:+.1} ms",
            est.position_beats,
            prediction.b_next,
            prediction.asynchrony * 1e3
        );
        self.log.push(OnsetLogRow {
            score_onset,
            perf_sec: now,
            est_position: est.position_beats,
            o_hat: now + prediction.asynchrony,
            beat_period: prediction.b_next,
            asynchrony: prediction.asynchrony,
        });
        est
    }

    /// Accompaniment notes that must be committed by `now`.
    pub fn take_due(&mut self, now: f64) -> Vec<AccompanimentEvent> {
        self.scheduler.take_due(now)
    }

    /// Commits every timed note still pending (the soloist has stopped).
    pub fn drain(&mut self) -> Vec<AccompanimentEvent> {
        self.scheduler.take_due(f64::INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub log: Vec<OnsetLogRow>,
    pub stats: DispatchStats,
    pub skipped_onsets: usize,
    /// Updates that skipped more than [`crate::accompanist::MAX_QUIET_SKIP`] onsets at once.
    pub large_jumps: usize,
}

/// Runs the engine on a recorded solo in virtual time. The output is
/// deterministic for a given input.
pub fn run_replay<S: MidiSink>(
    engine: &mut Engine,
    events: impl IntoIterator<Item = MidiEvent>,
    window: WindowConfig,
    sink: S,
) -> Result<(S, RunOutcome)> {
    let mut dispatcher = Dispatcher::new(sink, 0.0);
    let mut windower = Windower::new(window);
    let mut now = 0.0;
    let mut tick = |engine: &mut Engine, dispatcher: &mut Dispatcher<S>, w: InputWindow| -> Result<()> {
        now = w.window_end_sec;
        dispatcher.advance(now)?;
        engine.process(&w);
        for e in engine.take_due(now) {
            dispatcher.submit(&e, now);
        }
        Ok(())
    };
    let mut result = (|| {
        for e in events {
            for w in windower.push(e)? {
                tick(engine, &mut dispatcher, w)?;
            }
        }
        if let Some(w) = windower.finish() {
            tick(engine, &mut dispatcher, w)?;
        }
        Ok(())
    })();
    if result.is_ok() {
        for e in engine.drain() {
            dispatcher.submit(&e, now);
        }
        result = dispatcher.flush();
    }
    if let Err(e) = result {
        dispatcher.all_notes_off(now)?;
        return Err(e);
    }
    let stats = dispatcher.stats();
    Ok((
        dispatcher.into_sink(),
        RunOutcome {
            log: engine.log().to_vec(),
            stats,
            skipped_onsets: engine.scheduler().skipped_onsets(),
            large_jumps: engine.scheduler().large_jumps(),
        },
    ))
}

/// Reads raw MIDI bytes from `input` on a background thread, stamping each
/// message against `start`. The thread ends at end of input.
pub fn spawn_port_reader<R: Read + Send + 'static>(mut input: R, start: Instant, tx: Sender<MidiEvent>) {
    std::thread::spawn(move || {
        let mut parser = RawMidiParser::new();
        let mut buf = [0u8; 64];
        loop {
            let n = match input.read(&mut buf) {
                Ok(0) => return,
                Ok(n) => n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    log::error!("input port: {e}");
                    return;
                }
            };
            let t = start.elapsed().as_secs_f64();
            for &b in &buf[..n] {
                if let Some(ev) = parser.push(b, t) {
                    if tx.send(ev).is_err() {
                        return;
                    }
                }
            }
        }
    });
}

/// Plays recorded events into `tx` in real time relative to `start`.
pub fn spawn_replay_source(events: Vec<MidiEvent>, start: Instant, tx: Sender<MidiEvent>) {
    std::thread::spawn(move || {
        for mut ev in events {
            let due = start + Duration::from_secs_f64(ev.timestamp_sec.max(0.0));
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
            ev.timestamp_sec = start.elapsed().as_secs_f64();
            if tx.send(ev).is_err() {
                return;
            }
        }
    });
}

const POLL: Duration = Duration::from_millis(1);

fn output_loop<S: MidiSink>(
    sink: S,
    latency_sec: f64,
    start: Instant,
    rx: Receiver<AccompanimentEvent>,
    stop: &AtomicBool,
) -> Result<(S, DispatchStats)> {
    let mut dispatcher = Dispatcher::new(sink, latency_sec);
    let mut closed = false;
    let result = loop {
        if stop.load(Ordering::Relaxed) {
            break Ok(());
        }
        match rx.recv_timeout(POLL) {
            Ok(e) => dispatcher.submit(&e, start.elapsed().as_secs_f64()),
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => closed = true,
        }
        if let Err(e) = dispatcher.advance(start.elapsed().as_secs_f64()) {
            break Err(e);
        }
        if closed && dispatcher.pending() == 0 {
            break Ok(());
        }
    };
    let silenced = dispatcher.all_notes_off(start.elapsed().as_secs_f64());
    result?;
    silenced?;
    let stats = dispatcher.stats();
    Ok((dispatcher.into_sink(), stats))
}

/// Real-time run. `input` delivers soloist events stamped against `start`;
/// the pipeline runs on the calling thread and the dispatcher on its own.
/// Returns when the input closes and all accompaniment has played, or when
/// `stop` is raised. Every sounding note is released on the way out.
pub fn run_live<S: MidiSink + Send>(
    engine: &mut Engine,
    input: Receiver<MidiEvent>,
    window: WindowConfig,
    sink: S,
    latency_sec: f64,
    start: Instant,
    stop: &AtomicBool,
) -> Result<(S, RunOutcome)> {
    let (out_tx, out_rx) = mpsc::channel::<AccompanimentEvent>();
    std::thread::scope(|scope| {
        let output = scope.spawn(move || output_loop(sink, latency_sec, start, out_rx, stop));
        let processed = process_loop(engine, &input, window, start, stop, &out_tx);
        if processed.is_err() {
            stop.store(true, Ordering::Relaxed);
        }
        drop(out_tx);
        let (sink, stats) = output
            .join()
            .map_err(|_| Error::SinkUnavailable("output thread panicked".into()))??;
        processed?;
        Ok((
            sink,
            RunOutcome {
                log: engine.log().to_vec(),
                stats,
                skipped_onsets: engine.scheduler().skipped_onsets(),
                large_jumps: engine.scheduler().large_jumps(),
            },
        ))
    })
}

fn process_loop(
    engine: &mut Engine,
    input: &Receiver<MidiEvent>,
    window: WindowConfig,
    start: Instant,
    stop: &AtomicBool,
    out: &Sender<AccompanimentEvent>,
) -> Result<()> {
    let mut windower = Windower::new(window);
    loop {
        if stop.load(Ordering::Relaxed) {
            return Ok(());
        }
        let (windows, done) = match input.recv_timeout(POLL) {
            Ok(e) => (windower.push(e)?, false),
            Err(RecvTimeoutError::Timeout) => (windower.advance_to(start.elapsed().as_secs_f64()), false),
            Err(RecvTimeoutError::Disconnected) => (windower.finish().into_iter().collect(), true),
        };
        for w in windows {
            let now = w.window_end_sec;
            engine.process(&w);
            for e in engine.take_due(now) {
                let _ = out.send(e);
            }
        }
        if done {
            for e in engine.drain() {
                let _ = out.send(e);
            }
            return Ok(());
        }
    }
}
