//! `eval follower` and `eval tempo`: offline experiments and their tables.

use std::fs::File;
use std::path::{Path, PathBuf};

use accompanion_core::config::{alignment_path, RunConfig};
use accompanion_core::engine::EngineConfig;
use accompanion_core::eval::corpus::{expressive_corpus, robustness_setup};
use accompanion_core::eval::{
    default_grid, follower_table, grid_search, load_grid, perturb_performance, run_follower_experiment, tempo_table,
    write_follower_csv, write_tempo_csv, TempoTrial,
};
use accompanion_core::follower::FollowerKind;
use accompanion_core::score::{parse_alignment_csv, PartMode, ReferencePerformance, Score};
use accompanion_core::tempo::{TempoParams, TempoVariant};
use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};

use crate::inputs::{self, ScoreArgs};
use crate::perform::{parse_follower, parse_variant};

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Follower asynchrony against a ground-truth alignment
    Follower(FollowerArgs),
    /// One-step tempo prediction error with a parameter grid search
    Tempo(TempoArgs),
}

#[derive(Args, Debug)]
pub struct FollowerArgs {
    /// Score (.toml or .mid); without it the built-in 200-onset
    /// robustness piece is used
    #[arg(long)]
    pub score: Option<PathBuf>,
    /// MIDI score track holding the solo part
    #[arg(long, default_value_t = 0)]
    pub solo_track: usize,
    /// Test performance (SMF, alignment in the sibling .csv)
    #[arg(long, requires = "score")]
    pub perf: Option<PathBuf>,
    /// Reference performances; without them, noisy copies of the test
    /// performance are used
    #[arg(long, num_args = 1.., requires = "perf")]
    pub refs: Vec<PathBuf>,
    /// Follower to evaluate [default: both]
    #[arg(long, value_parser = parse_follower)]
    pub kind: Option<FollowerKind>,
    /// Onset noise of generated references in milliseconds
    #[arg(long, default_value_t = 100.0)]
    pub sigma_ms: f64,
    /// Number of generated references
    #[arg(long, default_value_t = 5)]
    pub ref_count: usize,
    /// Also write the table as CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `all` or one tempo variant.
#[derive(Clone, Copy, Debug)]
pub enum VariantChoice {
    All,
    One(TempoVariant),
}

impl VariantChoice {
    fn variants(self) -> Vec<TempoVariant> {
        match self {
            VariantChoice::All => TempoVariant::ALL.to_vec(),
            VariantChoice::One(v) => vec![v],
        }
    }
}

fn parse_choice(s: &str) -> Result<VariantChoice, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(VariantChoice::All);
    }
    parse_variant(s).map(VariantChoice::One)
}

#[derive(Args, Debug)]
pub struct TempoArgs {
    /// Tempo model to evaluate, or `all`
    #[arg(long, default_value = "all", value_parser = parse_choice)]
    pub variant: VariantChoice,
    /// Parameter grid: `default` or a grid file
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// Test performances as alignment CSVs (or SMFs with a sibling .csv);
    /// without them the built-in expressive corpus is used
    #[arg(long, num_args = 1..)]
    pub perf: Vec<PathBuf>,
    /// Reference performances for LTE (SMF, alignment in the sibling .csv)
    #[arg(long, num_args = 1.., requires = "perf")]
    pub refs: Vec<PathBuf>,
    /// Also write the table as CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cmd: &EvalCommand, cfg: &RunConfig, seed: Option<u64>) -> Result<()> {
    match cmd {
        EvalCommand::Follower(args) => follower(args, cfg, seed),
        EvalCommand::Tempo(args) => tempo(args),
    }
}

fn follower(args: &FollowerArgs, cfg: &RunConfig, seed: Option<u64>) -> Result<()> {
    let (score, test, references) = follower_inputs(args, seed)?;
    let engine_cfg = EngineConfig::from_run_config(cfg)?;
    let kinds = match args.kind {
        Some(k) => vec![k],
        None => FollowerKind::ALL.to_vec(),
    };
    let rows = kinds
        .into_iter()
        .map(|kind| {
            let report = run_follower_experiment(&score, &test, &references, kind, &engine_cfg)
                .with_context(|| format!("{kind} follower"))?;
            Ok((kind.name().to_uppercase(), report))
        })
        .collect::<Result<Vec<_>>>()?;
    print!("{}", follower_table(&rows));
    if let Some(out) = &args.out {
        write_follower_csv(&rows, create(out)?)?;
    }
    Ok(())
}

fn follower_inputs(
    args: &FollowerArgs,
    seed: Option<u64>,
) -> Result<(Score, ReferencePerformance, Vec<ReferencePerformance>)> {
    let Some(score) = &args.score else {
        let setup = robustness_setup()?;
        let references = match seed {
            Some(seed) => perturb_performance(&setup.test, args.sigma_ms, args.ref_count, seed)?,
            None => setup.references,
        };
        return Ok((setup.score, setup.test, references));
    };
    let Some(perf) = &args.perf else {
        bail!("--score needs a test performance: give --perf");
    };
    let score = ScoreArgs {
        score: score.clone(),
        solo_track: args.solo_track,
        accomp_track: 1,
    }
    .load(PartMode::SoloOnly)?;
    let test = inputs::load_performance(perf, &score)?;
    let references = if args.refs.is_empty() {
        perturb_performance(&test, args.sigma_ms, args.ref_count, seed.unwrap_or(0))?
    } else {
        args.refs
            .iter()
            .map(|p| inputs::load_performance(p, &score))
            .collect::<Result<Vec<_>>>()?
    };
    Ok((score, test, references))
}

fn tempo(args: &TempoArgs) -> Result<()> {
    let trials = if args.perf.is_empty() {
        expressive_corpus()?
    } else {
        let curves = args
            .refs
            .iter()
            .map(|p| Ok(inputs::load_unscored_performance(p)?.tempo_curve().clone()))
            .collect::<Result<Vec<_>>>()?;
        args.perf
            .iter()
            .map(|p| {
                let csv = alignment_path(p);
                let points = parse_alignment_csv(&inputs::read(&csv)?)
                    .with_context(|| format!("alignment `{}`", csv.display()))?;
                let onsets = points.iter().map(|a| (a.score_onset_beats, a.perf_onset_sec)).collect();
                Ok(TempoTrial::new(onsets, curves.clone())?)
            })
            .collect::<Result<Vec<_>>>()?
    };
    let rows = args
        .variant
        .variants()
        .into_iter()
        .map(|variant| {
            let grid = grid_for(&args.grid, variant)?;
            log::info!("{variant}: {} grid points", grid.len());
            Ok(grid_search(&trials, &grid)?.best)
        })
        .collect::<Result<Vec<_>>>()?;
    print!("{}", tempo_table(&rows));
    if let Some(out) = &args.out {
        write_tempo_csv(&rows, create(out)?)?;
    }
    Ok(())
}

fn grid_for(grid: &str, variant: TempoVariant) -> Result<Vec<TempoParams>> {
    if grid == "default" {
        return Ok(default_grid(variant));
    }
    let path = Path::new(grid);
    load_grid(path, variant).with_context(|| format!("grid `{}`", path.display()))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("cannot write `{}`", path.display()))
}
