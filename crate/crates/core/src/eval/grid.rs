use std::collections::BTreeMap;
use std::path::Path;

use super::tempo_exp::{run_tempo_experiment, TempoErrorReport, TempoTrial};
use crate::error::{Error, Result};
use crate::tempo::{TempoParams, TempoVariant};

/// 0.1, 0.2, ..., 1.0
fn tenths() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

/// Learning-rate grid searched for each variant.
pub fn default_grid(variant: TempoVariant) -> Vec<TempoParams> {
    let rates = tenths();
    match variant {
        TempoVariant::R => vec![TempoParams::Reactive],
        TempoVariant::MA => rates.iter().map(|&eta| TempoParams::MovingAverage { eta }).collect(),
        TempoVariant::L | TempoVariant::LTE => rates
            .iter()
            .flat_map(|&eta_o| {
                rates.iter().map(move |&eta_b| match variant {
                    TempoVariant::L => TempoParams::Linear { eta_o, eta_b },
                    _ => TempoParams::Lte { eta_o, eta_b },
                })
            })
            .collect(),
        TempoVariant::JADAM => {
            let mut out = Vec::new();
            for &eta_o in &rates {
                for eta_b in [0.2, 0.4, 0.6, 0.8, 1.0] {
                    for &eta_a in &rates {
                        out.push(TempoParams::Jadam { eta_o, eta_b, eta_a });
                    }
                }
            }
            out
        }
        TempoVariant::KT => {
            let mut out = Vec::new();
            for alpha in [0.95, 1.0, 1.05] {
                for beta in [1e-4, 1e-3, 1e-2] {
                    for gamma in [0.9, 1.0, 1.1] {
                        for lambda in [1e-3, 1e-2, 1e-1] {
                            out.push(TempoParams::Kalman {
                                alpha,
                                beta,
                                gamma,
                                lambda,
                                v0: 1.0,
                            });
                        }
                    }
                }
            }
            out
        }
    }
}

/// Reads a grid file: one table per variant, each key a list of values;
/// the grid is their cartesian product over the variant's defaults.
///
/// ```toml
/// [L]
/// eta_o = [0.2, 0.5]
/// eta_b = [0.1]
/// ```
pub fn load_grid(path: &Path, variant: TempoVariant) -> Result<Vec<TempoParams>> {
    let text = std::fs::read_to_string(path)?;
    parse_grid(&text, variant)
}

pub fn parse_grid(text: &str, variant: TempoVariant) -> Result<Vec<TempoParams>> {
    let tables: BTreeMap<String, BTreeMap<String, Vec<f64>>> =
        toml::from_str(text).map_err(|e| Error::Config(format!("grid file: {e}")))?;
    let Some(axes) = tables
        .iter()
        .find(|(k, _)| k.parse::<TempoVariant>().ok() == Some(variant))
        .map(|(_, v)| v)
    else {
        return Err(Error::Config(format!("grid file has no [{variant}] table")));
    };
    let mut combos: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new()];
    for (key, values) in axes {
        if values.is_empty() {
            return Err(Error::Config(format!("grid axis {key} is empty")));
        }
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |&v| {
                    let mut c = c.clone();
                    c.insert(key.clone(), v);
                    c
                })
            })
            .collect();
    }
    combos.iter().map(|c| TempoParams::with_overrides(variant, c)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best: TempoErrorReport,
    pub evaluated: Vec<TempoErrorReport>,
}

/// Evaluates every grid point and keeps the one with the lowest onset
/// error (ties go to the lexicographically smaller parameters). Points are
/// spread over threads; the result does not depend on scheduling.
pub fn grid_search(trials: &[TempoTrial], grid: &[TempoParams]) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Experiment("empty parameter grid".into()));
    }
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(grid.len());
    let chunk = grid.len().div_ceil(threads);
    let evaluated: Vec<TempoErrorReport> = std::thread::scope(|scope| {
        let handles: Vec<_> = grid
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&p| run_tempo_experiment(trials, p))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("grid worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    let best = evaluated
        .iter()
        .min_by(|a, b| a.selection_order(b))
        .cloned()
        .expect("grid is not empty");
    Ok(GridResult { best, evaluated })
}
