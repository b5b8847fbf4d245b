//! Run configuration file (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [follower]
//! kind = "oltw"
//! [follower.hmm]
//! p_self = 0.5
//! [follower.oltw]
//! window_sec = 2.0
//! step_sec = 0.1
//! references = ["refs/take1.mid"]   # alignment in refs/take1.csv
//!
//! [tempo]
//! variant = "LTE"
//! initial_bpm = 96
//! [tempo.params]
//! eta_o = 0.5
//!
//! [accomp]
//! balance = 0.8
//! velocity_ema = 0.7
//! retime_horizon_ms = 20
//! reference = "refs/accomp.mid"
//!
//! [midi]
//! input_port = "0"
//! output_port = "/dev/snd/midiC1D0"
//! latency_ms = 0
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::accompanist::AccompConfig;
use crate::error::{Error, Result};
use crate::follower::{FollowerKind, HmmConfig, OltwConfig};
use crate::tempo::{TempoParams, TempoVariant};

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub follower: FollowerSection,
    pub tempo: TempoSection,
    pub accomp: AccompSection,
    pub midi: MidiSection,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowerSection {
    pub kind: FollowerKind,
    pub hmm: HmmConfig,
    pub oltw: OltwSection,
}

impl Default for FollowerSection {
    fn default() -> Self {
        FollowerSection {
            kind: FollowerKind::Hmm,
            hmm: HmmConfig::default(),
            oltw: OltwSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OltwSection {
    pub window_sec: f64,
    pub step_sec: f64,
    /// Reference performances (SMF); each needs a sibling `.csv` alignment.
    pub references: Vec<PathBuf>,
}

impl Default for OltwSection {
    fn default() -> Self {
        let d = OltwConfig::default();
        OltwSection {
            window_sec: d.window_sec,
            step_sec: d.step_sec,
            references: Vec::new(),
        }
    }
}

impl OltwSection {
    pub fn oltw_config(&self) -> OltwConfig {
        OltwConfig {
            window_sec: self.window_sec,
            step_sec: self.step_sec,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TempoSection {
    pub variant: String,
    pub initial_bpm: Option<f64>,
    pub params: BTreeMap<String, f64>,
}

impl Default for TempoSection {
    fn default() -> Self {
        TempoSection {
            variant: TempoVariant::LTE.name().to_string(),
            initial_bpm: None,
            params: BTreeMap::new(),
        }
    }
}

impl TempoSection {
    pub fn variant(&self) -> Result<TempoVariant> {
        self.variant.parse()
    }

    pub fn params(&self) -> Result<TempoParams> {
        TempoParams::with_overrides(self.variant()?, &self.params)
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccompSection {
    pub balance: f64,
    pub velocity_ema: f64,
    pub retime_horizon_ms: f64,
    /// Recorded accompaniment (SMF) with a sibling `.csv` alignment.
    pub reference: Option<PathBuf>,
}

impl Default for AccompSection {
    fn default() -> Self {
        let d = AccompConfig::default();
        AccompSection {
            balance: d.balance,
            velocity_ema: d.velocity_ema,
            retime_horizon_ms: d.retime_horizon_ms,
            reference: None,
        }
    }
}

impl AccompSection {
    pub fn accomp_config(&self) -> AccompConfig {
        AccompConfig {
            balance: self.balance,
            velocity_ema: self.velocity_ema,
            retime_horizon_ms: self.retime_horizon_ms,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MidiSection {
    pub input_port: Option<String>,
    pub output_port: Option<String>,
    pub latency_ms: f64,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for r in &mut cfg.follower.oltw.references {
            if r.is_relative() {
                *r = base.join(&*r);
            }
        }
        if let Some(r) = &mut cfg.accomp.reference {
            if r.is_relative() {
                *r = base.join(&*r);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.follower.hmm.validate()?;
        self.follower.oltw.oltw_config().frames(crate::midi::WINDOW_SEC)?;
        self.tempo.params()?;
        if let Some(bpm) = self.tempo.initial_bpm {
            if !(bpm.is_finite() && bpm > 0.0) {
                return Err(Error::Config(format!("tempo.initial_bpm must be positive, got {bpm}")));
            }
        }
        self.accomp.accomp_config().validate()?;
        if !(self.midi.latency_ms.is_finite() && self.midi.latency_ms >= 0.0) {
            return Err(Error::Config("midi.latency_ms must be non-negative".into()));
        }
        if self.follower.kind == FollowerKind::Oltw && self.follower.oltw.references.is_empty() {
            return Err(Error::Config("the oltw follower needs follower.oltw.references".into()));
        }
        for path in self.follower.oltw.references.iter().chain(self.accomp.reference.iter()) {
            if !path.exists() {
                return Err(Error::Config(format!("reference `{}` does not exist", path.display())));
            }
            let csv = alignment_path(path);
            if !csv.exists() {
                return Err(Error::Config(format!("alignment `{}` does not exist", csv.display())));
            }
        }
        Ok(())
    }
}

/// Alignment CSV that accompanies a reference performance file.
pub fn alignment_path(performance: &Path) -> PathBuf {
    performance.with_extension("csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.follower.kind, FollowerKind::Hmm);
        assert_eq!(cfg.tempo.variant().unwrap(), TempoVariant::LTE);
        assert_eq!(cfg.follower.oltw.window_sec, 2.0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn dotted_keys() {
        let cfg = RunConfig::from_toml_str(
            r#"
            seed = 3
            follower.kind = "hmm"
            follower.hmm.p_self = 0.4
            follower.oltw.step_sec = 0.05
            tempo.variant = "KT"
            tempo.params.lambda = 0.1
            accomp.balance = 1.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.follower.hmm.p_self, 0.4);
        assert_eq!(cfg.follower.oltw.step_sec, 0.05);
        match cfg.tempo.params().unwrap() {
            TempoParams::Kalman { lambda, .. } => assert_eq!(lambda, 0.1),
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.accomp.balance, 1.0);
    }

    #[test]
    fn rejects_unknown_keys_and_variants() {
        assert!(RunConfig::from_toml_str("follower.hmm.nope = 1").is_err());
        let cfg = RunConfig::from_toml_str("tempo.variant = \"XX\"").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("LTE"), "{err}");
    }

    #[test]
    fn oltw_needs_references() {
        let cfg = RunConfig::from_toml_str("follower.kind = \"oltw\"").unwrap();
        assert!(cfg.validate().is_err());
    }
}
