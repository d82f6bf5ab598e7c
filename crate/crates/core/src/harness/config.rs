//! Experiment configuration documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenarios;
use crate::baselines::{ControllerConfig, ControllerKind};
use crate::error::{Error, Result};
use crate::meta::{AdaptConfig, MamlConfig};
use crate::sim::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Amm,
    AmmNonModular,
    AmmSeqPretrain,
    FixedTime,
    Sotl,
    MaxPressure,
    Random,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Amm,
        Method::AmmNonModular,
        Method::AmmSeqPretrain,
        Method::FixedTime,
        Method::Sotl,
        Method::MaxPressure,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Amm => "AMM",
            Method::AmmNonModular => "AMM_NON_MODULAR",
            Method::AmmSeqPretrain => "AMM_SEQ_PRETRAIN",
            Method::FixedTime => "FIXED_TIME",
            Method::Sotl => "SOTL",
            Method::MaxPressure => "MAX_PRESSURE",
            Method::Random => "RANDOM",
        }
    }

    /// Methods that transfer learned models from the source cities.
    pub fn is_learned(self) -> bool {
        matches!(self, Method::Amm | Method::AmmNonModular | Method::AmmSeqPretrain)
    }

    pub fn controller_kind(self) -> Option<ControllerKind> {
        match self {
            Method::FixedTime => Some(ControllerKind::FixedTime),
            Method::Sotl => Some(ControllerKind::Sotl),
            Method::MaxPressure => Some(ControllerKind::MaxPressure),
            Method::Random => Some(ControllerKind::Random),
            _ => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::config("method", format!("unknown method `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A city given by built-in name, by path to a scenario document, or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CityRef {
    Named(String),
    Inline(Box<Scenario>),
}

impl CityRef {
    /// Built-in names are `city_a`, `city_b` and `city_c`; any other string is
    /// read as a path relative to `base`.
    pub fn resolve(&self, base: Option<&Path>) -> Result<Scenario> {
        let s = match self {
            CityRef::Inline(s) => (**s).clone(),
            CityRef::Named(name) => match name.as_str() {
                "city_a" => scenarios::city_a(),
                "city_b" => scenarios::city_b(),
                "city_c" => scenarios::city_c(),
                path => {
                    let p = base.map_or_else(|| PathBuf::from(path), |b| b.join(path));
                    if !p.exists() {
                        return Err(Error::config("city", format!("`{path}` is neither a built-in city nor a file")));
                    }
                    Scenario::load(&p)?
                }
            },
        };
        s.validate()?;
        Ok(s)
    }
}

/// Logged data for the offline case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OfflineConfig {
    /// JSONL log of target transitions; generated under fixed-time control when absent.
    pub log_path: Option<PathBuf>,
    pub generate: bool,
    pub log_episodes: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        OfflineConfig {
            log_path: None,
            generate: true,
            log_episodes: 1,
            epochs: 20,
            lr: 1e-3,
        }
    }
}

/// Architecture grid of the complexity sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Hidden units per layer.
    pub widths: Vec<usize>,
    /// Hidden layers per net.
    pub depths: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            widths: vec![32, 64, 128],
            depths: vec![1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_sources")]
    pub sources: Vec<CityRef>,
    #[serde(default = "default_target")]
    pub target: CityRef,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub maml: MamlConfig,
    #[serde(default)]
    pub adapt: AdaptConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Episodes logged per source city.
    #[serde(default = "default_source_episodes")]
    pub source_episodes: usize,
    /// Random-phase rate mixed into the source behavior controller.
    #[serde(default = "default_behavior_epsilon")]
    pub behavior_epsilon: f64,
    /// Hidden layers of the dynamics net.
    #[serde(default = "default_dyn_hidden")]
    pub dyn_hidden: Vec<usize>,
    /// Settings of the classical controllers; `kind` is taken from `method`.
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub offline: OfflineConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Budget fractions of the data-volume curve.
    #[serde(default = "default_fractions")]
    pub curve_fractions: Vec<f64>,
    /// Episodes that make up the full budget of the curve.
    #[serde(default = "default_full_budget")]
    pub curve_full_budget: usize,
}

fn default_sources() -> Vec<CityRef> {
    vec![CityRef::Named("city_a".into()), CityRef::Named("city_b".into())]
}
fn default_target() -> CityRef {
    CityRef::Named("city_c".into())
}
fn default_method() -> Method {
    Method::Amm
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_source_episodes() -> usize {
    20
}
fn default_behavior_epsilon() -> f64 {
    0.2
}
fn default_dyn_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}
fn default_full_budget() -> usize {
    10
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty document takes every default")
    }
}

/// A configuration with its cities loaded.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub sources: Vec<Scenario>,
    pub target: Scenario,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        Ok(serde_json::from_str(text)?)
    }

    /// Check every invariant and load the cities; nothing is simulated.
    pub fn resolve(&self, base: Option<&Path>) -> Result<Resolved> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        let target = self.target.resolve(base)?;
        let sources = self.sources.iter().map(|c| c.resolve(base)).collect::<Result<Vec<_>>>()?;
        if self.method.is_learned() {
            if sources.is_empty() {
                return Err(Error::config("sources", "learned methods need at least one source city"));
            }
            if let Some(s) = sources.iter().find(|s| s.schema == target.schema) {
                return Err(Error::config(
                    "target.schema",
                    format!(
                        "target `{}` and source `{}` share {}; source and target observations must differ",
                        target.name,
                        s.name,
                        target.schema.name()
                    ),
                ));
            }
            let n = target.network.state_grids;
            if let Some(s) = sources.iter().find(|s| s.network.state_grids != n) {
                return Err(Error::config("network.N", format!("`{}` uses N = {}, target uses {n}", s.name, s.network.state_grids)));
            }
            if self.adapt.dist.state_grids != n || self.adapt.value.state_grids != n {
                return Err(Error::config("adapt.dist.N", format!("must equal the networks' N = {n}")));
            }
            if self.source_episodes == 0 {
                return Err(Error::config("source_episodes", "must be at least 1"));
            }
            if !(0.0..=1.0).contains(&self.behavior_epsilon) {
                return Err(Error::config("behavior_epsilon", "must lie in [0, 1]"));
            }
            if self.dyn_hidden.contains(&0) {
                return Err(Error::config("dyn_hidden", "layer widths must be positive"));
            }
            self.maml.validate(sources.len())?;
            self.adapt.validate()?;
        }
        self.controller.validate()?;
        if self.offline.epochs == 0 || !(self.offline.lr > 0.0) || self.offline.log_episodes == 0 {
            return Err(Error::config("offline", "epochs, lr and log_episodes must be positive"));
        }
        if self.curve_full_budget == 0 {
            return Err(Error::config("curve_full_budget", "must be at least 1"));
        }
        if let Some(f) = self.curve_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::config("curve_fractions", format!("{f} is outside (0, 1]")));
        }
        Ok(Resolved { sources, target })
    }

    pub fn controller_for(&self, kind: ControllerKind) -> ControllerConfig {
        ControllerConfig {
            kind,
            ..self.controller.clone()
        }
    }
}
