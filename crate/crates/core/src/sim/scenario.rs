//! Scenario documents: network, demand, observation schema and timing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::{SimHandle, DEFAULT_INTERVAL_S};
use super::flow::FlowSpec;
use super::network::RoadNetwork;
use super::state::Schema;
use crate::error::{Error, Result};

fn default_episode() -> u32 {
    3600
}
fn default_interval() -> u32 {
    DEFAULT_INTERVAL_S
}
fn default_schema() -> Schema {
    Schema::Base
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub network: RoadNetwork,
    pub flows: FlowSpec,
    #[serde(default = "default_schema")]
    pub schema: Schema,
    #[serde(default = "default_episode")]
    pub episode_s: u32,
    #[serde(default = "default_interval")]
    pub interval_s: u32,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.flows.compile(&self.network)?;
        if self.interval_s == 0 {
            return Err(Error::config("interval_s", "must be at least 1"));
        }
        if self.episode_s < self.interval_s {
            return Err(Error::config("episode_s", "must cover at least one interval"));
        }
        Ok(())
    }

    /// Action intervals per episode.
    pub fn intervals(&self) -> usize {
        (self.episode_s / self.interval_s) as usize
    }

    pub fn reset(&self) -> Result<SimHandle> {
        SimHandle::reset(&self.network, &self.flows, self.seed)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        let s: Scenario = serde_json::from_str(&text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let json = r#"{"network":{"rows":2,"cols":2},"flows":[]}"#;
        let s: Scenario = serde_json::from_str(json).unwrap();
        assert_eq!(s.episode_s, 3600);
        assert_eq!(s.interval_s, 20);
        assert_eq!(s.network.state_grids, 12);
        assert_eq!(s.intervals(), 180);
        s.validate().unwrap();
    }

    #[test]
    fn bad_block_size_names_field() {
        let json = r#"{"network":{"rows":2,"cols":2,"N":10,"n":4},"flows":[]}"#;
        let s: Scenario = serde_json::from_str(json).unwrap();
        match s.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "network.N"),
            other => panic!("{other:?}"),
        }
    }
}
