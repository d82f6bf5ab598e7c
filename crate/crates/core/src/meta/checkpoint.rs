//! Model checkpoints and run manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::amm::{DistParams, DynModel, PolicyParams, ReprModel, ValueParams};
use crate::error::{Error, Result};
use crate::sim::NUM_PHASES;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_cities: Vec<String>,
    pub meta_iters: usize,
    pub seed: u64,
}

/// Parameters of both modules plus the hyperparameters needed to act.
///
/// A meta-trained initialisation has no representation module yet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repr: Option<ReprModel>,
    #[serde(rename = "dyn")]
    pub dynamics: DynModel,
    pub value_params: ValueParams,
    pub dist_params: DistParams,
    pub policy_params: PolicyParams,
    pub provenance: Provenance,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        let g = &self.dynamics;
        let width = g.lanes * g.grids;
        if g.net.input_size() != width + NUM_PHASES || g.net.output_size() != width {
            return Err(Error::config("dyn.layer_sizes", format!("must map {} inputs to {width} outputs", width + NUM_PHASES)));
        }
        if let Some(f) = &self.repr {
            let d = f.schema.dims();
            if f.net.input_size() != d || f.input_scale.len() != d {
                return Err(Error::config(
                    "repr.layer_sizes",
                    format!("{} observations have {d} features", f.schema.name()),
                ));
            }
            if f.lanes != g.lanes || f.state_grids() != g.grids {
                return Err(Error::config("repr", "representation output does not match the dynamics state shape"));
            }
        }
        self.value_params.validate()?;
        self.dist_params.validate()?;
        self.policy_params.validate(self.value_params.horizon)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        ck.validate()?;
        Ok(ck)
    }
}

/// Content hash in the style of a git blob id, over SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a value's canonical JSON encoding.
pub fn json_digest<T: Serialize>(value: &T) -> Result<String> {
    Ok(hex(&Sha256::digest(serde_json::to_vec(value)?)))
}

/// What produced a run directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    /// Content hash of each input, keyed by name or path.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seeds: &[u64]) -> Result<RunManifest> {
        Ok(RunManifest {
            command: command.to_string(),
            config_digest: json_digest(config)?,
            seeds: seeds.to_vec(),
            ..Default::default()
        })
    }

    pub fn add_input(&mut self, name: impl Into<String>, bytes: &[u8]) {
        self.inputs.insert(name.into(), content_hash(bytes));
    }

    pub fn add_input_file(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.add_input(path.display().to_string(), &bytes);
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
