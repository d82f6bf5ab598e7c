//! Per-city transition datasets and their JSONL persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::episode::{run_episode, TransitionRecord};
use crate::amm::Transition;
use crate::baselines::Controller;
use crate::error::{Error, Result};
use crate::sim::{Scenario, Schema};

/// Logged transitions of one city under one observation schema.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    pub city_id: String,
    pub schema: Schema,
    pub records: Vec<TransitionRecord>,
    /// Fraction of each sampled batch used for the inner (support) update.
    pub support_fraction: f64,
}

impl TaskDataset {
    pub fn new(city_id: impl Into<String>, schema: Schema, records: Vec<TransitionRecord>) -> Result<TaskDataset> {
        let ds = TaskDataset {
            city_id: city_id.into(),
            schema,
            records,
            support_fraction: 0.5,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::config("dataset", format!("dataset for `{}` is empty", self.city_id)));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.o_t.schema != self.schema || r.o_next.schema != self.schema {
                return Err(Error::config(
                    "dataset",
                    format!("record {i} uses {} but the dataset is {}", r.o_t.schema.name(), self.schema.name()),
                ));
            }
            if !r.s_t.same_shape(&r.s_next) {
                return Err(Error::shape(format!("record {i}: state shapes differ")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn transitions(&self) -> Vec<Transition<'_>> {
        self.records.iter().map(transition).collect()
    }

    /// One record per line.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<TaskDataset> {
        let reader = BufReader::new(File::open(path)?);
        let mut records = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str::<TransitionRecord>(&line)?);
        }
        let first = records
            .first()
            .ok_or_else(|| Error::config("dataset", format!("{} holds no records", path.display())))?;
        let (city, schema) = (first.city_id.clone(), first.o_t.schema);
        TaskDataset::new(city, schema, records)
    }
}

pub fn transition(r: &TransitionRecord) -> Transition<'_> {
    Transition {
        state: &r.s_t,
        action: r.a_t,
        next: &r.s_next,
    }
}

/// Run `episodes` full episodes of `scenario` under `controller`, logging every
/// intersection at every interval.
pub fn collect_experience(scenario: &Scenario, controller: &mut dyn Controller, episodes: usize) -> Result<TaskDataset> {
    if episodes == 0 {
        return Err(Error::config("episodes", "must be at least 1"));
    }
    scenario.validate()?;
    let mut records = Vec::with_capacity(episodes * scenario.intervals() * scenario.network.num_intersections());
    for _ in 0..episodes {
        records.extend(run_episode(scenario, controller, true)?.records);
    }
    TaskDataset::new(scenario.name.clone(), scenario.schema, records)
}
