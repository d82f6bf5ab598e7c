//! Per-intersection state and observation matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lane-by-grid occupancy matrix (`l x N`), row-major. Column 0 is the grid
/// at the stop line.
///
/// Simulator states hold integer counts; model predictions hold nonnegative
/// reals in the same layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    pub lanes: usize,
    pub grids: usize,
    pub values: Vec<f64>,
}

impl StateMatrix {
    pub fn zeros(lanes: usize, grids: usize) -> StateMatrix {
        StateMatrix {
            lanes,
            grids,
            values: vec![0.0; lanes * grids],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<StateMatrix> {
        let grids = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != grids) {
            return Err(Error::shape("ragged state rows"));
        }
        Ok(StateMatrix {
            lanes: rows.len(),
            grids,
            values: rows.concat(),
        })
    }

    pub fn from_flat(lanes: usize, grids: usize, values: Vec<f64>) -> Result<StateMatrix> {
        if values.len() != lanes * grids {
            return Err(Error::shape(format!(
                "expected {lanes}x{grids} = {} values, got {}",
                lanes * grids,
                values.len()
            )));
        }
        Ok(StateMatrix { lanes, grids, values })
    }

    pub fn get(&self, lane: usize, grid: usize) -> f64 {
        self.values[lane * self.grids + grid]
    }

    pub fn set(&mut self, lane: usize, grid: usize, v: f64) {
        self.values[lane * self.grids + grid] = v;
    }

    pub fn row(&self, lane: usize) -> &[f64] {
        &self.values[lane * self.grids..(lane + 1) * self.grids]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn same_shape(&self, other: &StateMatrix) -> bool {
        self.lanes == other.lanes && self.grids == other.grids
    }

    pub fn scaled(&self, c: f64) -> StateMatrix {
        StateMatrix {
            lanes: self.lanes,
            grids: self.grids,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// Observation feature layouts offered by different cities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Schema {
    /// Vehicles on each incoming lane.
    #[serde(rename = "BASE")]
    Base,
    /// Base count plus vehicles that entered the intersection last interval.
    #[serde(rename = "SCHEMA_A")]
    A,
    /// Base count plus vehicles that passed the middle of the road last interval.
    #[serde(rename = "SCHEMA_B")]
    B,
    /// Base count plus mean speed in the last and middle thirds of the lane.
    #[serde(rename = "SCHEMA_C")]
    C,
}

impl Schema {
    /// Feature columns per lane (`d_o`).
    pub fn dims(self) -> usize {
        match self {
            Schema::Base => 1,
            Schema::A | Schema::B => 2,
            Schema::C => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Schema::Base => "BASE",
            Schema::A => "SCHEMA_A",
            Schema::B => "SCHEMA_B",
            Schema::C => "SCHEMA_C",
        }
    }
}

impl std::str::FromStr for Schema {
    type Err = Error;
    fn from_str(s: &str) -> Result<Schema> {
        match s {
            "BASE" => Ok(Schema::Base),
            "SCHEMA_A" => Ok(Schema::A),
            "SCHEMA_B" => Ok(Schema::B),
            "SCHEMA_C" => Ok(Schema::C),
            other => Err(Error::config("schema", format!("unknown schema `{other}`"))),
        }
    }
}

/// Lane-by-feature observation matrix (`l x d_o`) tagged with its schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(rename = "schema_id")]
    pub schema: Schema,
    pub lanes: usize,
    pub values: Vec<f64>,
}

impl Observation {
    pub fn zeros(schema: Schema, lanes: usize) -> Observation {
        Observation {
            schema,
            lanes,
            values: vec![0.0; lanes * schema.dims()],
        }
    }

    pub fn dims(&self) -> usize {
        self.schema.dims()
    }

    pub fn row(&self, lane: usize) -> &[f64] {
        let d = self.dims();
        &self.values[lane * d..(lane + 1) * d]
    }

    pub fn get(&self, lane: usize, feature: usize) -> f64 {
        self.values[lane * self.dims() + feature]
    }

    pub fn check(&self) -> Result<()> {
        if self.values.len() != self.lanes * self.dims() {
            return Err(Error::shape("observation length does not match its schema"));
        }
        Ok(())
    }
}
