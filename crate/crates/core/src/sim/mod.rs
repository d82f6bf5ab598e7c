//! Deterministic grid traffic microsimulator.

mod engine;
mod flow;
mod network;
mod scenario;
mod state;

pub use engine::{MetricsReport, MovementQueue, SimHandle, StepOutcome, Vehicle, VehicleId, DEFAULT_INTERVAL_S};
pub use flow::{Flow, FlowSpec, Origin};
pub use network::{
    lane_of_row, lane_row, turn, Approach, Movement, Phase, RoadNetwork, LANES_PER_APPROACH,
    LANES_PER_INTERSECTION, NUM_PHASES,
};
pub use state::{Observation, Schema, StateMatrix};
pub use scenario::Scenario;
