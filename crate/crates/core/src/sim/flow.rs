//! Vehicle demand: boundary origins, routes and departure schedules.

use serde::{Deserialize, Serialize};

use super::network::{turn, Approach, Movement, RoadNetwork};
use crate::error::{Error, Result};

/// Boundary entry point: the given side of the intersection at (row, col).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub row: usize,
    pub col: usize,
    pub side: Approach,
}

/// A stream of identical vehicles released every `headway_s` seconds in `[start_s, end_s)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flow {
    pub origin: Origin,
    /// Movement taken at each intersection along the way.
    pub route: Vec<Movement>,
    pub start_s: u32,
    pub end_s: u32,
    pub headway_s: u32,
}

impl Flow {
    /// Departure times in seconds.
    pub fn departures(&self) -> impl Iterator<Item = u32> + '_ {
        (self.start_s..self.end_s).step_by(self.headway_s.max(1) as usize)
    }

    pub fn is_due(&self, t: u32) -> bool {
        t >= self.start_s && t < self.end_s && (t - self.start_s) % self.headway_s == 0
    }
}

/// The full demand specification of a scenario.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowSpec(pub Vec<Flow>);

/// A flow whose route has been resolved to (intersection, approach) hops.
#[derive(Clone, Debug)]
pub(crate) struct CompiledFlow {
    pub flow: Flow,
    /// Intersection and arrival approach at each hop; same length as the route.
    pub hops: Vec<(usize, Approach)>,
}

impl FlowSpec {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn compile(&self, net: &RoadNetwork) -> Result<Vec<CompiledFlow>> {
        self.0
            .iter()
            .enumerate()
            .map(|(i, f)| compile_flow(i, f, net))
            .collect()
    }
}

fn compile_flow(idx: usize, flow: &Flow, net: &RoadNetwork) -> Result<CompiledFlow> {
    let field = |name: &str| format!("flows[{idx}].{name}");
    if flow.start_s >= flow.end_s {
        return Err(Error::config(field("start_s"), "start_s must be before end_s"));
    }
    if flow.headway_s < 1 {
        return Err(Error::config(field("headway_s"), "headway must be at least 1 s"));
    }
    if flow.route.is_empty() {
        return Err(Error::config(field("route"), "route is empty"));
    }
    let Origin { row, col, side } = flow.origin;
    if row >= net.rows || col >= net.cols {
        return Err(Error::config(
            field("origin"),
            format!("intersection ({row}, {col}) does not exist in a {}x{} grid", net.rows, net.cols),
        ));
    }
    if !net.is_boundary(row, col, side) {
        return Err(Error::config(
            field("origin"),
            format!("side {side:?} of ({row}, {col}) is not a boundary edge"),
        ));
    }
    let mut hops = Vec::with_capacity(flow.route.len());
    let mut at = net.intersection_id(row, col);
    let mut approach = side;
    for (k, &mv) in flow.route.iter().enumerate() {
        hops.push((at, approach));
        let (next_approach, delta) = turn(approach, mv);
        let last = k + 1 == flow.route.len();
        match (net.neighbor(at, delta), last) {
            (Some(next), false) => {
                at = next;
                approach = next_approach;
            }
            (None, true) => {}
            (None, false) => {
                return Err(Error::config(
                    field("route"),
                    format!("route leaves the grid after movement {k} but continues"),
                ))
            }
            (Some(_), true) => {
                return Err(Error::config(field("route"), "route must terminate at a boundary edge"))
            }
        }
    }
    Ok(CompiledFlow { flow: flow.clone(), hops })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Movement::*;

    fn flow(row: usize, col: usize, side: Approach, route: Vec<Movement>) -> Flow {
        Flow {
            origin: Origin { row, col, side },
            route,
            start_s: 0,
            end_s: 100,
            headway_s: 10,
        }
    }

    #[test]
    fn straight_route_across_grid_compiles() {
        let net = RoadNetwork::grid(2, 2);
        let spec = FlowSpec(vec![flow(0, 0, Approach::North, vec![Through, Through])]);
        let c = spec.compile(&net).unwrap();
        assert_eq!(c[0].hops, vec![(0, Approach::North), (2, Approach::North)]);
    }

    #[test]
    fn route_that_stops_inside_grid_is_rejected() {
        let net = RoadNetwork::grid(2, 2);
        let spec = FlowSpec(vec![flow(0, 0, Approach::North, vec![Through])]);
        assert!(spec.compile(&net).is_err());
    }

    #[test]
    fn nonexistent_intersection_is_rejected() {
        let net = RoadNetwork::grid(2, 2);
        let spec = FlowSpec(vec![flow(5, 0, Approach::North, vec![Through, Through])]);
        match spec.compile(&net) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "flows[0].origin"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn interior_origin_is_rejected() {
        let net = RoadNetwork::grid(2, 2);
        let spec = FlowSpec(vec![flow(1, 0, Approach::North, vec![Through])]);
        assert!(spec.compile(&net).is_err());
    }

    #[test]
    fn departures_respect_headway() {
        let f = flow(0, 0, Approach::North, vec![Through]);
        let d: Vec<u32> = f.departures().collect();
        assert_eq!(d.len(), 10);
        assert!(f.is_due(20) && !f.is_due(25) && !f.is_due(100));
    }
}
