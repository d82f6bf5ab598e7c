//! Tick-based cellular traffic dynamics.
//!
//! Each incoming lane is a column of grids; grid 0 touches the stop line.
//! A tick lasts one second and proceeds in four passes: scheduled departures
//! are queued at their origin, queued vehicles enter the far grid of their
//! origin lane if it has room, vehicles at the stop line cross when the
//! phase allows it, and then every remaining vehicle moves one grid forward
//! if the grid ahead is below capacity.

use std::collections::VecDeque;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::flow::{CompiledFlow, FlowSpec};
use super::network::{lane_of_row, lane_row, turn, Approach, Movement, Phase, RoadNetwork};
use super::state::{Observation, Schema, StateMatrix};
use crate::error::{Error, Result};

pub type VehicleId = u32;

/// Default action interval in seconds.
pub const DEFAULT_INTERVAL_S: u32 = 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub flow: u32,
    /// Index of the current hop along the flow's route.
    pub hop: u16,
    pub enter_s: u32,
    pub exit_s: Option<u32>,
    /// Global lane index, meaningless once exited.
    pub lane: u32,
    pub grid: u16,
    moved_tick: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct LaneStats {
    crossings: u32,
    mid_passes: u32,
    /// Grids advanced and vehicle-ticks observed in the stop-line and middle thirds.
    advances: [u32; 2],
    vehicle_ticks: [u32; 2],
    waiting: u32,
}

/// Congestion metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub avg_travel_time_s: f64,
    pub avg_queue_length: f64,
}

/// Result of advancing one action interval.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Ground-truth state of every intersection after the interval.
    pub states: Vec<StateMatrix>,
    /// Travel time of vehicles that exited during this interval, and this
    /// interval's per-lane queue sample.
    pub delta: MetricsReport,
}

/// A running simulation.
#[derive(Clone, Debug)]
pub struct SimHandle {
    net: RoadNetwork,
    flows: Vec<CompiledFlow>,
    seed: u64,
    clock_s: u32,
    vehicles: Vec<Vehicle>,
    /// `lanes[lane][grid]` holds vehicle ids front-to-back.
    lanes: Vec<Vec<VecDeque<VehicleId>>>,
    stats: Vec<LaneStats>,
    pending: Vec<VecDeque<u32>>,
    on_network: usize,
    exited: usize,
    queue_sum: f64,
    intervals: u32,
}

impl SimHandle {
    /// Build an empty simulation at clock 0.
    pub fn reset(network: &RoadNetwork, flows: &FlowSpec, seed: u64) -> Result<SimHandle> {
        network.validate()?;
        let compiled = flows.compile(network)?;
        let nlanes = network.num_intersections() * network.lanes();
        Ok(SimHandle {
            net: network.clone(),
            flows: compiled,
            seed,
            clock_s: 0,
            vehicles: Vec::new(),
            lanes: vec![vec![VecDeque::new(); network.lane_grids]; nlanes],
            stats: vec![LaneStats::default(); nlanes],
            pending: vec![VecDeque::new(); nlanes],
            on_network: 0,
            exited: 0,
            queue_sum: 0.0,
            intervals: 0,
        })
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.net
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn clock_s(&self) -> u32 {
        self.clock_s
    }

    pub fn num_intersections(&self) -> usize {
        self.net.num_intersections()
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn vehicles_entered(&self) -> usize {
        self.vehicles.len()
    }

    pub fn vehicles_on_network(&self) -> usize {
        self.on_network
    }

    pub fn vehicles_exited(&self) -> usize {
        self.exited
    }

    /// Vehicles whose departure time has passed but whose origin grid was full.
    pub fn vehicles_waiting_to_enter(&self) -> usize {
        self.pending.iter().map(VecDeque::len).sum()
    }

    fn lane_index(&self, intersection: usize, row: usize) -> usize {
        intersection * self.net.lanes() + row
    }

    fn lane_for_hop(&self, flow: usize, hop: usize) -> usize {
        let cf = &self.flows[flow];
        let (inter, approach) = cf.hops[hop];
        self.lane_index(inter, lane_row(approach, cf.flow.route[hop]))
    }

    fn check_intersection(&self, intersection: usize) -> Result<()> {
        if intersection >= self.num_intersections() {
            return Err(Error::Lookup(format!(
                "intersection {intersection} does not exist (network has {})",
                self.num_intersections()
            )));
        }
        Ok(())
    }

    /// Put a vehicle of `flow` directly on the lane of route hop `hop`, at `grid`.
    ///
    /// Counts as an entry at the current clock. Fails if the grid is full.
    pub fn place_vehicle(&mut self, flow: usize, hop: usize, grid: usize) -> Result<VehicleId> {
        let cf = self
            .flows
            .get(flow)
            .ok_or_else(|| Error::Lookup(format!("flow {flow} does not exist")))?;
        if hop >= cf.hops.len() {
            return Err(Error::Lookup(format!("flow {flow} has no hop {hop}")));
        }
        if grid >= self.net.lane_grids {
            return Err(Error::Lookup(format!("grid {grid} beyond lane length")));
        }
        let lane = self.lane_for_hop(flow, hop);
        if self.lanes[lane][grid].len() >= self.net.grid_capacity {
            return Err(Error::config("grid", "grid is at capacity"));
        }
        Ok(self.admit(flow as u32, hop as u16, lane, grid, false))
    }

    fn admit(&mut self, flow: u32, hop: u16, lane: usize, grid: usize, moved_now: bool) -> VehicleId {
        let id = self.vehicles.len() as VehicleId;
        self.vehicles.push(Vehicle {
            id,
            flow,
            hop,
            enter_s: self.clock_s,
            exit_s: None,
            lane: lane as u32,
            grid: grid as u16,
            moved_tick: if moved_now { self.clock_s + 1 } else { 0 },
        });
        self.lanes[lane][grid].push_back(id);
        self.on_network += 1;
        id
    }

    /// Advance `interval_s` one-second ticks holding `actions[i]` at intersection `i`.
    pub fn step(&mut self, actions: &[Phase], interval_s: u32) -> Result<StepOutcome> {
        self.step_observed(actions, interval_s, |_| {})
    }

    /// Like [`SimHandle::step`], calling `on_tick` after every tick.
    pub fn step_observed(&mut self, actions: &[Phase], interval_s: u32, mut on_tick: impl FnMut(&SimHandle)) -> Result<StepOutcome> {
        if actions.len() != self.num_intersections() {
            return Err(Error::shape(format!(
                "expected {} actions, got {}",
                self.num_intersections(),
                actions.len()
            )));
        }
        for s in &mut self.stats {
            *s = LaneStats::default();
        }
        let exited_before = self.exited;
        let mut travel_sum = 0.0;
        for _ in 0..interval_s {
            travel_sum += self.tick(actions);
            on_tick(self);
        }
        let nlanes = self.lanes.len().max(1);
        let waiting: u32 = self.stats.iter().map(|s| s.waiting).sum();
        let queue = waiting as f64 / nlanes as f64;
        if interval_s > 0 {
            self.queue_sum += queue;
            self.intervals += 1;
        }
        let exited_now = self.exited - exited_before;
        let states = (0..self.num_intersections())
            .map(|i| self.state_of(i))
            .collect();
        Ok(StepOutcome {
            states,
            delta: MetricsReport {
                avg_travel_time_s: if exited_now > 0 { travel_sum / exited_now as f64 } else { 0.0 },
                avg_queue_length: queue,
            },
        })
    }

    /// One second of dynamics. Returns the summed travel time of vehicles that exited.
    fn tick(&mut self, actions: &[Phase]) -> f64 {
        let t = self.clock_s;
        let marker = t + 1;
        let cap = self.net.grid_capacity;
        let entry = self.net.lane_grids - 1;
        let lanes_per = self.net.lanes();
        let third = self.net.lane_grids / 3;

        for fi in 0..self.flows.len() {
            if self.flows[fi].flow.is_due(t) {
                let lane = self.lane_for_hop(fi, 0);
                self.pending[lane].push_back(fi as u32);
            }
        }
        for lane in 0..self.pending.len() {
            while !self.pending[lane].is_empty() && self.lanes[lane][entry].len() < cap {
                let flow = self.pending[lane].pop_front().unwrap();
                self.admit(flow, 0, lane, entry, true);
            }
        }

        for (lane, grids) in self.lanes.iter().enumerate() {
            let st = &mut self.stats[lane];
            for (g, cell) in grids.iter().enumerate().take(2 * third) {
                let seg = if g < third { 0 } else { 1 };
                let n = cell.iter().filter(|&&v| self.vehicles[v as usize].moved_tick != marker).count();
                st.vehicle_ticks[seg] += n as u32;
            }
        }

        let mut travel_sum = 0.0;
        for lane in 0..self.lanes.len() {
            let Some(&vid) = self.lanes[lane][0].front() else { continue };
            if self.stats[lane].crossings as usize >= self.net.pass_grids {
                continue;
            }
            let inter = lane / lanes_per;
            let (approach, movement) = lane_of_row(lane % lanes_per);
            if !actions[inter].permits(approach, movement) {
                continue;
            }
            let v = &self.vehicles[vid as usize];
            if v.moved_tick == marker {
                continue;
            }
            let flow = v.flow as usize;
            let next_hop = v.hop as usize + 1;
            if next_hop == self.flows[flow].hops.len() {
                self.lanes[lane][0].pop_front();
                let v = &mut self.vehicles[vid as usize];
                v.exit_s = Some(marker);
                v.moved_tick = marker;
                travel_sum += (marker - v.enter_s) as f64;
                self.on_network -= 1;
                self.exited += 1;
            } else {
                let next_lane = self.lane_for_hop(flow, next_hop);
                if self.lanes[next_lane][entry].len() >= cap {
                    continue;
                }
                self.lanes[lane][0].pop_front();
                self.lanes[next_lane][entry].push_back(vid);
                let v = &mut self.vehicles[vid as usize];
                v.hop = next_hop as u16;
                v.lane = next_lane as u32;
                v.grid = entry as u16;
                v.moved_tick = marker;
            }
            let st = &mut self.stats[lane];
            st.crossings += 1;
            if third > 0 {
                st.advances[0] += 1;
            }
        }

        let mid = self.net.lane_grids / 2;
        for lane in 0..self.lanes.len() {
            for g in 1..self.net.lane_grids {
                while let Some(&vid) = self.lanes[lane][g].front() {
                    if self.vehicles[vid as usize].moved_tick == marker
                        || self.lanes[lane][g - 1].len() >= cap
                    {
                        break;
                    }
                    self.lanes[lane][g].pop_front();
                    self.lanes[lane][g - 1].push_back(vid);
                    let v = &mut self.vehicles[vid as usize];
                    v.grid = (g - 1) as u16;
                    v.moved_tick = marker;
                    let st = &mut self.stats[lane];
                    if g == mid {
                        st.mid_passes += 1;
                    }
                    if g < third {
                        st.advances[0] += 1;
                    } else if g < 2 * third {
                        st.advances[1] += 1;
                    }
                }
            }
        }

        for (lane, grids) in self.lanes.iter().enumerate() {
            self.stats[lane].waiting = grids
                .iter()
                .flatten()
                .filter(|&&v| self.vehicles[v as usize].moved_tick != marker)
                .count() as u32;
        }

        self.clock_s = marker;
        debug_assert_eq!(self.vehicles.len(), self.on_network + self.exited);
        travel_sum
    }

    fn state_of(&self, intersection: usize) -> StateMatrix {
        let l = self.net.lanes();
        let n = self.net.state_grids;
        let mut s = StateMatrix::zeros(l, n);
        for row in 0..l {
            let lane = &self.lanes[self.lane_index(intersection, row)];
            for g in 0..n {
                s.set(row, g, lane[g].len() as f64);
            }
        }
        s
    }

    /// Ground-truth `l x N` occupancy of the grids nearest the stop line.
    pub fn extract_state(&self, intersection: usize) -> Result<StateMatrix> {
        self.check_intersection(intersection)?;
        Ok(self.state_of(intersection))
    }

    /// Observation of one intersection under `schema`, using statistics of the last interval.
    pub fn observe(&self, intersection: usize, schema: Schema) -> Result<Observation> {
        self.check_intersection(intersection)?;
        let l = self.net.lanes();
        let mut obs = Observation::zeros(schema, l);
        let d = schema.dims();
        for row in 0..l {
            let lane = self.lane_index(intersection, row);
            let count: usize = self.lanes[lane].iter().map(VecDeque::len).sum();
            let st = &self.stats[lane];
            let base = row * d;
            obs.values[base] = count as f64;
            match schema {
                Schema::Base => {}
                Schema::A => obs.values[base + 1] = st.crossings as f64,
                Schema::B => obs.values[base + 1] = st.mid_passes as f64,
                Schema::C => {
                    for seg in 0..2 {
                        obs.values[base + 1 + seg] = if st.vehicle_ticks[seg] == 0 {
                            0.0
                        } else {
                            st.advances[seg] as f64 / st.vehicle_ticks[seg] as f64
                        };
                    }
                }
            }
        }
        Ok(obs)
    }

    /// Vehicles on each incoming lane of `intersection` that did not move in the last tick.
    pub fn waiting_per_lane(&self, intersection: usize) -> Result<Vec<u32>> {
        self.check_intersection(intersection)?;
        Ok((0..self.net.lanes())
            .map(|row| self.stats[self.lane_index(intersection, row)].waiting)
            .collect())
    }

    /// Vehicles that crossed the stop line of each lane during the last interval.
    pub fn crossings_per_lane(&self, intersection: usize) -> Result<Vec<u32>> {
        self.check_intersection(intersection)?;
        Ok((0..self.net.lanes())
            .map(|row| self.stats[self.lane_index(intersection, row)].crossings)
            .collect())
    }

    /// Upstream and downstream queue of every movement at `intersection`.
    ///
    /// Upstream is the occupancy of the movement's lane within the state
    /// window. Downstream is the mean state-window occupancy over the lanes
    /// of the receiving road; zero when the movement leaves the grid.
    pub fn movement_queues(&self, intersection: usize) -> Result<Vec<MovementQueue>> {
        self.check_intersection(intersection)?;
        let n = self.net.state_grids;
        let occupancy = |lane: usize| -> f64 {
            self.lanes[lane][..n].iter().map(VecDeque::len).sum::<usize>() as f64
        };
        let mut out = Vec::with_capacity(self.net.lanes());
        for approach in Approach::ALL {
            for movement in Movement::ALL {
                let upstream = occupancy(self.lane_index(intersection, lane_row(approach, movement)));
                let (next_approach, delta) = turn(approach, movement);
                let downstream = match self.net.neighbor(intersection, delta) {
                    Some(next) => {
                        Movement::ALL
                            .iter()
                            .map(|&m| occupancy(self.lane_index(next, lane_row(next_approach, m))))
                            .sum::<f64>()
                            / Movement::ALL.len() as f64
                    }
                    None => 0.0,
                };
                out.push(MovementQueue {
                    approach,
                    movement,
                    upstream,
                    downstream,
                });
            }
        }
        Ok(out)
    }

    /// Cumulative metrics. Vehicles still on the network count up to the current clock.
    pub fn metrics(&self) -> MetricsReport {
        let avg_travel_time_s = if self.vehicles.is_empty() {
            0.0
        } else {
            self.vehicles
                .iter()
                .map(|v| (v.exit_s.unwrap_or(self.clock_s) - v.enter_s) as f64)
                .sum::<f64>()
                / self.vehicles.len() as f64
        };
        let avg_queue_length = if self.intervals == 0 {
            0.0
        } else {
            self.queue_sum / self.intervals as f64
        };
        MetricsReport {
            avg_travel_time_s,
            avg_queue_length,
        }
    }

    /// Verify conservation and capacity; returns a description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.vehicles.len() != self.on_network + self.exited {
            return Err(format!(
                "entered {} != on_network {} + exited {}",
                self.vehicles.len(),
                self.on_network,
                self.exited
            ));
        }
        let mut counted = 0;
        for (li, lane) in self.lanes.iter().enumerate() {
            for (g, cell) in lane.iter().enumerate() {
                if cell.len() > self.net.grid_capacity {
                    return Err(format!("lane {li} grid {g} holds {} vehicles", cell.len()));
                }
                counted += cell.len();
            }
            if self.stats[li].crossings as usize > self.net.pass_grids {
                return Err(format!("lane {li} crossed {} vehicles", self.stats[li].crossings));
            }
        }
        if counted != self.on_network {
            return Err(format!("{counted} vehicles on lanes, registry says {}", self.on_network));
        }
        if let Some(v) = self.vehicles.iter().find(|v| v.exit_s.is_some_and(|e| e < v.enter_s)) {
            return Err(format!("vehicle {} exits before entering", v.id));
        }
        Ok(())
    }

    /// SHA-256 over clock, lane contents, registry and entry queues.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.clock_s.to_le_bytes());
        for lane in &self.lanes {
            for cell in lane {
                h.update((cell.len() as u32).to_le_bytes());
                for v in cell {
                    h.update(v.to_le_bytes());
                }
            }
        }
        for v in &self.vehicles {
            h.update(v.hop.to_le_bytes());
            h.update(v.enter_s.to_le_bytes());
            h.update(v.exit_s.map_or(u32::MAX, |e| e).to_le_bytes());
        }
        for p in &self.pending {
            h.update((p.len() as u32).to_le_bytes());
        }
        for s in &self.stats {
            h.update(s.crossings.to_le_bytes());
            h.update(s.mid_passes.to_le_bytes());
            h.update(s.waiting.to_le_bytes());
        }
        format!("{:x}", h.finalize())
    }
}

/// Queue counts feeding one movement's pressure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MovementQueue {
    pub approach: Approach,
    pub movement: Movement,
    pub upstream: f64,
    pub downstream: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::flow::{Flow, Origin};
    use Movement::*;

    /// A northbound-origin flow through the single intersection of a 1x1 grid,
    /// scheduled far in the future so it never spawns during tests.
    fn template_flow(route: Movement) -> Flow {
        Flow {
            origin: Origin { row: 0, col: 0, side: Approach::North },
            route: vec![route],
            start_s: 1_000_000,
            end_s: 1_000_001,
            headway_s: 1,
        }
    }

    fn one_by_one(flows: Vec<Flow>) -> SimHandle {
        SimHandle::reset(&RoadNetwork::grid(1, 1), &FlowSpec(flows), 7).unwrap()
    }

    fn phase(id: u8) -> Phase {
        Phase::new(id).unwrap()
    }

    /// Hand-traced single lane: a free vehicle 5 grids out needs 5 ticks to
    /// reach grid 0 and crosses on tick 6 under a green.
    #[test]
    fn free_vehicle_crosses_on_green() {
        let mut sim = one_by_one(vec![template_flow(Through)]);
        sim.place_vehicle(0, 0, 5).unwrap();
        let trace: Vec<Option<u16>> = (0..7)
            .map(|_| {
                sim.step(&[phase(1)], 1).unwrap();
                let v = &sim.vehicles()[0];
                v.exit_s.is_none().then_some(v.grid)
            })
            .collect();
        assert_eq!(trace, vec![Some(4), Some(3), Some(2), Some(1), Some(0), None, None]);
        assert_eq!(sim.vehicles()[0].exit_s, Some(6));
    }

    #[test]
    fn vehicle_held_by_conflicting_phase_waits_at_stop_line() {
        let mut sim = one_by_one(vec![template_flow(Through)]);
        sim.place_vehicle(0, 0, 5).unwrap();
        // Phase 3 serves east-west only.
        for _ in 0..10 {
            sim.step(&[phase(3)], DEFAULT_INTERVAL_S).unwrap();
        }
        let v = &sim.vehicles()[0];
        assert_eq!(v.exit_s, None);
        assert_eq!(v.grid, 0);
        assert_eq!(sim.crossings_per_lane(0).unwrap().iter().sum::<u32>(), 0);
    }

    #[test]
    fn empty_network_is_all_zero() {
        let mut sim = SimHandle::reset(&RoadNetwork::grid(2, 2), &FlowSpec::default(), 7).unwrap();
        assert_eq!(sim.vehicles_entered(), 0);
        let out = sim.step(&[phase(1); 4], DEFAULT_INTERVAL_S).unwrap();
        assert!(out.states.iter().all(|s| s.total() == 0.0));
        assert_eq!(out.delta.avg_queue_length, 0.0);
        for schema in [Schema::Base, Schema::A, Schema::B, Schema::C] {
            let o = sim.observe(3, schema).unwrap();
            assert_eq!(o.values.len(), 12 * schema.dims());
            assert!(o.values.iter().all(|&v| v == 0.0));
        }
        assert_eq!(sim.metrics(), MetricsReport::default());
    }

    #[test]
    fn placed_vehicle_appears_in_state() {
        // Lane row 3 is the east approach's left-turn lane.
        let flow = Flow {
            origin: Origin { row: 0, col: 0, side: Approach::East },
            route: vec![Left],
            start_s: 1_000_000,
            end_s: 1_000_001,
            headway_s: 1,
        };
        let mut sim = one_by_one(vec![flow]);
        sim.place_vehicle(0, 0, 2).unwrap();
        let s = sim.extract_state(0).unwrap();
        assert_eq!(s.total(), 1.0);
        assert_eq!(s.get(3, 2), 1.0);
        assert!(sim.extract_state(1).is_err());
    }

    #[test]
    fn stationary_vehicles_report_zero_speed() {
        let mut sim = one_by_one(vec![template_flow(Through)]);
        for _ in 0..4 {
            sim.place_vehicle(0, 0, 0).unwrap();
        }
        sim.step(&[phase(3)], DEFAULT_INTERVAL_S).unwrap();
        let o = sim.observe(0, Schema::C).unwrap();
        let row = lane_row(Approach::North, Through);
        assert_eq!(o.get(row, 0), 4.0);
        assert_eq!(o.get(row, 1), 0.0);
        assert_eq!(o.get(row, 2), 0.0);
    }

    #[test]
    fn two_crossings_show_up_in_schema_a() {
        let mut sim = one_by_one(vec![template_flow(Through)]);
        sim.place_vehicle(0, 0, 0).unwrap();
        sim.place_vehicle(0, 0, 1).unwrap();
        sim.step(&[phase(1)], DEFAULT_INTERVAL_S).unwrap();
        let o = sim.observe(0, Schema::A).unwrap();
        assert_eq!(o.get(lane_row(Approach::North, Through), 1), 2.0);
        assert_eq!(sim.vehicles_exited(), 2);
    }

    #[test]
    fn crossings_are_capped_per_interval() {
        let mut sim = one_by_one(vec![template_flow(Through)]);
        for g in 0..3 {
            for _ in 0..4 {
                sim.place_vehicle(0, 0, g).unwrap();
            }
        }
        sim.step(&[phase(1)], DEFAULT_INTERVAL_S).unwrap();
        assert_eq!(sim.vehicles_exited(), 4);
        sim.check_invariants().unwrap();
    }

    #[test]
    fn metrics_average_travel_time() {
        let mut sim = one_by_one(vec![template_flow(Through)]);
        sim.place_vehicle(0, 0, 0).unwrap();
        sim.step(&[phase(3)], 239).unwrap();
        sim.step(&[phase(1)], 1).unwrap();
        assert_eq!(sim.metrics().avg_travel_time_s, 240.0);
    }

    #[test]
    fn unfinished_vehicles_count_to_clock() {
        let mut sim = one_by_one(vec![template_flow(Through)]);
        sim.place_vehicle(0, 0, 0).unwrap();
        sim.step(&[phase(3)], 100).unwrap();
        sim.place_vehicle(0, 0, 0).unwrap();
        sim.step(&[phase(3)], 200).unwrap();
        // 300 and 200 seconds on the network.
        assert_eq!(sim.metrics().avg_travel_time_s, 250.0);
    }

    #[test]
    fn wrong_action_count_is_a_shape_error() {
        let mut sim = SimHandle::reset(&RoadNetwork::grid(2, 2), &FlowSpec::default(), 7).unwrap();
        assert!(matches!(sim.step(&[phase(1)], 20), Err(Error::Shape(_))));
    }
}
