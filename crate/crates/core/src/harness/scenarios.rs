//! Built-in desk-scale cities.

use serde::{Deserialize, Serialize};

use crate::sim::{Approach, Flow, FlowSpec, Movement, Origin, RoadNetwork, Scenario, Schema};

/// Headways (seconds) of the synthetic demand pattern.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandPattern {
    /// Through traffic entering from the north and south edges.
    pub north_south: u32,
    /// Through traffic entering from the east and west edges.
    pub east_west: u32,
    /// Left-turning traffic at the first intersection.
    pub left: u32,
    /// Right-turning traffic at the first intersection.
    pub right: u32,
    /// Demand stops at this time; the rest of the episode drains the network.
    pub end_s: u32,
}

fn flow(origin: Origin, route: Vec<Movement>, headway: u32, offset: u32, end_s: u32) -> Flow {
    Flow {
        origin,
        route,
        start_s: offset % headway,
        end_s,
        headway_s: headway,
    }
}

/// Through, left and right flows entering at every boundary approach.
///
/// Turning vehicles turn at the first intersection and then go straight to
/// the edge of the grid.
pub fn grid_demand(rows: usize, cols: usize, d: &DemandPattern) -> FlowSpec {
    use Movement::*;
    let mut flows = Vec::new();
    let mut offset = 0u32;
    let mut entries: Vec<(Origin, usize, usize)> = Vec::new();
    for c in 0..cols {
        entries.push((Origin { row: 0, col: c, side: Approach::North }, rows, d.north_south as usize));
        entries.push((Origin { row: rows - 1, col: c, side: Approach::South }, rows, d.north_south as usize));
    }
    for r in 0..rows {
        entries.push((Origin { row: r, col: 0, side: Approach::West }, cols, d.east_west as usize));
        entries.push((Origin { row: r, col: cols - 1, side: Approach::East }, cols, d.east_west as usize));
    }
    for (origin, span, headway) in entries {
        offset += 3;
        flows.push(flow(origin, vec![Through; span], headway as u32, offset, d.end_s));
        // Remaining hops after turning at the first intersection.
        let (left_hops, right_hops) = match origin.side {
            Approach::North => (cols - 1 - origin.col, origin.col),
            Approach::South => (origin.col, cols - 1 - origin.col),
            Approach::West => (origin.row, rows - 1 - origin.row),
            Approach::East => (rows - 1 - origin.row, origin.row),
        };
        let mut left = vec![Left];
        left.extend(std::iter::repeat(Through).take(left_hops));
        flows.push(flow(origin, left, d.left, offset + 1, d.end_s));
        let mut right = vec![Right];
        right.extend(std::iter::repeat(Through).take(right_hops));
        flows.push(flow(origin, right, d.right, offset + 2, d.end_s));
    }
    FlowSpec(flows)
}

pub fn city(name: &str, rows: usize, cols: usize, schema: Schema, demand: &DemandPattern) -> Scenario {
    Scenario {
        name: name.to_string(),
        network: RoadNetwork::grid(rows, cols),
        flows: grid_demand(rows, cols, demand),
        schema,
        episode_s: 3600,
        interval_s: 20,
        seed: 0,
    }
}

/// 2x2 grid observed through SCHEMA_A.
pub fn city_a() -> Scenario {
    city(
        "city_a",
        2,
        2,
        Schema::A,
        &DemandPattern {
            north_south: 9,
            east_west: 20,
            left: 45,
            right: 40,
            end_s: 3000,
        },
    )
}

/// 3x2 grid observed through SCHEMA_B.
pub fn city_b() -> Scenario {
    city(
        "city_b",
        3,
        2,
        Schema::B,
        &DemandPattern {
            north_south: 16,
            east_west: 10,
            left: 50,
            right: 35,
            end_s: 3000,
        },
    )
}

/// 2x3 grid observed through SCHEMA_C.
pub fn city_c() -> Scenario {
    city(
        "city_c",
        2,
        3,
        Schema::C,
        &DemandPattern {
            north_south: 10,
            east_west: 18,
            left: 40,
            right: 45,
            end_s: 3000,
        },
    )
}

/// The three desk cities in order A, B, C.
pub fn desk_cities() -> Vec<Scenario> {
    vec![city_a(), city_b(), city_c()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_cities_are_valid_and_distinct() {
        let cities = desk_cities();
        for c in &cities {
            c.validate().unwrap();
        }
        let schemas: Vec<Schema> = cities.iter().map(|c| c.schema).collect();
        assert_eq!(schemas, vec![Schema::A, Schema::B, Schema::C]);
        assert_ne!(cities[0].flows, cities[2].flows);
    }

    #[test]
    fn every_boundary_approach_has_three_flows() {
        let s = city_c();
        // 2 * (rows + cols) boundary approaches.
        assert_eq!(s.flows.len(), 3 * 2 * (2 + 3));
    }
}
