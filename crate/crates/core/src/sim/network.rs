//! Grid road network geometry, movements and the eight signal phases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side of an intersection a vehicle arrives from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Approach {
    #[serde(rename = "N")]
    North,
    #[serde(rename = "E")]
    East,
    #[serde(rename = "S")]
    South,
    #[serde(rename = "W")]
    West,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::North, Approach::East, Approach::South, Approach::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Approach {
        Approach::ALL[i % 4]
    }

    /// Compass heading of travel for a vehicle arriving from this side
    /// (0 = north, 1 = east, 2 = south, 3 = west).
    fn heading(self) -> usize {
        (self.index() + 2) % 4
    }

    fn from_heading(heading: usize) -> Approach {
        Approach::from_index((heading + 2) % 4)
    }
}

/// Turning movement through an intersection. Each movement has a dedicated lane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Movement {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "T")]
    Through,
    #[serde(rename = "R")]
    Right,
}

impl Movement {
    pub const ALL: [Movement; 3] = [Movement::Left, Movement::Through, Movement::Right];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Lanes per approach; one per movement.
pub const LANES_PER_APPROACH: usize = 3;
/// Incoming lanes per intersection (`l`).
pub const LANES_PER_INTERSECTION: usize = 4 * LANES_PER_APPROACH;
/// Number of signal phases.
pub const NUM_PHASES: usize = 8;

/// Row of an incoming lane inside an intersection's state/observation matrix.
pub fn lane_row(approach: Approach, movement: Movement) -> usize {
    approach.index() * LANES_PER_APPROACH + movement.index()
}

/// Inverse of [`lane_row`].
pub fn lane_of_row(row: usize) -> (Approach, Movement) {
    (
        Approach::from_index(row / LANES_PER_APPROACH),
        Movement::ALL[row % LANES_PER_APPROACH],
    )
}

/// Approach at the downstream intersection after performing `movement`,
/// together with the (row, col) step taken.
pub fn turn(approach: Approach, movement: Movement) -> (Approach, (i64, i64)) {
    let heading = match movement {
        Movement::Through => approach.heading(),
        Movement::Right => (approach.heading() + 1) % 4,
        Movement::Left => (approach.heading() + 3) % 4,
    };
    let delta = match heading {
        0 => (-1, 0),
        1 => (0, 1),
        2 => (1, 0),
        _ => (0, -1),
    };
    (Approach::from_heading(heading), delta)
}

/// A signal phase, identified by an integer in `[1, 8]`.
///
/// | id | green movements |
/// |----|-----------------|
/// | 1  | N through, S through |
/// | 2  | N left, S left |
/// | 3  | E through, W through |
/// | 4  | E left, W left |
/// | 5  | N through, N left |
/// | 6  | E through, E left |
/// | 7  | S through, S left |
/// | 8  | W through, W left |
///
/// Right turns are permitted under every phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Phase(u8);

const PHASE_TABLE: [[(Approach, Movement); 2]; NUM_PHASES] = {
    use Approach::*;
    use Movement::*;
    [
        [(North, Through), (South, Through)],
        [(North, Left), (South, Left)],
        [(East, Through), (West, Through)],
        [(East, Left), (West, Left)],
        [(North, Through), (North, Left)],
        [(East, Through), (East, Left)],
        [(South, Through), (South, Left)],
        [(West, Through), (West, Left)],
    ]
};

impl Phase {
    pub fn new(id: u8) -> Result<Phase> {
        if (1..=NUM_PHASES as u8).contains(&id) {
            Ok(Phase(id))
        } else {
            Err(Error::config("phase", format!("phase id {id} outside [1, 8]")))
        }
    }

    /// Phase from a zero-based index; wraps modulo 8.
    pub fn from_index(i: usize) -> Phase {
        Phase((i % NUM_PHASES) as u8 + 1)
    }

    pub fn all() -> impl Iterator<Item = Phase> {
        (1..=NUM_PHASES as u8).map(Phase)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    /// The two protected movements of this phase.
    pub fn movements(self) -> [(Approach, Movement); 2] {
        PHASE_TABLE[self.index()]
    }

    pub fn permits(self, approach: Approach, movement: Movement) -> bool {
        movement == Movement::Right || self.movements().contains(&(approach, movement))
    }
}

impl TryFrom<u8> for Phase {
    type Error = Error;
    fn try_from(v: u8) -> Result<Phase> {
        Phase::new(v)
    }
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        p.0
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "P{}", self.0)
    }
}

fn default_lanes() -> usize {
    LANES_PER_APPROACH
}
fn default_state_grids() -> usize {
    12
}
fn default_pass_grids() -> usize {
    4
}
fn default_capacity() -> usize {
    4
}
fn default_lane_grids() -> usize {
    24
}

/// Rectangular grid of signalised intersections.
///
/// Every intersection has four approaches with one lane per movement. Each
/// lane is `lane_grids` cells long; the `state_grids` cells nearest the stop
/// line form the state window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_lanes")]
    pub lanes_per_approach: usize,
    /// `N`: grids per lane inside the state window.
    #[serde(rename = "N", default = "default_state_grids")]
    pub state_grids: usize,
    /// `n`: grids that can clear the stop line in one action interval.
    #[serde(rename = "n", default = "default_pass_grids")]
    pub pass_grids: usize,
    #[serde(default = "default_capacity")]
    pub grid_capacity: usize,
    #[serde(default = "default_lane_grids")]
    pub lane_grids: usize,
}

impl RoadNetwork {
    /// Grid with default lane geometry (N = 12, n = 4, capacity 4, 24-grid lanes).
    pub fn grid(rows: usize, cols: usize) -> RoadNetwork {
        RoadNetwork {
            rows,
            cols,
            lanes_per_approach: default_lanes(),
            state_grids: default_state_grids(),
            pass_grids: default_pass_grids(),
            grid_capacity: default_capacity(),
            lane_grids: default_lane_grids(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::config("network.rows", "must be at least 1"));
        }
        if self.cols == 0 {
            return Err(Error::config("network.cols", "must be at least 1"));
        }
        if self.lanes_per_approach != LANES_PER_APPROACH {
            return Err(Error::config(
                "network.lanes_per_approach",
                "only 3 lanes per approach (left/through/right) are supported",
            ));
        }
        if self.grid_capacity == 0 {
            return Err(Error::config("network.grid_capacity", "must be at least 1"));
        }
        if self.pass_grids == 0 {
            return Err(Error::config("network.n", "must be at least 1"));
        }
        if self.state_grids < self.pass_grids {
            return Err(Error::config("network.N", "must be at least n"));
        }
        if self.state_grids % self.pass_grids != 0 {
            return Err(Error::config(
                "network.N",
                format!("N = {} is not a multiple of n = {}", self.state_grids, self.pass_grids),
            ));
        }
        if self.lane_grids < self.state_grids || self.lane_grids < 3 {
            return Err(Error::config("network.lane_grids", "must be at least max(N, 3)"));
        }
        Ok(())
    }

    pub fn num_intersections(&self) -> usize {
        self.rows * self.cols
    }

    /// `l`, incoming lanes per intersection.
    pub fn lanes(&self) -> usize {
        4 * self.lanes_per_approach
    }

    pub fn intersection_id(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn intersection_pos(&self, id: usize) -> (usize, usize) {
        (id / self.cols, id % self.cols)
    }

    /// Neighbouring intersection after a step of `delta`, or `None` at the boundary.
    pub fn neighbor(&self, id: usize, delta: (i64, i64)) -> Option<usize> {
        let (r, c) = self.intersection_pos(id);
        let nr = r as i64 + delta.0;
        let nc = c as i64 + delta.1;
        if nr < 0 || nc < 0 || nr >= self.rows as i64 || nc >= self.cols as i64 {
            None
        } else {
            Some(self.intersection_id(nr as usize, nc as usize))
        }
    }

    /// Whether the given approach of an intersection is fed from outside the grid.
    pub fn is_boundary(&self, row: usize, col: usize, side: Approach) -> bool {
        match side {
            Approach::North => row == 0,
            Approach::South => row + 1 == self.rows,
            Approach::West => col == 0,
            Approach::East => col + 1 == self.cols,
        }
    }

    /// Intersection fed by the given approach of `id`, if any.
    pub fn upstream(&self, id: usize, side: Approach) -> Option<usize> {
        let delta = match side {
            Approach::North => (-1, 0),
            Approach::South => (1, 0),
            Approach::East => (0, 1),
            Approach::West => (0, -1),
        };
        self.neighbor(id, delta)
    }
}
