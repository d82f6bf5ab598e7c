//! Conventional signal controllers: fixed-time, self-organising (SOTL),
//! max-pressure and uniformly random phases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{lane_row, MovementQueue, Phase, SimHandle, NUM_PHASES};

/// Chooses one phase per intersection at every action interval.
pub trait Controller {
    fn name(&self) -> String;

    /// Called before each episode.
    fn reset(&mut self) {}

    fn decide(&mut self, sim: &SimHandle, interval: usize) -> Result<Vec<Phase>>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControllerKind {
    #[default]
    FixedTime,
    Sotl,
    MaxPressure,
    Random,
}

fn default_cycle() -> Vec<Phase> {
    [1, 3, 2, 4].into_iter().map(|i| Phase::new(i).unwrap()).collect()
}
fn default_durations() -> Vec<u32> {
    vec![2; 4]
}
fn default_threshold() -> f64 {
    3.0
}
fn default_min_green() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    #[serde(default)]
    pub kind: ControllerKind,
    /// Phases cycled by the fixed-time plan.
    #[serde(default = "default_cycle")]
    pub fixed_cycle: Vec<Phase>,
    /// Intervals each cycle phase is held.
    #[serde(default = "default_durations")]
    pub fixed_durations: Vec<u32>,
    #[serde(default = "default_threshold")]
    pub sotl_threshold: f64,
    /// Intervals a phase is held before SOTL may switch.
    #[serde(default = "default_min_green")]
    pub sotl_min_green: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig::new(ControllerKind::FixedTime)
    }
}

impl ControllerConfig {
    pub fn new(kind: ControllerKind) -> ControllerConfig {
        ControllerConfig {
            kind,
            fixed_cycle: default_cycle(),
            fixed_durations: default_durations(),
            sotl_threshold: default_threshold(),
            sotl_min_green: default_min_green(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fixed_cycle.len() != 4 {
            return Err(Error::config("fixed_cycle", "fixed-time plan needs exactly four phases"));
        }
        if self.fixed_durations.len() != self.fixed_cycle.len() {
            return Err(Error::config("fixed_durations", "one duration per cycle phase"));
        }
        if self.fixed_durations.contains(&0) {
            return Err(Error::config("fixed_durations", "durations must be at least 1"));
        }
        if !(self.sotl_threshold >= 0.0) {
            return Err(Error::config("sotl_threshold", "must be nonnegative"));
        }
        if self.sotl_min_green == 0 {
            return Err(Error::config("sotl_min_green", "must be at least 1"));
        }
        Ok(())
    }

    /// Build a network-wide controller; `seed` only matters for random control.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Controller>> {
        self.validate()?;
        Ok(match self.kind {
            ControllerKind::FixedTime => Box::new(FixedTime { cfg: self.clone() }),
            ControllerKind::Sotl => Box::new(Sotl::new(self.clone())),
            ControllerKind::MaxPressure => Box::new(MaxPressure),
            ControllerKind::Random => Box::new(RandomPhases::new(seed)),
        })
    }
}

/// Phase of the fixed-time plan at `interval_index`.
pub fn fixed_time_act(cfg: &ControllerConfig, interval_index: usize) -> Phase {
    let period: u32 = cfg.fixed_durations.iter().sum();
    let mut t = (interval_index as u64 % period as u64) as u32;
    for (&phase, &d) in cfg.fixed_cycle.iter().zip(&cfg.fixed_durations) {
        if t < d {
            return phase;
        }
        t -= d;
    }
    unreachable!("interval within period")
}

/// SOTL rule. `waiting[k]` is the waiting count served by phase `k + 1`.
pub fn sotl_act(cfg: &ControllerConfig, waiting: &[f64; NUM_PHASES], current: Phase, time_in_phase: u32) -> Phase {
    if time_in_phase < cfg.sotl_min_green {
        return current;
    }
    let trigger = Phase::all()
        .filter(|&p| p != current)
        .any(|p| waiting[p.index()] >= cfg.sotl_threshold);
    if !trigger {
        return current;
    }
    let mut best = current;
    for p in Phase::all() {
        if waiting[p.index()] > waiting[best.index()] {
            best = p;
        }
    }
    best
}

/// Pressure of each phase: sum of upstream minus downstream over its two movements.
pub fn phase_pressures(queues: &[MovementQueue]) -> [f64; NUM_PHASES] {
    let mut out = [0.0; NUM_PHASES];
    for p in Phase::all() {
        out[p.index()] = p
            .movements()
            .iter()
            .map(|&(a, m)| {
                queues
                    .iter()
                    .find(|q| q.approach == a && q.movement == m)
                    .map_or(0.0, |q| q.upstream - q.downstream)
            })
            .sum();
    }
    out
}

/// Phase with maximal pressure; lowest id wins ties.
pub fn max_pressure_act(queues: &[MovementQueue]) -> Phase {
    let pressures = phase_pressures(queues);
    let mut best = 0;
    for k in 1..NUM_PHASES {
        if pressures[k] > pressures[best] {
            best = k;
        }
    }
    Phase::from_index(best)
}

pub struct FixedTime {
    cfg: ControllerConfig,
}

impl Controller for FixedTime {
    fn name(&self) -> String {
        "FIXED_TIME".into()
    }

    fn decide(&mut self, sim: &SimHandle, interval: usize) -> Result<Vec<Phase>> {
        Ok(vec![fixed_time_act(&self.cfg, interval); sim.num_intersections()])
    }
}

pub struct Sotl {
    cfg: ControllerConfig,
    current: Vec<Phase>,
    held: Vec<u32>,
}

impl Sotl {
    pub fn new(cfg: ControllerConfig) -> Sotl {
        Sotl {
            cfg,
            current: Vec::new(),
            held: Vec::new(),
        }
    }
}

/// Waiting vehicles served by each phase's protected movements.
pub fn waiting_per_phase(lane_waiting: &[u32]) -> [f64; NUM_PHASES] {
    let mut out = [0.0; NUM_PHASES];
    for p in Phase::all() {
        out[p.index()] = p
            .movements()
            .iter()
            .map(|&(a, m)| lane_waiting[lane_row(a, m)] as f64)
            .sum();
    }
    out
}

impl Controller for Sotl {
    fn name(&self) -> String {
        "SOTL".into()
    }

    fn reset(&mut self) {
        self.current.clear();
        self.held.clear();
    }

    fn decide(&mut self, sim: &SimHandle, _interval: usize) -> Result<Vec<Phase>> {
        let n = sim.num_intersections();
        if self.current.len() != n {
            self.current = vec![self.cfg.fixed_cycle[0]; n];
            self.held = vec![0; n];
        }
        for i in 0..n {
            let waiting = waiting_per_phase(&sim.waiting_per_lane(i)?);
            let next = sotl_act(&self.cfg, &waiting, self.current[i], self.held[i]);
            if next == self.current[i] {
                self.held[i] += 1;
            } else {
                self.current[i] = next;
                self.held[i] = 1;
            }
        }
        Ok(self.current.clone())
    }
}

pub struct MaxPressure;

impl Controller for MaxPressure {
    fn name(&self) -> String {
        "MAX_PRESSURE".into()
    }

    fn decide(&mut self, sim: &SimHandle, _interval: usize) -> Result<Vec<Phase>> {
        (0..sim.num_intersections())
            .map(|i| Ok(max_pressure_act(&sim.movement_queues(i)?)))
            .collect()
    }
}

pub struct RandomPhases {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomPhases {
    pub fn new(seed: u64) -> RandomPhases {
        RandomPhases {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for RandomPhases {
    fn name(&self) -> String {
        "RANDOM".into()
    }

    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    fn decide(&mut self, sim: &SimHandle, _interval: usize) -> Result<Vec<Phase>> {
        Ok((0..sim.num_intersections())
            .map(|_| Phase::from_index(self.rng.gen_range(0..NUM_PHASES)))
            .collect())
    }
}

/// Replaces each intersection's phase by a uniformly random one with probability `epsilon`.
///
/// The random stream continues across episodes, so repeated episodes explore differently.
pub struct EpsilonMix<C> {
    pub inner: C,
    pub epsilon: f64,
    rng: ChaCha8Rng,
}

impl<C: Controller> EpsilonMix<C> {
    pub fn new(inner: C, epsilon: f64, seed: u64) -> EpsilonMix<C> {
        EpsilonMix {
            inner,
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl<C: Controller> Controller for EpsilonMix<C> {
    fn name(&self) -> String {
        format!("{}+eps{}", self.inner.name(), self.epsilon)
    }

    fn reset(&mut self) {
        self.inner.reset();
    }

    fn decide(&mut self, sim: &SimHandle, interval: usize) -> Result<Vec<Phase>> {
        let mut phases = self.inner.decide(sim, interval)?;
        for p in &mut phases {
            if self.rng.gen::<f64>() < self.epsilon {
                *p = Phase::from_index(self.rng.gen_range(0..NUM_PHASES));
            }
        }
        Ok(phases)
    }
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn reset(&mut self) {
        (**self).reset()
    }
    fn decide(&mut self, sim: &SimHandle, interval: usize) -> Result<Vec<Phase>> {
        (**self).decide(sim, interval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Approach, Movement};

    fn p(i: u8) -> Phase {
        Phase::new(i).unwrap()
    }

    fn cycle_cfg(durations: Vec<u32>) -> ControllerConfig {
        ControllerConfig {
            fixed_cycle: vec![p(1), p(2), p(3), p(4)],
            fixed_durations: durations,
            ..ControllerConfig::new(ControllerKind::FixedTime)
        }
    }

    #[test]
    fn fixed_time_cycles() {
        let cfg = cycle_cfg(vec![1, 1, 1, 1]);
        let seq: Vec<u8> = (0..8).map(|i| fixed_time_act(&cfg, i).id()).collect();
        assert_eq!(seq, vec![1, 2, 3, 4, 1, 2, 3, 4]);
        let cfg = cycle_cfg(vec![2, 1, 1, 1]);
        assert_eq!(fixed_time_act(&cfg, 1), p(1));
        assert_eq!(fixed_time_act(&cfg, 2), p(2));
    }

    #[test]
    fn fixed_time_is_periodic() {
        let cfg = cycle_cfg(vec![3, 1, 2, 2]);
        for i in 0..50 {
            assert_eq!(fixed_time_act(&cfg, i), fixed_time_act(&cfg, i + 8));
        }
    }

    #[test]
    fn sotl_rules() {
        let cfg = ControllerConfig::new(ControllerKind::Sotl);
        let zero = [0.0; 8];
        assert_eq!(sotl_act(&cfg, &zero, p(2), 5), p(2));
        let mut w = [0.0; 8];
        w[5] = 5.0;
        assert_eq!(sotl_act(&cfg, &w, p(2), 1), p(6));
        assert_eq!(sotl_act(&cfg, &w, p(2), 0), p(2));
        let mut below = [0.0; 8];
        below[5] = 2.0;
        assert_eq!(sotl_act(&cfg, &below, p(2), 3), p(2));
    }

    fn queues(entries: &[(Approach, Movement, f64, f64)]) -> Vec<MovementQueue> {
        let mut all = Vec::new();
        for a in Approach::ALL {
            for m in Movement::ALL {
                let (up, down) = entries
                    .iter()
                    .find(|e| e.0 == a && e.1 == m)
                    .map_or((0.0, 0.0), |e| (e.2, e.3));
                all.push(MovementQueue {
                    approach: a,
                    movement: m,
                    upstream: up,
                    downstream: down,
                });
            }
        }
        all
    }

    #[test]
    fn max_pressure_hand_case() {
        use Approach::*;
        use Movement::*;
        // Phase 6 (E through + E left): (4 - 1) + (3 - 0) = 6. Phase 3 gets
        // E through plus W through 2 - 0 = 5; phase 4 gets E left + W left 3 + 1 = 4.
        let q = queues(&[
            (East, Through, 4.0, 1.0),
            (East, Left, 3.0, 0.0),
            (West, Through, 2.0, 0.0),
            (West, Left, 1.0, 0.0),
            (North, Through, 2.0, 1.0),
        ]);
        let pr = phase_pressures(&q);
        assert_eq!(pr[5], 6.0);
        assert!(pr.iter().enumerate().all(|(k, &v)| k == 5 || v <= 5.0));
        assert_eq!(max_pressure_act(&q), p(6));
    }

    #[test]
    fn max_pressure_ties_go_to_phase_one() {
        let q = queues(&[]);
        assert_eq!(max_pressure_act(&q), p(1));
        let mut eq = q.clone();
        eq.iter_mut().for_each(|m| {
            m.upstream = 3.0;
            m.downstream = 3.0;
        });
        assert_eq!(max_pressure_act(&eq), p(1));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = ControllerConfig::new(ControllerKind::FixedTime);
        cfg.fixed_durations[1] = 0;
        assert!(cfg.build(0).is_err());
    }
}
