//! Running controllers through full episodes and logging transitions.

use serde::{Deserialize, Serialize};

use crate::baselines::Controller;
use crate::error::{Error, Result};
use crate::sim::{MetricsReport, Observation, Phase, Scenario, Schema, SimHandle, StateMatrix};

/// One intersection's step: observation and true state before and after the action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub city_id: String,
    /// Interval index within the episode.
    pub t: usize,
    pub intersection: usize,
    pub o_t: Observation,
    pub s_t: StateMatrix,
    pub a_t: Phase,
    pub s_next: StateMatrix,
    pub o_next: Observation,
}

#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub metrics: MetricsReport,
    pub records: Vec<TransitionRecord>,
    pub final_digest: String,
}

/// Observation and true state of every intersection.
pub fn snapshot(sim: &SimHandle, schema: Schema) -> Result<(Vec<Observation>, Vec<StateMatrix>)> {
    let n = sim.num_intersections();
    let obs = (0..n).map(|i| sim.observe(i, schema)).collect::<Result<Vec<_>>>()?;
    let states = (0..n).map(|i| sim.extract_state(i)).collect::<Result<Vec<_>>>()?;
    Ok((obs, states))
}

/// Run one full episode of `scenario` under `controller`.
///
/// When `record` is set, one [`TransitionRecord`] per intersection per
/// interval is logged with observations in the scenario's schema.
pub fn run_episode(scenario: &Scenario, controller: &mut dyn Controller, record: bool) -> Result<EpisodeOutcome> {
    let mut sim = scenario.reset()?;
    controller.reset();
    let mut records = Vec::new();
    let city = scenario.name.clone();
    let mut before = if record { Some(snapshot(&sim, scenario.schema)?) } else { None };
    for t in 0..scenario.intervals() {
        let actions = controller.decide(&sim, t)?;
        if actions.len() != sim.num_intersections() {
            return Err(Error::shape(format!(
                "controller {} returned {} phases for {} intersections",
                controller.name(),
                actions.len(),
                sim.num_intersections()
            )));
        }
        sim.step(&actions, scenario.interval_s)?;
        if let Some((o_prev, s_prev)) = before.take() {
            let (o_now, s_now) = snapshot(&sim, scenario.schema)?;
            for (i, &a) in actions.iter().enumerate() {
                records.push(TransitionRecord {
                    city_id: city.clone(),
                    t,
                    intersection: i,
                    o_t: o_prev[i].clone(),
                    s_t: s_prev[i].clone(),
                    a_t: a,
                    s_next: s_now[i].clone(),
                    o_next: o_now[i].clone(),
                });
            }
            before = Some((o_now, s_now));
        }
    }
    Ok(EpisodeOutcome {
        metrics: sim.metrics(),
        records,
        final_digest: sim.digest(),
    })
}

/// A target environment that counts every episode it serves.
pub struct CountedEnv {
    scenario: Scenario,
    episodes: usize,
}

impl CountedEnv {
    pub fn new(scenario: Scenario) -> CountedEnv {
        CountedEnv { scenario, episodes: 0 }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Episodes consumed so far.
    pub fn interactions(&self) -> usize {
        self.episodes
    }

    pub fn run(&mut self, controller: &mut dyn Controller, record: bool) -> Result<EpisodeOutcome> {
        self.episodes += 1;
        run_episode(&self.scenario, controller, record)
    }
}
