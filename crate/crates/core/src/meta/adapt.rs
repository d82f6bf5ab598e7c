//! Adapting a meta-trained dynamics model to a target city under a fixed
//! episode budget, and training observation adapters from offline logs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::transition;
use super::episode::{run_episode, CountedEnv, TransitionRecord};
use crate::amm::{
    argmax_first, candidates, dist, value, CandidateMode, DistParams, DynModel, Dynamics, LossKind, PolicyParams,
    ReprModel, ValueParams,
};
use crate::baselines::Controller;
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig};
use crate::sim::{MetricsReport, Observation, Phase, Scenario, Schema, SimHandle, StateMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    /// Step size (gamma) of both modules' optimisers.
    pub lr: f64,
    /// Target-city episodes the adaptation may consume.
    pub target_episode_budget: usize,
    /// Weight (lambda) of the dynamics term in the joint loss.
    pub joint_weight: f64,
    pub epochs_per_episode: usize,
    pub batch_size: usize,
    /// Exploration rate in the first target episode.
    pub epsilon: f64,
    /// Multiplies epsilon after every target episode.
    pub epsilon_decay: f64,
    pub repr_hidden: Vec<usize>,
    pub loss: LossKind,
    pub value: ValueParams,
    pub dist: DistParams,
    pub candidate_mode: CandidateMode,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            lr: 1e-3,
            target_episode_budget: 5,
            joint_weight: 1.0,
            epochs_per_episode: 20,
            batch_size: 64,
            epsilon: 0.1,
            epsilon_decay: 0.99,
            repr_hidden: vec![32, 32],
            loss: LossKind::default(),
            value: ValueParams::default(),
            dist: DistParams::default(),
            candidate_mode: CandidateMode::Constant,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("adapt.lr", "must be positive"));
        }
        if self.target_episode_budget == 0 {
            return Err(Error::config("adapt.target_episode_budget", "must be at least 1"));
        }
        if !(self.joint_weight >= 0.0) {
            return Err(Error::config("adapt.joint_weight", "must be nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("adapt.batch_size", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) || !(0.0..=1.0).contains(&self.epsilon_decay) {
            return Err(Error::config("adapt.epsilon", "epsilon and its decay must lie in [0, 1]"));
        }
        self.value.validate()?;
        self.dist.validate()?;
        self.policy(self.epsilon).validate(self.value.horizon)
    }

    fn policy(&self, epsilon: f64) -> PolicyParams {
        PolicyParams {
            epsilon,
            candidate_mode: self.candidate_mode,
        }
    }
}

/// Plans every intersection with the representation and dynamics modules.
///
/// Candidates of all intersections are rolled out together, one batched
/// dynamics call per horizon step.
pub struct AmmController {
    pub f: ReprModel,
    pub g: DynModel,
    pub value: ValueParams,
    pub policy: PolicyParams,
    rng: ChaCha8Rng,
}

impl AmmController {
    pub fn new(f: ReprModel, g: DynModel, value: ValueParams, policy: PolicyParams, seed: u64) -> Result<AmmController> {
        policy.validate(value.horizon)?;
        value.validate()?;
        if f.state_grids() != g.grids || f.lanes != g.lanes {
            return Err(Error::shape(format!(
                "representation yields {}x{} states, dynamics expects {}x{}",
                f.lanes,
                f.state_grids(),
                g.lanes,
                g.grids
            )));
        }
        Ok(AmmController {
            f,
            g,
            value,
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Chosen phase for each observation, in order.
    pub fn plan(&mut self, obs: &[Observation]) -> Result<Vec<Phase>> {
        let seqs = candidates(self.policy.candidate_mode, self.value.horizon);
        let mut choice: Vec<Option<Phase>> = vec![None; obs.len()];
        let mut greedy = Vec::new();
        for (i, c) in choice.iter_mut().enumerate() {
            if self.policy.epsilon > 0.0 && self.rng.gen::<f64>() < self.policy.epsilon {
                *c = Some(seqs[self.rng.gen_range(0..seqs.len())][0]);
            } else {
                greedy.push(i);
            }
        }
        if greedy.is_empty() {
            return Ok(choice.into_iter().flatten().collect());
        }
        let refs: Vec<&Observation> = greedy.iter().map(|&i| &obs[i]).collect();
        let est = self.f.estimate_batch(&refs)?;
        let k = seqs.len();
        let mut current: Vec<StateMatrix> = est.iter().flat_map(|s| std::iter::repeat(s).take(k).cloned()).collect();
        let mut trajectories: Vec<Vec<StateMatrix>> = vec![Vec::with_capacity(self.value.horizon + 1); current.len()];
        for step in 0..=self.value.horizon {
            let actions: Vec<Phase> = (0..current.len()).map(|j| seqs[j % k][step]).collect();
            current = self.g.predict_batch(&current, &actions)?;
            for (traj, s) in trajectories.iter_mut().zip(&current) {
                traj.push(s.clone());
            }
        }
        for (gi, &i) in greedy.iter().enumerate() {
            let scores = trajectories[gi * k..(gi + 1) * k]
                .iter()
                .map(|t| value(t, &self.value))
                .collect::<Result<Vec<f64>>>()?;
            let best = argmax_first(&scores).ok_or_else(|| Error::shape("no candidates"))?;
            choice[i] = Some(seqs[best][0]);
        }
        Ok(choice.into_iter().flatten().collect())
    }
}

impl Controller for AmmController {
    fn name(&self) -> String {
        "AMM".to_string()
    }

    fn decide(&mut self, sim: &SimHandle, _interval: usize) -> Result<Vec<Phase>> {
        let obs = (0..sim.num_intersections())
            .map(|i| sim.observe(i, self.f.schema))
            .collect::<Result<Vec<_>>>()?;
        self.plan(&obs)
    }
}

#[derive(Clone, Debug)]
pub struct AdaptOutcome {
    pub f: ReprModel,
    pub g: DynModel,
    /// Target episodes consumed; always equals the configured budget.
    pub episodes_used: usize,
    /// Metrics of each exploratory target episode.
    pub episode_metrics: Vec<MetricsReport>,
    /// Joint training loss after each target episode.
    pub losses: Vec<f64>,
}

/// The randomly initialised representation that `adapt` starts from.
pub fn initial_repr(schema: Schema, phi: &DynModel, cfg: &AdaptConfig, seed: u64) -> Result<ReprModel> {
    ReprModel::new(schema, phi.lanes, phi.grids, &cfg.repr_hidden, seed ^ 0x5eed_f00d)
}

/// Representation trained from scratch and dynamics fine-tuned from `phi`,
/// spending exactly the configured number of target episodes.
pub fn adapt(phi: &DynModel, env: &mut CountedEnv, cfg: &AdaptConfig, schema: Schema, seed: u64) -> Result<AdaptOutcome> {
    cfg.validate()?;
    let scenario = env.scenario();
    if scenario.schema != schema {
        return Err(Error::config(
            "schema",
            format!("target `{}` is observed as {}, not {}", scenario.name, scenario.schema.name(), schema.name()),
        ));
    }
    if cfg.dist.state_grids != phi.grids || cfg.value.state_grids != phi.grids {
        return Err(Error::config("adapt.dist", "N must equal the dynamics model's state width"));
    }
    let mut f = initial_repr(schema, phi, cfg, seed)?;
    let mut g = phi.clone();
    let mut f_opt = Adam::new(AdamConfig::with_lr(cfg.lr), f.net.num_params());
    let mut g_opt = Adam::new(AdamConfig::with_lr(cfg.lr), g.net.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records: Vec<TransitionRecord> = Vec::new();
    let mut episode_metrics = Vec::with_capacity(cfg.target_episode_budget);
    let mut losses = Vec::with_capacity(cfg.target_episode_budget);
    let mut epsilon = cfg.epsilon;
    let start = env.interactions();
    for episode in 0..cfg.target_episode_budget {
        let mut ctl = AmmController::new(f.clone(), g.clone(), cfg.value, cfg.policy(epsilon), seed.wrapping_add(episode as u64))?;
        let out = env.run(&mut ctl, true)?;
        episode_metrics.push(out.metrics);
        records.extend(out.records);
        let mut loss = 0.0;
        for _ in 0..cfg.epochs_per_episode {
            loss = joint_epoch(&mut f, &mut g, &mut f_opt, &mut g_opt, &records, cfg, &mut rng)?;
        }
        losses.push(loss);
        epsilon *= cfg.epsilon_decay;
    }
    debug_assert_eq!(env.interactions() - start, cfg.target_episode_budget);
    Ok(AdaptOutcome {
        f,
        g,
        episodes_used: env.interactions() - start,
        episode_metrics,
        losses,
    })
}

/// One shuffled pass of minibatch updates on the joint loss; returns its mean.
fn joint_epoch(
    f: &mut ReprModel,
    g: &mut DynModel,
    f_opt: &mut Adam,
    g_opt: &mut Adam,
    records: &[TransitionRecord],
    cfg: &AdaptConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(cfg.batch_size) {
        let obs: Vec<&Observation> = chunk.iter().map(|&i| &records[i].o_t).collect();
        let states: Vec<&StateMatrix> = chunk.iter().map(|&i| &records[i].s_t).collect();
        let (lf, gf) = f.loss_grad(f.net.params(), &obs, &states, &cfg.dist, cfg.loss)?;
        let batch: Vec<_> = chunk.iter().map(|&i| transition(&records[i])).collect();
        let (lg, mut gg) = g.loss_grad(g.params(), &batch, &cfg.dist, cfg.loss)?;
        gg.scale(cfg.joint_weight);
        *f = f.with_params(f_opt.step(f.net.params(), &gf)?)?;
        *g = g.with_params(g_opt.step(g.params(), &gg)?)?;
        total += lf + cfg.joint_weight * lg;
        batches += 1;
    }
    if !total.is_finite() {
        return Err(Error::config("adapt.lr", "joint loss diverged"));
    }
    Ok(total / batches.max(1) as f64)
}

/// Representation trained on logged `(observation, true state)` pairs only.
pub fn offline_train_repr(
    logged: &[(Observation, StateMatrix)],
    schema: Schema,
    epochs: usize,
    lr: f64,
    cfg: &AdaptConfig,
    seed: u64,
) -> Result<ReprModel> {
    let (o0, s0) = logged
        .first()
        .ok_or_else(|| Error::config("offline.log", "no logged observations"))?;
    if let Some((i, _)) = logged.iter().enumerate().find(|(_, (o, _))| o.schema != schema) {
        return Err(Error::config(
            "offline.log",
            format!("entry {i} is {}, expected {}", logged[i].0.schema.name(), schema.name()),
        ));
    }
    if !(lr > 0.0) {
        return Err(Error::config("offline.lr", "must be positive"));
    }
    let mut f = ReprModel::new(schema, o0.lanes, s0.grids, &cfg.repr_hidden, seed ^ 0x0ff1_14e)?;
    let mut opt = Adam::new(AdamConfig::with_lr(lr), f.net.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..logged.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let obs: Vec<&Observation> = chunk.iter().map(|&i| &logged[i].0).collect();
            let states: Vec<&StateMatrix> = chunk.iter().map(|&i| &logged[i].1).collect();
            let (_, grad) = f.loss_grad(f.net.params(), &obs, &states, &cfg.dist, cfg.loss)?;
            f = f.with_params(opt.step(f.net.params(), &grad)?)?;
        }
    }
    Ok(f)
}

/// `(o_t, s_t)` pairs of logged records.
pub fn observation_pairs(records: &[TransitionRecord]) -> Vec<(Observation, StateMatrix)> {
    records.iter().map(|r| (r.o_t.clone(), r.s_t.clone())).collect()
}

/// Mean dist between one-step predictions of `g` and the logged next states.
pub fn dynamics_error(g: &DynModel, records: &[TransitionRecord], dp: &DistParams) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::config("records", "no records to evaluate"));
    }
    let mut total = 0.0;
    for chunk in records.chunks(512) {
        let states: Vec<StateMatrix> = chunk.iter().map(|r| r.s_t.clone()).collect();
        let actions: Vec<Phase> = chunk.iter().map(|r| r.a_t).collect();
        for (p, r) in g.predict_batch(&states, &actions)?.iter().zip(chunk) {
            total += dist(p, &r.s_next, dp)?;
        }
    }
    Ok(total / records.len() as f64)
}

/// Mean dist between `f(o_t)` and the true `s_t`.
pub fn representation_error(f: &ReprModel, records: &[TransitionRecord], dp: &DistParams) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::config("records", "no records to evaluate"));
    }
    let mut total = 0.0;
    for chunk in records.chunks(512) {
        let obs: Vec<&Observation> = chunk.iter().map(|r| &r.o_t).collect();
        for (e, r) in f.estimate_batch(&obs)?.iter().zip(chunk) {
            total += dist(e, &r.s_t, dp)?;
        }
    }
    Ok(total / records.len() as f64)
}

/// One greedy episode of the modular controller outside any budget.
pub fn evaluate_greedy(f: &ReprModel, g: &DynModel, scenario: &Scenario, vp: &ValueParams, seed: u64) -> Result<MetricsReport> {
    let mut ctl = AmmController::new(f.clone(), g.clone(), *vp, PolicyParams::greedy(), seed)?;
    Ok(run_episode(scenario, &mut ctl, false)?.metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Approach, Flow, FlowSpec, Movement, Origin, RoadNetwork};

    fn tiny_scenario(schema: Schema) -> Scenario {
        Scenario {
            name: "tiny".into(),
            network: RoadNetwork::grid(1, 1),
            flows: FlowSpec(vec![Flow {
                origin: Origin {
                    row: 0,
                    col: 0,
                    side: Approach::North,
                },
                route: vec![Movement::Through],
                start_s: 0,
                end_s: 200,
                headway_s: 5,
            }]),
            schema,
            episode_s: 200,
            interval_s: 20,
            seed: 0,
        }
    }

    fn small_cfg(budget: usize) -> AdaptConfig {
        AdaptConfig {
            target_episode_budget: budget,
            epochs_per_episode: 2,
            repr_hidden: vec![8],
            ..Default::default()
        }
    }

    #[test]
    fn budget_zero_is_rejected() {
        let phi = DynModel::new(12, 12, &[8], 0).unwrap();
        let mut env = CountedEnv::new(tiny_scenario(Schema::C));
        let err = adapt(&phi, &mut env, &small_cfg(0), Schema::C, 0).unwrap_err();
        assert!(err.is_config());
        assert_eq!(env.interactions(), 0);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let phi = DynModel::new(12, 12, &[8], 0).unwrap();
        let mut env = CountedEnv::new(tiny_scenario(Schema::C));
        assert!(adapt(&phi, &mut env, &small_cfg(1), Schema::A, 0).unwrap_err().is_config());
    }

    #[test]
    fn adaptation_spends_the_exact_budget() {
        let phi = DynModel::new(12, 12, &[8], 0).unwrap();
        for budget in [1, 3] {
            let mut env = CountedEnv::new(tiny_scenario(Schema::C));
            let out = adapt(&phi, &mut env, &small_cfg(budget), Schema::C, 7).unwrap();
            assert_eq!(env.interactions(), budget);
            assert_eq!(out.episodes_used, budget);
            assert_eq!(out.losses.len(), budget);
            assert!(out.losses.iter().all(|l| l.is_finite()));
        }
    }

    #[test]
    fn offline_training_rejects_empty_log() {
        assert!(offline_train_repr(&[], Schema::A, 5, 1e-3, &AdaptConfig::default(), 0)
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn offline_training_overfits_a_single_pair() {
        let mut o = Observation::zeros(Schema::A, 12);
        o.values.iter_mut().enumerate().for_each(|(i, v)| *v = (i % 4) as f64);
        let mut s = StateMatrix::zeros(12, 12);
        s.values.iter_mut().enumerate().for_each(|(i, v)| *v = ((i * 7) % 5) as f64);
        let log = vec![(o.clone(), s.clone()); 4];
        let cfg = AdaptConfig {
            repr_hidden: vec![16],
            ..Default::default()
        };
        let f0 = ReprModel::new(Schema::A, 12, 12, &cfg.repr_hidden, 0x0ff1_14e).unwrap();
        let before = dist(&f0.estimate_batch(&[&o]).unwrap()[0], &s, &cfg.dist).unwrap();
        let f = offline_train_repr(&log, Schema::A, 3000, 1e-2, &cfg, 0).unwrap();
        let after = dist(&f.estimate_batch(&[&o]).unwrap()[0], &s, &cfg.dist).unwrap();
        assert!(after < 0.01 * before, "{before} -> {after}");
    }

    #[test]
    fn batched_planner_matches_single_selection() {
        use crate::amm::select_action;
        let f = ReprModel::new(Schema::B, 12, 12, &[8], 1).unwrap();
        let g = DynModel::new(12, 12, &[8], 2).unwrap();
        let vp = ValueParams::default();
        let mut obs = Vec::new();
        for k in 0..3 {
            let mut o = Observation::zeros(Schema::B, 12);
            o.values.iter_mut().enumerate().for_each(|(i, v)| *v = ((i + k) % 6) as f64);
            obs.push(o);
        }
        let mut ctl = AmmController::new(f.clone(), g.clone(), vp, PolicyParams::greedy(), 0).unwrap();
        let planned = ctl.plan(&obs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (o, p) in obs.iter().zip(planned) {
            let a = select_action(&f, &g, o, &PolicyParams::greedy(), &vp, &mut rng).unwrap();
            assert_eq!(a.first(), p);
        }
    }
}
