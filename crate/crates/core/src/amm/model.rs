//! Learned modules: observation-to-state representation and state dynamics.

use serde::{Deserialize, Serialize};

use super::value::{dist_raw, lane_dist_raw, DistParams};
use crate::error::{Error, Result};
use crate::nn::{Activation, Net, ParamVector};
use crate::sim::{Observation, Phase, Schema, StateMatrix, NUM_PHASES};

/// Which distance drives training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Block totals summed over all lanes of the intersection.
    Aggregate,
    /// Block totals lane by lane, summed over lanes.
    #[default]
    PerLane,
}

impl LossKind {
    pub(crate) fn eval(self, pred: &[f64], target: &[f64], grids: usize, dp: &DistParams, grad: Option<(&mut [f64], f64)>) -> f64 {
        match self {
            LossKind::Aggregate => dist_raw(pred, target, grids, dp, grad),
            LossKind::PerLane => lane_dist_raw(pred, target, grids, dp, grad),
        }
    }
}

/// Maps an intersection's observation to an estimated state.
pub trait Representation {
    fn estimate(&self, o: &Observation) -> Result<StateMatrix>;
}

/// One-step state transition under a phase.
pub trait Dynamics {
    /// Next state for each `(states[i], actions[i])` pair.
    fn predict_batch(&self, states: &[StateMatrix], actions: &[Phase]) -> Result<Vec<StateMatrix>>;

    fn predict(&self, s: &StateMatrix, a: Phase) -> Result<StateMatrix> {
        Ok(self.predict_batch(std::slice::from_ref(s), &[a])?.remove(0))
    }
}

fn default_obs_scale(schema: Schema) -> Vec<f64> {
    match schema {
        Schema::Base => vec![0.1],
        Schema::A => vec![0.1, 0.25],
        Schema::B => vec![0.1, 0.25],
        Schema::C => vec![0.1, 1.0, 1.0],
    }
}

/// Per-lane observation-to-state net shared across the lanes of an intersection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReprModel {
    #[serde(rename = "schema_id")]
    pub schema: Schema,
    pub lanes: usize,
    /// Multiplies each observation feature before the net sees it.
    pub input_scale: Vec<f64>,
    #[serde(flatten)]
    pub net: Net,
}

impl ReprModel {
    /// Net sizes `[d_o, hidden.., N]` with softplus output.
    pub fn new(schema: Schema, lanes: usize, state_grids: usize, hidden: &[usize], seed: u64) -> Result<ReprModel> {
        let mut sizes = vec![schema.dims()];
        sizes.extend_from_slice(hidden);
        sizes.push(state_grids);
        Ok(ReprModel {
            schema,
            lanes,
            input_scale: default_obs_scale(schema),
            net: Net::new(&sizes, Activation::Softplus, seed)?,
        })
    }

    pub fn state_grids(&self) -> usize {
        self.net.output_size()
    }

    pub fn with_params(&self, params: ParamVector) -> Result<ReprModel> {
        Ok(ReprModel {
            net: self.net.with_params(params)?,
            ..self.clone()
        })
    }

    fn inputs(&self, obs: &[&Observation]) -> Result<Vec<f64>> {
        let d = self.schema.dims();
        let mut x = Vec::with_capacity(obs.len() * self.lanes * d);
        for o in obs {
            if o.schema != self.schema || o.lanes != self.lanes {
                return Err(Error::shape(format!(
                    "observation {} with {} lanes does not match model for {} with {} lanes",
                    o.schema.name(),
                    o.lanes,
                    self.schema.name(),
                    self.lanes
                )));
            }
            o.check()?;
            for row in o.values.chunks_exact(d) {
                x.extend(row.iter().zip(&self.input_scale).map(|(v, s)| v * s));
            }
        }
        Ok(x)
    }

    /// Mean training loss and gradient over `(observation, true state)` pairs at `params`.
    pub fn loss_grad(
        &self,
        params: &ParamVector,
        obs: &[&Observation],
        targets: &[&StateMatrix],
        dp: &DistParams,
        kind: LossKind,
    ) -> Result<(f64, ParamVector)> {
        if obs.len() != targets.len() || obs.is_empty() {
            return Err(Error::shape("need equally many nonempty observations and targets"));
        }
        let x = self.inputs(obs)?;
        let grids = self.state_grids();
        let per = self.lanes * grids;
        for t in targets {
            if t.values.len() != per || t.grids != grids {
                return Err(Error::shape("target state shape does not match the model"));
            }
        }
        let scale = 1.0 / obs.len() as f64;
        self.net.grad_with(params, &x, |out, g| {
            let mut total = 0.0;
            for (k, t) in targets.iter().enumerate() {
                let span = k * per..(k + 1) * per;
                total += kind.eval(&out[span.clone()], &t.values, grids, dp, Some((&mut g[span], scale)));
            }
            total * scale
        })
    }

    /// Mean loss over pairs at the current parameters.
    pub fn mean_dist(&self, obs: &[&Observation], targets: &[&StateMatrix], dp: &DistParams, kind: LossKind) -> Result<f64> {
        let est = self.estimate_batch(obs)?;
        let grids = self.state_grids();
        Ok(est
            .iter()
            .zip(targets)
            .map(|(e, t)| kind.eval(&e.values, &t.values, grids, dp, None))
            .sum::<f64>()
            / obs.len().max(1) as f64)
    }

    pub fn estimate_batch(&self, obs: &[&Observation]) -> Result<Vec<StateMatrix>> {
        if obs.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.inputs(obs)?;
        let out = self.net.forward_batch_with(self.net.params(), &x)?;
        let per = self.lanes * self.state_grids();
        out.chunks_exact(per)
            .map(|c| StateMatrix::from_flat(self.lanes, self.state_grids(), c.to_vec()))
            .collect()
    }
}

impl Representation for ReprModel {
    fn estimate(&self, o: &Observation) -> Result<StateMatrix> {
        Ok(self.estimate_batch(&[o])?.remove(0))
    }
}

/// Row-wise application of the representation net.
pub fn repr_forward(f: &ReprModel, o: &Observation) -> Result<StateMatrix> {
    f.estimate(o)
}

/// Intersection-level dynamics net: flattened state plus one-hot phase in,
/// next state out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynModel {
    pub lanes: usize,
    pub grids: usize,
    /// Multiplies state entries before the net sees them.
    pub state_scale: f64,
    #[serde(flatten)]
    pub net: Net,
}

/// One training example for the dynamics net.
#[derive(Clone, Copy, Debug)]
pub struct Transition<'a> {
    pub state: &'a StateMatrix,
    pub action: Phase,
    pub next: &'a StateMatrix,
}

impl DynModel {
    /// Net sizes `[l*N + 8, hidden.., l*N]` with softplus output.
    pub fn new(lanes: usize, grids: usize, hidden: &[usize], seed: u64) -> Result<DynModel> {
        let mut sizes = vec![lanes * grids + NUM_PHASES];
        sizes.extend_from_slice(hidden);
        sizes.push(lanes * grids);
        Ok(DynModel {
            lanes,
            grids,
            state_scale: 0.25,
            net: Net::new(&sizes, Activation::Softplus, seed)?,
        })
    }

    pub fn with_params(&self, params: ParamVector) -> Result<DynModel> {
        Ok(DynModel {
            net: self.net.with_params(params)?,
            ..self.clone()
        })
    }

    pub fn params(&self) -> &ParamVector {
        self.net.params()
    }

    fn push_input(&self, x: &mut Vec<f64>, s: &StateMatrix, a: Phase) -> Result<()> {
        if s.lanes != self.lanes || s.grids != self.grids {
            return Err(Error::shape(format!(
                "state is {}x{}, dynamics expects {}x{}",
                s.lanes, s.grids, self.lanes, self.grids
            )));
        }
        x.extend(s.values.iter().map(|v| v * self.state_scale));
        let mut onehot = [0.0; NUM_PHASES];
        onehot[a.index()] = 1.0;
        x.extend_from_slice(&onehot);
        Ok(())
    }

    fn predict_with(&self, params: &ParamVector, states: &[StateMatrix], actions: &[Phase]) -> Result<Vec<StateMatrix>> {
        if states.len() != actions.len() {
            return Err(Error::shape("states and actions differ in length"));
        }
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let mut x = Vec::with_capacity(states.len() * self.net.input_size());
        for (s, &a) in states.iter().zip(actions) {
            self.push_input(&mut x, s, a)?;
        }
        let out = self.net.forward_batch_with(params, &x)?;
        out.chunks_exact(self.lanes * self.grids)
            .map(|c| StateMatrix::from_flat(self.lanes, self.grids, c.to_vec()))
            .collect()
    }

    /// Mean training loss and gradient over transitions at `params`.
    pub fn loss_grad(
        &self,
        params: &ParamVector,
        batch: &[Transition<'_>],
        dp: &DistParams,
        kind: LossKind,
    ) -> Result<(f64, ParamVector)> {
        if batch.is_empty() {
            return Err(Error::shape("empty transition batch"));
        }
        let mut x = Vec::with_capacity(batch.len() * self.net.input_size());
        for t in batch {
            self.push_input(&mut x, t.state, t.action)?;
            if !t.next.same_shape(t.state) {
                return Err(Error::shape("next state shape differs from state"));
            }
        }
        let per = self.lanes * self.grids;
        let scale = 1.0 / batch.len() as f64;
        self.net.grad_with(params, &x, |out, g| {
            let mut total = 0.0;
            for (k, t) in batch.iter().enumerate() {
                let span = k * per..(k + 1) * per;
                total += kind.eval(&out[span.clone()], &t.next.values, self.grids, dp, Some((&mut g[span], scale)));
            }
            total * scale
        })
    }

    /// Mean loss of one-step predictions at `params`.
    pub fn mean_dist_with(&self, params: &ParamVector, batch: &[Transition<'_>], dp: &DistParams, kind: LossKind) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let states: Vec<StateMatrix> = batch.iter().map(|t| t.state.clone()).collect();
        let actions: Vec<Phase> = batch.iter().map(|t| t.action).collect();
        let pred = self.predict_with(params, &states, &actions)?;
        Ok(pred
            .iter()
            .zip(batch)
            .map(|(p, t)| kind.eval(&p.values, &t.next.values, self.grids, dp, None))
            .sum::<f64>()
            / batch.len() as f64)
    }

    pub fn mean_dist(&self, batch: &[Transition<'_>], dp: &DistParams, kind: LossKind) -> Result<f64> {
        self.mean_dist_with(self.net.params(), batch, dp, kind)
    }
}

impl Dynamics for DynModel {
    fn predict_batch(&self, states: &[StateMatrix], actions: &[Phase]) -> Result<Vec<StateMatrix>> {
        self.predict_with(self.net.params(), states, actions)
    }
}

/// Apply `g` once per action, yielding the predicted states after each.
pub fn rollout<G: Dynamics + ?Sized>(g: &G, s: &StateMatrix, actions: &[Phase]) -> Result<Vec<StateMatrix>> {
    let mut out = Vec::with_capacity(actions.len());
    let mut cur = s.clone();
    for &a in actions {
        cur = g.predict(&cur, a)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// Roll out many equal-length action sequences from one start state, batching
/// each step across sequences.
pub fn rollout_many<G: Dynamics + ?Sized>(g: &G, s: &StateMatrix, sequences: &[Vec<Phase>]) -> Result<Vec<Vec<StateMatrix>>> {
    let len = sequences.first().map_or(0, Vec::len);
    if sequences.iter().any(|q| q.len() != len) {
        return Err(Error::shape("action sequences differ in length"));
    }
    let mut trajectories: Vec<Vec<StateMatrix>> = vec![Vec::with_capacity(len); sequences.len()];
    let mut current: Vec<StateMatrix> = vec![s.clone(); sequences.len()];
    for step in 0..len {
        let actions: Vec<Phase> = sequences.iter().map(|q| q[step]).collect();
        current = g.predict_batch(&current, &actions)?;
        for (traj, st) in trajectories.iter_mut().zip(&current) {
            traj.push(st.clone());
        }
    }
    Ok(trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amm::value::dist;
    use crate::nn::grad_check;

    struct Identity;
    impl Dynamics for Identity {
        fn predict_batch(&self, states: &[StateMatrix], _: &[Phase]) -> Result<Vec<StateMatrix>> {
            Ok(states.to_vec())
        }
    }

    fn p(i: u8) -> Phase {
        Phase::new(i).unwrap()
    }

    #[test]
    fn zero_weight_repr_outputs_ln2() {
        let f = ReprModel::new(Schema::C, 12, 12, &[8], 0).unwrap();
        let f = f.with_params(ParamVector::zeros(f.net.num_params())).unwrap();
        let s = repr_forward(&f, &Observation::zeros(Schema::C, 12)).unwrap();
        assert_eq!((s.lanes, s.grids), (12, 12));
        assert!(s.values.iter().all(|v| (v - 2f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn repr_output_shape_is_independent_of_schema() {
        for schema in [Schema::Base, Schema::A, Schema::B, Schema::C] {
            let f = ReprModel::new(schema, 12, 12, &[16, 16], 3).unwrap();
            let mut o = Observation::zeros(schema, 12);
            o.values.iter_mut().enumerate().for_each(|(i, v)| *v = (i % 5) as f64);
            let s = f.estimate(&o).unwrap();
            assert_eq!((s.lanes, s.grids), (12, 12));
            assert!(s.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn schema_mismatch_is_a_shape_error() {
        let f = ReprModel::new(Schema::A, 12, 12, &[8], 0).unwrap();
        assert!(matches!(f.estimate(&Observation::zeros(Schema::C, 12)), Err(Error::Shape(_))));
    }

    #[test]
    fn identity_stub_rollout_repeats_state() {
        let s = StateMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 3.0]]).unwrap();
        let traj = rollout(&Identity, &s, &[p(1), p(4), p(8)]).unwrap();
        assert_eq!(traj.len(), 3);
        assert!(traj.iter().all(|t| *t == s));
    }

    #[test]
    fn rollout_composes() {
        let g = DynModel::new(12, 4, &[16], 9).unwrap();
        let mut s = StateMatrix::zeros(12, 4);
        s.values.iter_mut().enumerate().for_each(|(i, v)| *v = (i % 3) as f64);
        let a1 = [p(2), p(5)];
        let a2 = [p(7)];
        let full = rollout(&g, &s, &[p(2), p(5), p(7)]).unwrap();
        let first = rollout(&g, &s, &a1).unwrap();
        let second = rollout(&g, first.last().unwrap(), &a2).unwrap();
        assert_eq!(&full[..2], &first[..]);
        assert_eq!(full[2], second[0]);
        let single = rollout(&g, &s, &[p(3)]).unwrap();
        assert_eq!(single[0], g.predict(&s, p(3)).unwrap());
        let many = rollout_many(&g, &s, &[vec![p(2), p(5), p(7)], vec![p(3), p(3), p(3)]]).unwrap();
        assert_eq!(many[0], full);
    }

    #[test]
    fn dynamics_loss_gradient_checks() {
        let g = DynModel::new(2, 4, &[6], 4).unwrap();
        let dp = DistParams {
            beta: 0.8,
            state_grids: 4,
            pass_grids: 2,
        };
        let s = StateMatrix::from_rows(&[vec![1.0, 0.0, 2.0, 1.0], vec![0.0, 3.0, 0.0, 1.0]]).unwrap();
        let n = StateMatrix::from_rows(&[vec![0.0, 1.0, 1.0, 1.0], vec![2.0, 1.0, 0.0, 0.0]]).unwrap();
        let batch = [Transition { state: &s, action: p(3), next: &n }];
        let (loss, _) = g.loss_grad(g.params(), &batch, &dp, LossKind::Aggregate).unwrap();
        let pred = g.predict(&s, p(3)).unwrap();
        assert!((loss - dist(&pred, &n, &dp).unwrap()).abs() < 1e-12);

        let mut x = s.values.iter().map(|v| v * 0.25).collect::<Vec<_>>();
        x.extend([0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        for kind in [LossKind::Aggregate, LossKind::PerLane] {
            let r = grad_check(
                &g.net,
                &x,
                |out, gr| kind.eval(out, &n.values, 4, &dp, Some((gr, 1.0))),
                1e-5,
            )
            .unwrap();
            assert!(r.max_rel_error < 1e-4, "{kind:?} {r:?}");
        }
    }
}
