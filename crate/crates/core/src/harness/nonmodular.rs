//! Monolithic ablation: one net maps an observation and a phase straight to
//! the next state, so only its trailing layers can move between cities whose
//! observations differ.

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::amm::{argmax_first, value, DistParams, LossKind, ValueParams};
use crate::baselines::Controller;
use crate::error::{Error, Result};
use crate::meta::{AdaptConfig, CountedEnv, TaskDataset, TransitionRecord};
use crate::nn::{param_count, Activation, Adam, AdamConfig, Net, ParamVector};
use crate::sim::{MetricsReport, Observation, Phase, Schema, SimHandle, StateMatrix, NUM_PHASES};

#[derive(Clone, Debug)]
pub struct MonoModel {
    pub schema: Schema,
    pub lanes: usize,
    pub grids: usize,
    pub input_scale: Vec<f64>,
    pub net: Net,
}

impl MonoModel {
    pub fn new(schema: Schema, lanes: usize, grids: usize, hidden: &[usize], seed: u64) -> Result<MonoModel> {
        if hidden.is_empty() {
            return Err(Error::config("dyn_hidden", "the monolithic net needs a hidden layer to transfer"));
        }
        let mut sizes = vec![lanes * schema.dims() + NUM_PHASES];
        sizes.extend_from_slice(hidden);
        sizes.push(lanes * grids);
        let input_scale = match schema {
            Schema::Base => vec![0.1],
            Schema::A | Schema::B => vec![0.1, 0.25],
            Schema::C => vec![0.1, 1.0, 1.0],
        };
        Ok(MonoModel {
            schema,
            lanes,
            grids,
            input_scale,
            net: Net::new(&sizes, Activation::Softplus, seed)?,
        })
    }

    /// Copy every layer after the first from `other`.
    pub fn inherit_trailing(&mut self, other: &MonoModel) -> Result<()> {
        let (mine, theirs) = (self.net.layer_sizes(), other.net.layer_sizes());
        if mine[1..] != theirs[1..] {
            return Err(Error::shape("trailing layers differ in shape"));
        }
        let (a, b) = (param_count(&mine[..2]), param_count(&theirs[..2]));
        let mut p = self.net.params().clone();
        p.0[a..].copy_from_slice(&other.net.params().0[b..]);
        self.net = self.net.with_params(p)?;
        Ok(())
    }

    fn push_input(&self, x: &mut Vec<f64>, o: &Observation, a: Phase) -> Result<()> {
        if o.schema != self.schema || o.lanes != self.lanes {
            return Err(Error::shape("observation does not match the monolithic model"));
        }
        let d = self.schema.dims();
        for row in o.values.chunks_exact(d) {
            x.extend(row.iter().zip(&self.input_scale).map(|(v, s)| v * s));
        }
        let mut onehot = [0.0; NUM_PHASES];
        onehot[a.index()] = 1.0;
        x.extend_from_slice(&onehot);
        Ok(())
    }

    pub fn predict_batch(&self, obs: &[&Observation], actions: &[Phase]) -> Result<Vec<StateMatrix>> {
        let mut x = Vec::with_capacity(obs.len() * self.net.input_size());
        for (o, &a) in obs.iter().zip(actions) {
            self.push_input(&mut x, o, a)?;
        }
        let out = self.net.forward_batch_with(self.net.params(), &x)?;
        out.chunks_exact(self.lanes * self.grids)
            .map(|c| StateMatrix::from_flat(self.lanes, self.grids, c.to_vec()))
            .collect()
    }

    pub fn loss_grad(&self, batch: &[&TransitionRecord], dp: &DistParams, kind: LossKind) -> Result<(f64, ParamVector)> {
        let mut x = Vec::with_capacity(batch.len() * self.net.input_size());
        for r in batch {
            self.push_input(&mut x, &r.o_t, r.a_t)?;
        }
        let per = self.lanes * self.grids;
        let scale = 1.0 / batch.len() as f64;
        let grids = self.grids;
        self.net.grad_with(self.net.params(), &x, |out, g| {
            let mut total = 0.0;
            for (k, r) in batch.iter().enumerate() {
                let span = k * per..(k + 1) * per;
                total += kind.eval(&out[span.clone()], &r.s_next.values, grids, dp, Some((&mut g[span], scale)));
            }
            total * scale
        })
    }

    fn step(&mut self, opt: &mut Adam, batch: &[&TransitionRecord], dp: &DistParams, kind: LossKind) -> Result<f64> {
        let (loss, grad) = self.loss_grad(batch, dp, kind)?;
        self.net = self.net.with_params(opt.step(self.net.params(), &grad)?)?;
        Ok(loss)
    }
}

/// Train on one city's log with `steps` minibatch updates.
pub fn train_on_city(model: &mut MonoModel, data: &TaskDataset, steps: usize, batch: usize, lr: f64, dp: &DistParams, kind: LossKind, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Adam::new(AdamConfig::with_lr(lr), model.net.num_params());
    for _ in 0..steps {
        let idx = sample(&mut rng, data.len(), batch.min(data.len()));
        let b: Vec<&TransitionRecord> = idx.iter().map(|i| &data.records[i]).collect();
        model.step(&mut opt, &b, dp, kind)?;
    }
    Ok(())
}

/// Greedy one-step planner over the eight phases.
pub struct MonoController {
    pub model: MonoModel,
    pub value: ValueParams,
    pub epsilon: f64,
    rng: ChaCha8Rng,
}

impl MonoController {
    pub fn new(model: MonoModel, value: ValueParams, epsilon: f64, seed: u64) -> MonoController {
        MonoController {
            model,
            value: ValueParams { horizon: 0, ..value },
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for MonoController {
    fn name(&self) -> String {
        "AMM_NON_MODULAR".into()
    }

    fn decide(&mut self, sim: &SimHandle, _interval: usize) -> Result<Vec<Phase>> {
        let n = sim.num_intersections();
        let obs = (0..n).map(|i| sim.observe(i, self.model.schema)).collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(n);
        let phases: Vec<Phase> = Phase::all().collect();
        for o in &obs {
            if self.epsilon > 0.0 && self.rng.gen::<f64>() < self.epsilon {
                out.push(phases[self.rng.gen_range(0..NUM_PHASES)]);
                continue;
            }
            let pred = self.model.predict_batch(&vec![o; NUM_PHASES], &phases)?;
            let scores = pred
                .into_iter()
                .map(|s| value(&[s], &self.value))
                .collect::<Result<Vec<f64>>>()?;
            out.push(phases[argmax_first(&scores).expect("eight phases")]);
        }
        Ok(out)
    }
}

/// Budgeted target training of the monolithic model, mirroring the modular
/// adaptation loop.
pub fn adapt_mono(model: &mut MonoModel, env: &mut CountedEnv, cfg: &AdaptConfig, seed: u64) -> Result<Vec<MetricsReport>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr), model.net.num_params());
    let mut records: Vec<TransitionRecord> = Vec::new();
    let mut metrics = Vec::new();
    let mut epsilon = cfg.epsilon;
    for episode in 0..cfg.target_episode_budget {
        let mut ctl = MonoController::new(model.clone(), cfg.value, epsilon, seed.wrapping_add(episode as u64));
        let out = env.run(&mut ctl, true)?;
        metrics.push(out.metrics);
        records.extend(out.records);
        let mut order: Vec<usize> = (0..records.len()).collect();
        for _ in 0..cfg.epochs_per_episode {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let b: Vec<&TransitionRecord> = chunk.iter().map(|&i| &records[i]).collect();
                model.step(&mut opt, &b, &cfg.dist, cfg.loss)?;
            }
        }
        epsilon *= cfg.epsilon_decay;
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_layers_transfer_across_schemas() {
        let a = MonoModel::new(Schema::A, 12, 12, &[8, 8], 1).unwrap();
        let mut c = MonoModel::new(Schema::C, 12, 12, &[8, 8], 2).unwrap();
        let first = param_count(&c.net.layer_sizes()[..2]);
        let before = c.net.params().0[..first].to_vec();
        c.inherit_trailing(&a).unwrap();
        assert_eq!(&c.net.params().0[..first], &before[..]);
        let a_first = param_count(&a.net.layer_sizes()[..2]);
        assert_eq!(&c.net.params().0[first..], &a.net.params().0[a_first..]);
    }

    #[test]
    fn mismatched_trailing_shapes_are_rejected() {
        let a = MonoModel::new(Schema::A, 12, 12, &[8], 1).unwrap();
        let mut c = MonoModel::new(Schema::C, 12, 12, &[16], 2).unwrap();
        assert!(c.inherit_trailing(&a).is_err());
    }
}
