//! Model-agnostic meta-learning over per-city tasks.
//!
//! Each meta-iteration samples a batch of tasks. For every task a minibatch
//! is drawn and split into support and query halves; the support half gives
//! adapted parameters `theta_i = theta - alpha * grad L_support(theta)` and
//! the query loss at `theta_i` drives the outer update. First-order mode uses
//! `grad L_query(theta_i)` as the outer gradient; the exact mode
//! differentiates through the inner step with central differences and is
//! only practical for small parameter counts.

use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{transition, TaskDataset};
use crate::amm::{DistParams, DynModel, LossKind, Transition};
use crate::error::{Error, Result};
use crate::nn::{sgd_step, Adam, AdamConfig, ParamVector};

/// A family of tasks sharing one parameter vector.
pub trait MetaObjective {
    fn num_tasks(&self) -> usize;

    fn task_len(&self, task: usize) -> usize;

    /// Loss and gradient of `task` restricted to sample indices `idx`.
    fn loss_grad(&self, task: usize, idx: &[usize], params: &ParamVector) -> Result<(f64, ParamVector)>;

    fn loss(&self, task: usize, idx: &[usize], params: &ParamVector) -> Result<f64> {
        Ok(self.loss_grad(task, idx, params)?.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterOptimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MamlConfig {
    /// Inner step size (alpha).
    pub inner_lr: f64,
    /// Outer step size (beta of the meta-update).
    pub outer_lr: f64,
    pub meta_iterations: usize,
    pub task_batch_size: usize,
    pub inner_steps: usize,
    pub first_order: bool,
    /// Samples drawn per task per iteration, split between support and query.
    pub batch_size: usize,
    pub outer_optimizer: OuterOptimizer,
}

impl Default for MamlConfig {
    fn default() -> Self {
        MamlConfig {
            inner_lr: 1e-4,
            outer_lr: 3e-3,
            meta_iterations: 3000,
            task_batch_size: 2,
            inner_steps: 1,
            first_order: true,
            batch_size: 64,
            outer_optimizer: OuterOptimizer::Adam,
        }
    }
}

impl MamlConfig {
    pub fn validate(&self, num_tasks: usize) -> Result<()> {
        if num_tasks == 0 {
            return Err(Error::config("tasks", "need at least one task"));
        }
        if !(self.inner_lr >= 0.0) || !(self.outer_lr >= 0.0) {
            return Err(Error::config("maml.inner_lr", "step sizes must be nonnegative"));
        }
        if self.task_batch_size == 0 || self.task_batch_size > num_tasks {
            return Err(Error::config(
                "maml.task_batch_size",
                format!("must lie in [1, {num_tasks}] (number of source tasks)"),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("maml.batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MamlOutcome {
    pub params: ParamVector,
    /// Mean query loss of the sampled tasks at each iteration.
    pub query_losses: Vec<f64>,
}

fn split_batch(idx: &[usize], support_fraction: f64) -> (&[usize], &[usize]) {
    if idx.len() < 2 {
        return (idx, idx);
    }
    let k = ((idx.len() as f64 * support_fraction).round() as usize).clamp(1, idx.len() - 1);
    idx.split_at(k)
}

fn inner_adapt<O: MetaObjective + ?Sized>(
    obj: &O,
    task: usize,
    support: &[usize],
    theta: &ParamVector,
    cfg: &MamlConfig,
) -> Result<ParamVector> {
    let mut adapted = theta.clone();
    for _ in 0..cfg.inner_steps {
        let (_, g) = obj.loss_grad(task, support, &adapted)?;
        adapted = sgd_step(&adapted, &g, cfg.inner_lr)?;
    }
    Ok(adapted)
}

/// Outer gradient through the inner update, by central differences on theta.
fn exact_outer_grad<O: MetaObjective + ?Sized>(
    obj: &O,
    task: usize,
    support: &[usize],
    query: &[usize],
    theta: &ParamVector,
    cfg: &MamlConfig,
) -> Result<ParamVector> {
    let h = 1e-6;
    let mut grad = ParamVector::zeros(theta.len());
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        let orig = probe.0[i];
        probe.0[i] = orig + h;
        let up = obj.loss(task, query, &inner_adapt(obj, task, support, &probe, cfg)?)?;
        probe.0[i] = orig - h;
        let down = obj.loss(task, query, &inner_adapt(obj, task, support, &probe, cfg)?)?;
        probe.0[i] = orig;
        grad.0[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Meta-train `theta0` over the tasks of `obj`; returns the initialisation phi.
pub fn maml_train<O: MetaObjective + ?Sized>(
    obj: &O,
    cfg: &MamlConfig,
    theta0: &ParamVector,
    support_fraction: f64,
    seed: u64,
) -> Result<MamlOutcome> {
    cfg.validate(obj.num_tasks())?;
    for t in 0..obj.num_tasks() {
        if obj.task_len(t) == 0 {
            return Err(Error::config("tasks", format!("task {t} is empty")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = theta0.clone();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.outer_lr), theta.len());
    let mut query_losses = Vec::with_capacity(cfg.meta_iterations);
    for _ in 0..cfg.meta_iterations {
        let mut tasks = sample(&mut rng, obj.num_tasks(), cfg.task_batch_size).into_vec();
        tasks.sort_unstable();
        let mut outer = ParamVector::zeros(theta.len());
        let mut loss_sum = 0.0;
        for &task in &tasks {
            let n = obj.task_len(task);
            let idx: Vec<usize> = if cfg.batch_size >= n {
                let mut all: Vec<usize> = (0..n).collect();
                all.shuffle(&mut rng);
                all
            } else {
                sample(&mut rng, n, cfg.batch_size).into_vec()
            };
            let (support, query) = split_batch(&idx, support_fraction);
            let adapted = inner_adapt(obj, task, support, &theta, cfg)?;
            let (qloss, qgrad) = obj.loss_grad(task, query, &adapted)?;
            loss_sum += qloss;
            let g = if cfg.first_order {
                qgrad
            } else {
                exact_outer_grad(obj, task, support, query, &theta, cfg)?
            };
            outer.axpy(1.0, &g)?;
        }
        query_losses.push(loss_sum / tasks.len() as f64);
        theta = match cfg.outer_optimizer {
            OuterOptimizer::Sgd => sgd_step(&theta, &outer, cfg.outer_lr)?,
            OuterOptimizer::Adam => adam.step(&theta, &outer)?,
        };
        if !theta.is_finite() {
            return Err(Error::config("maml.outer_lr", "meta-training diverged to non-finite parameters"));
        }
    }
    Ok(MamlOutcome {
        params: theta,
        query_losses,
    })
}

/// Dynamics-model objective: one task per city dataset.
pub struct DynamicsObjective<'a> {
    pub model: &'a DynModel,
    pub tasks: &'a [TaskDataset],
    pub dist: DistParams,
    pub loss: LossKind,
}

impl MetaObjective for DynamicsObjective<'_> {
    fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    fn task_len(&self, task: usize) -> usize {
        self.tasks[task].len()
    }

    fn loss_grad(&self, task: usize, idx: &[usize], params: &ParamVector) -> Result<(f64, ParamVector)> {
        let recs = &self.tasks[task].records;
        let batch: Vec<Transition<'_>> = idx.iter().map(|&i| transition(&recs[i])).collect();
        self.model.loss_grad(params, &batch, &self.dist, self.loss)
    }
}

/// Meta-train the dynamics model `g0` over city datasets.
pub fn maml_train_dynamics(
    tasks: &[TaskDataset],
    cfg: &MamlConfig,
    g0: &DynModel,
    dist: &DistParams,
    loss: LossKind,
    seed: u64,
) -> Result<(DynModel, Vec<f64>)> {
    for t in tasks {
        t.validate()?;
        let r = &t.records[0];
        if r.s_t.lanes != g0.lanes || r.s_t.grids != g0.grids {
            return Err(Error::config(
                "dynamics",
                format!("records of `{}` are {}x{}, model expects {}x{}", t.city_id, r.s_t.lanes, r.s_t.grids, g0.lanes, g0.grids),
            ));
        }
    }
    let support = tasks.first().map_or(0.5, |t| t.support_fraction);
    let obj = DynamicsObjective {
        model: g0,
        tasks,
        dist: *dist,
        loss,
    };
    let out = maml_train(&obj, cfg, g0.params(), support, seed)?;
    Ok((g0.with_params(out.params)?, out.query_losses))
}

/// Plain multi-city pretraining: gradient descent on each city in turn with
/// the same number of gradient evaluations as meta-training would use.
pub fn sequential_pretrain(
    tasks: &[TaskDataset],
    cfg: &MamlConfig,
    g0: &DynModel,
    dist: &DistParams,
    loss: LossKind,
    seed: u64,
) -> Result<DynModel> {
    cfg.validate(tasks.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = g0.params().clone();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.outer_lr), theta.len());
    let per_city = (cfg.meta_iterations * cfg.task_batch_size).div_ceil(tasks.len()).max(1);
    for task in tasks {
        let trans = task.transitions();
        for _ in 0..per_city {
            let idx = sample(&mut rng, trans.len(), cfg.batch_size.min(trans.len()));
            let batch: Vec<Transition<'_>> = idx.iter().map(|i| trans[i]).collect();
            let (_, g) = g0.loss_grad(&theta, &batch, dist, loss)?;
            theta = match cfg.outer_optimizer {
                OuterOptimizer::Sgd => sgd_step(&theta, &g, cfg.outer_lr)?,
                OuterOptimizer::Adam => adam.step(&theta, &g)?,
            };
        }
    }
    g0.with_params(theta)
}
