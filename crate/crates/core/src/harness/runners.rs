//! Experiment runners: every study is a function of a config and its seeds.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, Resolved};
use super::nonmodular::{adapt_mono, train_on_city, MonoController, MonoModel};
use super::report::{mean_std, Expectation, RunReport, SeedRow, Summary};
use crate::amm::{DynModel, PolicyParams};
use crate::baselines::{ControllerKind, EpsilonMix};
use crate::error::{Error, Result};
use crate::meta::{
    adapt, collect_experience, dynamics_error, initial_repr, json_digest, maml_train_dynamics, observation_pairs,
    offline_train_repr, representation_error, run_episode, sequential_pretrain, AdaptConfig, AdaptOutcome, AmmController,
    Checkpoint, CountedEnv, Provenance, RunManifest, TaskDataset,
};
use crate::nn::param_count;
use crate::sim::{MetricsReport, Scenario, LANES_PER_INTERSECTION, NUM_PHASES};

/// Independent stream for `tag` under a run seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed.wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Source-city logs under max-pressure control with random phases mixed in.
pub fn collect_sources(cfg: &ExperimentConfig, sources: &[Scenario], seed: u64) -> Result<Vec<TaskDataset>> {
    sources
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let inner = cfg.controller_for(ControllerKind::MaxPressure).build(seed)?;
            let mut ctl = EpsilonMix::new(inner, cfg.behavior_epsilon, derive_seed(seed, 100 + k as u64));
            collect_experience(s, &mut ctl, cfg.source_episodes)
        })
        .collect()
}

/// How the dynamics initialisation is obtained from the sources.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pretraining {
    Maml,
    Sequential,
}

/// Dynamics initialisation from the source logs.
pub fn pretrain_dynamics(cfg: &ExperimentConfig, tasks: &[TaskDataset], grids: usize, how: Pretraining, seed: u64) -> Result<DynModel> {
    let g0 = DynModel::new(LANES_PER_INTERSECTION, grids, &cfg.dyn_hidden, derive_seed(seed, 1))?;
    let maml = crate::meta::MamlConfig {
        task_batch_size: cfg.maml.task_batch_size.min(tasks.len()),
        ..cfg.maml.clone()
    };
    match how {
        Pretraining::Maml => Ok(maml_train_dynamics(tasks, &maml, &g0, &cfg.adapt.dist, cfg.adapt.loss, derive_seed(seed, 2))?.0),
        Pretraining::Sequential => sequential_pretrain(tasks, &maml, &g0, &cfg.adapt.dist, cfg.adapt.loss, derive_seed(seed, 2)),
    }
}

/// Everything one modular adaptation run produced.
#[derive(Clone, Debug)]
pub struct AmmRun {
    pub phi: DynModel,
    pub adapted: AdaptOutcome,
    /// Greedy evaluation episode after adaptation.
    pub eval: MetricsReport,
    /// Target episodes consumed, read from the interaction counter.
    pub interactions: usize,
    /// Mean dist of one-step predictions on the held-out evaluation episode.
    pub dyn_err_phi: f64,
    pub dyn_err_adapted: f64,
    /// Mean dist of state estimates on the held-out evaluation episode.
    pub repr_err_initial: f64,
    pub repr_err_adapted: f64,
}

impl AmmRun {
    pub fn row(&self, label: &str, seed: u64) -> SeedRow {
        let mut extra = BTreeMap::new();
        extra.insert("dyn_err_phi".into(), self.dyn_err_phi);
        extra.insert("dyn_err_adapted".into(), self.dyn_err_adapted);
        extra.insert("repr_err_initial".into(), self.repr_err_initial);
        extra.insert("repr_err_adapted".into(), self.repr_err_adapted);
        SeedRow {
            label: label.into(),
            seed,
            metrics: self.eval,
            interactions: Some(self.interactions),
            extra,
        }
    }
}

/// Budgeted adaptation from `phi` on `target`, then one greedy held-out episode.
pub fn adapt_and_evaluate(phi: &DynModel, target: &Scenario, acfg: &AdaptConfig, seed: u64) -> Result<AmmRun> {
    let mut env = CountedEnv::new(target.clone());
    let adapt_seed = derive_seed(seed, 3);
    let adapted = adapt(phi, &mut env, acfg, target.schema, adapt_seed)?;
    let interactions = env.interactions();
    if interactions != acfg.target_episode_budget {
        return Err(Error::config(
            "adapt.target_episode_budget",
            format!("adaptation consumed {interactions} episodes, budget is {}", acfg.target_episode_budget),
        ));
    }
    let mut ctl = AmmController::new(adapted.f.clone(), adapted.g.clone(), acfg.value, PolicyParams::greedy(), derive_seed(seed, 4))?;
    let held_out = run_episode(target, &mut ctl, true)?;
    let f0 = initial_repr(target.schema, phi, acfg, adapt_seed)?;
    Ok(AmmRun {
        dyn_err_phi: dynamics_error(phi, &held_out.records, &acfg.dist)?,
        dyn_err_adapted: dynamics_error(&adapted.g, &held_out.records, &acfg.dist)?,
        repr_err_initial: representation_error(&f0, &held_out.records, &acfg.dist)?,
        repr_err_adapted: representation_error(&adapted.f, &held_out.records, &acfg.dist)?,
        phi: phi.clone(),
        adapted,
        eval: held_out.metrics,
        interactions,
    })
}

fn baseline_row(cfg: &ExperimentConfig, kind: ControllerKind, label: &str, target: &Scenario, seed: u64) -> Result<SeedRow> {
    let mut ctl = cfg.controller_for(kind).build(derive_seed(seed, 5))?;
    Ok(SeedRow {
        label: label.into(),
        seed,
        metrics: run_episode(target, ctl.as_mut(), false)?.metrics,
        interactions: None,
        extra: BTreeMap::new(),
    })
}

fn nonmodular_row(cfg: &ExperimentConfig, r: &Resolved, tasks: &[TaskDataset], seed: u64) -> Result<SeedRow> {
    let grids = r.target.network.state_grids;
    let steps = (cfg.maml.meta_iterations * cfg.maml.task_batch_size.min(tasks.len())).div_ceil(tasks.len()).max(1);
    let mut prev: Option<MonoModel> = None;
    for (k, (task, scen)) in tasks.iter().zip(&r.sources).enumerate() {
        let mut m = MonoModel::new(scen.schema, LANES_PER_INTERSECTION, grids, &cfg.dyn_hidden, derive_seed(seed, 10 + k as u64))?;
        if let Some(p) = &prev {
            m.inherit_trailing(p)?;
        }
        train_on_city(&mut m, task, steps, cfg.maml.batch_size, cfg.maml.outer_lr, &cfg.adapt.dist, cfg.adapt.loss, derive_seed(seed, 20 + k as u64))?;
        prev = Some(m);
    }
    let mut m = MonoModel::new(r.target.schema, LANES_PER_INTERSECTION, grids, &cfg.dyn_hidden, derive_seed(seed, 30))?;
    if let Some(p) = &prev {
        m.inherit_trailing(p)?;
    }
    let mut env = CountedEnv::new(r.target.clone());
    adapt_mono(&mut m, &mut env, &cfg.adapt, derive_seed(seed, 3))?;
    let interactions = env.interactions();
    let mut ctl = MonoController::new(m, cfg.adapt.value, 0.0, derive_seed(seed, 4));
    Ok(SeedRow {
        label: Method::AmmNonModular.name().into(),
        seed,
        metrics: run_episode(&r.target, &mut ctl, false)?.metrics,
        interactions: Some(interactions),
        extra: BTreeMap::new(),
    })
}

/// One row of `method` under `seed`; learned methods reuse `tasks` when given.
fn method_row(cfg: &ExperimentConfig, r: &Resolved, method: Method, seed: u64, tasks: Option<&[TaskDataset]>) -> Result<(SeedRow, Option<AmmRun>)> {
    if let Some(kind) = method.controller_kind() {
        return Ok((baseline_row(cfg, kind, method.name(), &r.target, seed)?, None));
    }
    let owned;
    let tasks = match tasks {
        Some(t) => t,
        None => {
            owned = collect_sources(cfg, &r.sources, seed)?;
            &owned
        }
    };
    let grids = r.target.network.state_grids;
    match method {
        Method::AmmNonModular => Ok((nonmodular_row(cfg, r, tasks, seed)?, None)),
        _ => {
            let how = if method == Method::Amm { Pretraining::Maml } else { Pretraining::Sequential };
            let phi = pretrain_dynamics(cfg, tasks, grids, how, seed)?;
            let run = adapt_and_evaluate(&phi, &r.target, &cfg.adapt, seed)?;
            Ok((run.row(method.name(), seed), Some(run)))
        }
    }
}

fn checkpoint(cfg: &ExperimentConfig, r: &Resolved, run: &AmmRun, seed: u64, adapted: bool) -> Checkpoint {
    Checkpoint {
        repr: adapted.then(|| run.adapted.f.clone()),
        dynamics: if adapted { run.adapted.g.clone() } else { run.phi.clone() },
        value_params: cfg.adapt.value,
        dist_params: cfg.adapt.dist,
        policy_params: PolicyParams::greedy(),
        provenance: Provenance {
            source_cities: r.sources.iter().map(|s| s.name.clone()).collect(),
            meta_iters: cfg.maml.meta_iterations,
            seed,
        },
    }
}

fn write_manifest(cfg: &ExperimentConfig, r: &Resolved, command: &str, dir: &Path, outputs: Vec<String>) -> Result<()> {
    let mut m = RunManifest::new(command, cfg, &cfg.seeds)?;
    for s in r.sources.iter().chain(std::iter::once(&r.target)) {
        m.add_input(format!("scenario:{}", s.name), &serde_json::to_vec(s)?);
    }
    if let Some(p) = &cfg.offline.log_path {
        if p.exists() {
            m.add_input_file(p)?;
        }
    }
    m.outputs = outputs;
    m.save(&dir.join("manifest.json"))
}

/// The configured method on the target, once per seed.
pub fn run_main(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<RunReport> {
    let start = Instant::now();
    let r = cfg.resolve(base)?;
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    let mut checkpoints = Vec::new();
    for &seed in &cfg.seeds {
        let (row, run) = method_row(cfg, &r, cfg.method, seed, None)?;
        rows.push(row);
        if let Some(run) = run {
            checkpoints.push((seed, checkpoint(cfg, &r, &run, seed, false), checkpoint(cfg, &r, &run, seed, true)));
        }
    }
    let report = RunReport::new("main", &r.target.name, rows, json_digest(cfg)?, start.elapsed().as_secs_f64());
    if let Some(dir) = &cfg.out_dir {
        report.write(dir, "main")?;
        let mut outputs = vec!["main.csv".to_string(), "main.json".to_string()];
        for (seed, phi, adapted) in &checkpoints {
            phi.save(&dir.join(format!("phi_seed{seed}.json")))?;
            adapted.save(&dir.join(format!("adapted_seed{seed}.json")))?;
            outputs.push(format!("phi_seed{seed}.json"));
            outputs.push(format!("adapted_seed{seed}.json"));
        }
        write_manifest(cfg, &r, "main", dir, outputs)?;
    }
    Ok(report)
}

/// Paired comparison of the modular method against its two ablations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub report: RunReport,
    /// Directional claims; informational only.
    pub expectations: Vec<Expectation>,
}

pub fn run_ablation(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<AblationReport> {
    let start = Instant::now();
    let learned = ExperimentConfig {
        method: Method::Amm,
        ..cfg.clone()
    };
    let r = learned.resolve(base)?;
    let variants = [Method::Amm, Method::AmmNonModular, Method::AmmSeqPretrain];
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let tasks = collect_sources(cfg, &r.sources, seed)?;
        for m in variants {
            rows.push(method_row(cfg, &r, m, seed, Some(&tasks))?.0);
        }
    }
    let report = RunReport::new("ablation", &r.target.name, rows, json_digest(cfg)?, start.elapsed().as_secs_f64());
    let tt = |m: Method| report.mean_travel_time(m.name()).unwrap_or(f64::NAN);
    let expectations = vec![
        Expectation::at_most("modular <= non-modular travel time", tt(Method::Amm), tt(Method::AmmNonModular)),
        Expectation::at_most("meta-learned <= sequential pretraining travel time", tt(Method::Amm), tt(Method::AmmSeqPretrain)),
    ];
    let out = AblationReport { report, expectations };
    if let Some(dir) = &cfg.out_dir {
        out.report.write(dir, "ablation")?;
        std::fs::write(dir.join("ablation_expectations.json"), serde_json::to_string_pretty(&out.expectations)?)?;
        write_manifest(cfg, &r, "ablation", dir, vec!["ablation.csv".into(), "ablation.json".into()])?;
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepEntry {
    pub width: usize,
    pub depth: usize,
    pub dyn_params: usize,
    pub repr_params: usize,
    pub report: RunReport,
    /// Every training loss and metric stayed finite.
    pub finite: bool,
}

impl SweepEntry {
    pub fn total_params(&self) -> usize {
        self.dyn_params + self.repr_params
    }
}

/// Hidden layer list of `depth` layers of `width` units.
pub fn architecture(width: usize, depth: usize) -> Vec<usize> {
    vec![width; depth]
}

/// The modular method once per architecture of the grid.
pub fn run_complexity_sweep(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<Vec<SweepEntry>> {
    if cfg.sweep.widths.is_empty() || cfg.sweep.depths.is_empty() {
        return Err(Error::config("sweep", "widths and depths must be nonempty"));
    }
    if cfg.sweep.widths.contains(&0) || cfg.sweep.depths.contains(&0) {
        return Err(Error::config("sweep", "widths and depths must be positive"));
    }
    let r = ExperimentConfig {
        method: Method::Amm,
        ..cfg.clone()
    }
    .resolve(base)?;
    let grids = r.target.network.state_grids;
    let mut entries = Vec::new();
    for &depth in &cfg.sweep.depths {
        for &width in &cfg.sweep.widths {
            let hidden = architecture(width, depth);
            let mut sub = cfg.clone();
            sub.method = Method::Amm;
            sub.out_dir = None;
            sub.dyn_hidden = hidden.clone();
            sub.adapt.repr_hidden = hidden.clone();
            let start = Instant::now();
            let mut rows = Vec::new();
            let mut finite = true;
            for &seed in &cfg.seeds {
                let (row, run) = method_row(&sub, &r, Method::Amm, seed, None)?;
                if let Some(run) = run {
                    finite &= run.adapted.losses.iter().all(|l| l.is_finite());
                }
                finite &= row.metrics.avg_travel_time_s.is_finite() && row.metrics.avg_queue_length.is_finite();
                rows.push(row);
            }
            let mut dyn_sizes = vec![LANES_PER_INTERSECTION * grids + NUM_PHASES];
            dyn_sizes.extend(&hidden);
            dyn_sizes.push(LANES_PER_INTERSECTION * grids);
            let mut repr_sizes = vec![r.target.schema.dims()];
            repr_sizes.extend(&hidden);
            repr_sizes.push(grids);
            entries.push(SweepEntry {
                width,
                depth,
                dyn_params: param_count(&dyn_sizes),
                repr_params: param_count(&repr_sizes),
                report: RunReport::new(&format!("sweep w{width} d{depth}"), &r.target.name, rows, json_digest(&sub)?, start.elapsed().as_secs_f64()),
                finite,
            });
        }
    }
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.csv"), sweep_csv(&entries)?)?;
        std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&entries)?)?;
        write_manifest(cfg, &r, "sweep", dir, vec!["sweep.csv".into(), "sweep.json".into()])?;
    }
    Ok(entries)
}

pub fn sweep_csv(entries: &[SweepEntry]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["width", "depth", "params", "travel_time_mean", "travel_time_std", "queue_mean", "queue_std"])?;
    for e in entries {
        let s = &e.report.summaries[0];
        w.write_record([
            e.width.to_string(),
            e.depth.to_string(),
            e.total_params().to_string(),
            format!("{:.4}", s.mean.avg_travel_time_s),
            format!("{:.4}", s.std.avg_travel_time_s),
            format!("{:.4}", s.mean.avg_queue_length),
            format!("{:.4}", s.std.avg_queue_length),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
}

/// Single-source transfer results for every ordered pair of distinct cities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SourceMatrix {
    pub cities: Vec<String>,
    /// Off-diagonal cells only.
    pub cells: Vec<MatrixCell>,
    /// Fixed-time mean travel time on each city, in `cities` order.
    pub fixed_time: Vec<f64>,
    pub expectations: Vec<Expectation>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixCell {
    pub source: String,
    pub target: String,
    pub summary: Summary,
    pub rows: Vec<SeedRow>,
}

impl SourceMatrix {
    pub fn cell(&self, source: &str, target: &str) -> Option<&MatrixCell> {
        self.cells.iter().find(|c| c.source == source && c.target == target)
    }

    /// Travel-time matrix, sources as rows; the diagonal reads "/".
    pub fn table(&self) -> String {
        let mut out = format!("{:<12}", "source\\target");
        for c in &self.cities {
            out.push_str(&format!(" {c:>18}"));
        }
        out.push('\n');
        for s in &self.cities {
            out.push_str(&format!("{s:<12}"));
            for t in &self.cities {
                let cell = match self.cell(s, t) {
                    Some(c) => format!("{:.2} ± {:.2}", c.summary.mean.avg_travel_time_s, c.summary.std.avg_travel_time_s),
                    None => "/".to_string(),
                };
                out.push_str(&format!(" {cell:>18}"));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:<12}", "FIXED_TIME"));
        for v in &self.fixed_time {
            out.push_str(&format!(" {:>18}", format!("{v:.2}")));
        }
        out.push('\n');
        out
    }

    /// Matrix as CSV; diagonal cells hold "/".
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["source".to_string()];
        header.extend(self.cities.iter().cloned());
        w.write_record(&header)?;
        for s in &self.cities {
            let mut rec = vec![s.clone()];
            for t in &self.cities {
                rec.push(self.cell(s, t).map_or("/".to_string(), |c| format!("{:.4}", c.summary.mean.avg_travel_time_s)));
            }
            w.write_record(&rec)?;
        }
        let mut rec = vec!["FIXED_TIME".to_string()];
        rec.extend(self.fixed_time.iter().map(|v| format!("{v:.4}")));
        w.write_record(&rec)?;
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
    }
}

/// Cities of the matrix: the sources followed by the target, without repeats.
fn matrix_cities(r: &Resolved) -> Vec<Scenario> {
    let mut cities: Vec<Scenario> = Vec::new();
    for s in r.sources.iter().chain(std::iter::once(&r.target)) {
        if !cities.iter().any(|c| c.name == s.name) {
            cities.push(s.clone());
        }
    }
    cities
}

pub fn run_source_selection(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<SourceMatrix> {
    let r = ExperimentConfig {
        method: Method::Amm,
        ..cfg.clone()
    }
    .resolve(base)?;
    let cities = matrix_cities(&r);
    if cities.len() < 2 {
        return Err(Error::config("sources", "the source matrix needs at least two distinct cities"));
    }
    let grids = r.target.network.state_grids;
    let mut cell_rows: BTreeMap<(usize, usize), Vec<SeedRow>> = BTreeMap::new();
    let mut fixed: Vec<Vec<f64>> = vec![Vec::new(); cities.len()];
    for &seed in &cfg.seeds {
        let logs = collect_sources(cfg, &cities, seed)?;
        for (ti, target) in cities.iter().enumerate() {
            fixed[ti].push(baseline_row(cfg, ControllerKind::FixedTime, "FIXED_TIME", target, seed)?.metrics.avg_travel_time_s);
            for (si, log) in logs.iter().enumerate() {
                if si == ti {
                    continue;
                }
                let phi = pretrain_dynamics(cfg, std::slice::from_ref(log), grids, Pretraining::Maml, seed)?;
                let run = adapt_and_evaluate(&phi, target, &cfg.adapt, seed)?;
                cell_rows.entry((si, ti)).or_default().push(run.row(&cities[si].name, seed));
            }
        }
    }
    let fixed_time: Vec<f64> = fixed.iter().map(|v| mean_std(v).0).collect();
    let mut cells = Vec::new();
    let mut expectations = Vec::new();
    for ((si, ti), rows) in cell_rows {
        let report = RunReport::new("cell", &cities[ti].name, rows, String::new(), 0.0);
        let summary = report.summaries[0].clone();
        expectations.push(Expectation::at_most(
            format!("{} -> {} beats fixed time", cities[si].name, cities[ti].name),
            summary.mean.avg_travel_time_s,
            fixed_time[ti],
        ));
        cells.push(MatrixCell {
            source: cities[si].name.clone(),
            target: cities[ti].name.clone(),
            summary,
            rows: report.rows,
        });
    }
    let out = SourceMatrix {
        cities: cities.iter().map(|c| c.name.clone()).collect(),
        cells,
        fixed_time,
        expectations,
    };
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("source_matrix.csv"), out.to_csv()?)?;
        std::fs::write(dir.join("source_matrix.json"), serde_json::to_string_pretty(&out)?)?;
        write_manifest(cfg, &r, "source-matrix", dir, vec!["source_matrix.csv".into(), "source_matrix.json".into()])?;
    }
    Ok(out)
}

/// Online adaptation, offline-trained representation and fixed time side by side.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OfflineReport {
    pub report: RunReport,
    /// Target episodes the offline training consumed (always zero).
    pub offline_interactions: usize,
    pub expectations: Vec<Expectation>,
}

/// The `(o, s)` log of the offline case: read from `offline.log_path` when it
/// exists, otherwise generated under fixed-time control.
pub fn offline_log(cfg: &ExperimentConfig, target: &Scenario) -> Result<TaskDataset> {
    if let Some(p) = &cfg.offline.log_path {
        if p.exists() {
            let log = TaskDataset::load_jsonl(p)?;
            if log.schema != target.schema {
                return Err(Error::config("offline.log_path", "log schema differs from the target's"));
            }
            return Ok(log);
        }
        if !cfg.offline.generate {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("offline log {} does not exist and generation is disabled", p.display()),
            )));
        }
    }
    let mut ft = cfg.controller_for(ControllerKind::FixedTime).build(0)?;
    let log = collect_experience(target, ft.as_mut(), cfg.offline.log_episodes)?;
    if let Some(p) = &cfg.offline.log_path {
        log.save_jsonl(p)?;
    }
    Ok(log)
}

pub fn run_offline_case(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<OfflineReport> {
    let start = Instant::now();
    let r = ExperimentConfig {
        method: Method::Amm,
        ..cfg.clone()
    }
    .resolve(base)?;
    let log = offline_log(cfg, &r.target)?;
    let pairs = observation_pairs(&log.records);
    let grids = r.target.network.state_grids;
    let mut rows = Vec::new();
    let mut offline_interactions = 0;
    for &seed in &cfg.seeds {
        let tasks = collect_sources(cfg, &r.sources, seed)?;
        let phi = pretrain_dynamics(cfg, &tasks, grids, Pretraining::Maml, seed)?;
        let run = adapt_and_evaluate(&phi, &r.target, &cfg.adapt, seed)?;
        rows.push(run.row("AMM", seed));

        let env = CountedEnv::new(r.target.clone());
        let before = env.interactions();
        let f = offline_train_repr(&pairs, r.target.schema, cfg.offline.epochs, cfg.offline.lr, &cfg.adapt, derive_seed(seed, 6))?;
        offline_interactions += env.interactions() - before;
        let mut ctl = AmmController::new(f, run.adapted.g.clone(), cfg.adapt.value, PolicyParams::greedy(), derive_seed(seed, 4))?;
        let metrics = run_episode(&r.target, &mut ctl, false)?.metrics;
        rows.push(SeedRow {
            label: "AMM_OFFLINE".into(),
            seed,
            metrics,
            interactions: Some(run.interactions),
            extra: BTreeMap::new(),
        });
        rows.push(baseline_row(cfg, ControllerKind::FixedTime, "FIXED_TIME", &r.target, seed)?);
    }
    let report = RunReport::new("offline", &r.target.name, rows, json_digest(cfg)?, start.elapsed().as_secs_f64());
    let tt = |l: &str| report.mean_travel_time(l).unwrap_or(f64::NAN);
    let expectations = vec![Expectation::at_most("offline AMM beats fixed time", tt("AMM_OFFLINE"), tt("FIXED_TIME"))];
    let out = OfflineReport {
        report,
        offline_interactions,
        expectations,
    };
    if let Some(dir) = &cfg.out_dir {
        out.report.write(dir, "offline")?;
        write_manifest(cfg, &r, "offline", dir, vec!["offline.csv".into(), "offline.json".into()])?;
    }
    Ok(out)
}

/// Budget of `fraction` of `full` episodes, rounded up.
pub fn budget_for(fraction: f64, full: usize) -> usize {
    ((fraction * full as f64) - 1e-9).ceil().max(1.0) as usize
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub budget: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub interactions: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveReport {
    pub points: Vec<CurvePoint>,
    pub expectations: Vec<Expectation>,
}

impl CurveReport {
    pub fn mean_travel_time(&self, fraction: f64) -> f64 {
        let v: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.fraction == fraction)
            .map(|p| p.metrics.avg_travel_time_s)
            .collect();
        mean_std(&v).0
    }

    /// `fraction,seed,travel_time,queue_length`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fraction", "seed", "travel_time", "queue_length"])?;
        for p in &self.points {
            w.write_record([
                format!("{}", p.fraction),
                p.seed.to_string(),
                format!("{:.4}", p.metrics.avg_travel_time_s),
                format!("{:.4}", p.metrics.avg_queue_length),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
    }
}

/// Adaptation at each budget fraction; the dynamics initialisation is shared
/// across fractions of one seed.
pub fn data_volume_curve(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<CurveReport> {
    let r = ExperimentConfig {
        method: Method::Amm,
        ..cfg.clone()
    }
    .resolve(base)?;
    if cfg.curve_fractions.is_empty() {
        return Err(Error::config("curve_fractions", "need at least one fraction"));
    }
    let grids = r.target.network.state_grids;
    let mut points = Vec::new();
    for &seed in &cfg.seeds {
        let tasks = collect_sources(cfg, &r.sources, seed)?;
        let phi = pretrain_dynamics(cfg, &tasks, grids, Pretraining::Maml, seed)?;
        for &fraction in &cfg.curve_fractions {
            let acfg = AdaptConfig {
                target_episode_budget: budget_for(fraction, cfg.curve_full_budget),
                ..cfg.adapt.clone()
            };
            let run = adapt_and_evaluate(&phi, &r.target, &acfg, seed)?;
            points.push(CurvePoint {
                fraction,
                budget: acfg.target_episode_budget,
                seed,
                metrics: run.eval,
                interactions: run.interactions,
            });
        }
    }
    let mut report = CurveReport {
        points,
        expectations: Vec::new(),
    };
    let lo = cfg.curve_fractions.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cfg.curve_fractions.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    report.expectations.push(Expectation::at_most(
        format!("travel time at {hi} <= travel time at {lo}"),
        report.mean_travel_time(hi),
        report.mean_travel_time(lo),
    ));
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("curve.csv"), report.to_csv()?)?;
        std::fs::write(dir.join("curve.json"), serde_json::to_string_pretty(&report)?)?;
        write_manifest(cfg, &r, "curve", dir, vec!["curve.csv".into(), "curve.json".into()])?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budgets_round_up() {
        let b: Vec<usize> = [0.25, 0.5, 1.0].iter().map(|&f| budget_for(f, 10)).collect();
        assert_eq!(b, vec![3, 5, 10]);
        assert_eq!(budget_for(0.3, 10), 3);
        assert_eq!(budget_for(0.01, 10), 1);
    }

    #[test]
    fn derived_seeds_differ_by_tag() {
        assert_ne!(derive_seed(0, 1), derive_seed(0, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(0, 1));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }

    #[test]
    fn fixed_time_rows_are_identical_across_seeds() {
        let cfg = ExperimentConfig {
            method: Method::FixedTime,
            ..Default::default()
        };
        let rep = run_main(&cfg, None).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert_eq!(rep.summaries[0].std.avg_travel_time_s, 0.0);
        assert_eq!(rep.summaries[0].std.avg_queue_length, 0.0);
    }
}
