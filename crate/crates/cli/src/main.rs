use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use amm_core::amm::PolicyParams;
use amm_core::baselines::{ControllerKind, EpsilonMix};
use amm_core::harness::{
    adapt_and_evaluate, collect_sources, data_volume_curve, pretrain_dynamics, run_ablation, run_complexity_sweep,
    run_main, run_offline_case, run_source_selection, sweep_csv, CityRef, ExperimentConfig, Method, Pretraining,
};
use amm_core::meta::{collect_experience, run_episode, AmmController, Checkpoint, Provenance, RunManifest};
use amm_core::sim::Scenario;
use amm_core::{Error, Result};

/// Traffic-signal control with modular model-based meta-learning.
#[derive(Parser, Debug)]
#[command(name = "amm", version)]
struct Cli {
    /// Experiment configuration (JSON); defaults to the built-in desk setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run with this single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one episode of a city under a classical controller.
    Simulate {
        /// Built-in city name or scenario file; defaults to the configured target.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value = "FIXED_TIME")]
        controller: String,
    },
    /// Log transitions of a city under a classical controller as JSONL.
    Collect {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value = "MAX_PRESSURE")]
        controller: String,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Probability of replacing each decision with a random phase.
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
    },
    /// Meta-train the dynamics module on the source cities.
    MetaTrain,
    /// Adapt a meta-trained checkpoint to the target city.
    Adapt {
        #[arg(long)]
        phi: PathBuf,
    },
    /// Evaluate an adapted checkpoint, or run the full pipeline of a method, on the target city.
    Evaluate {
        #[arg(long, conflicts_with = "method")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
    },
    /// Compare the modular method with its non-modular and sequential ablations.
    Ablation,
    /// Repeat the main run over a grid of network widths and depths.
    Sweep,
    /// Single-source transfer for every ordered pair of cities.
    SourceMatrix,
    /// Representation trained on a fixed-time log only.
    Offline,
    /// Travel time against the adaptation budget.
    Curve,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<(ExperimentConfig, Option<PathBuf>)> {
    let (mut cfg, base) = match &cli.config {
        Some(p) => (
            ExperimentConfig::load(p).map_err(|e| match e {
                Error::Io(io) => Error::config("--config", format!("{}: {io}", p.display())),
                other => other,
            })?,
            p.parent().map(Path::to_path_buf),
        ),
        None => (ExperimentConfig::default(), None),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = Some(o.clone());
    }
    Ok((cfg, base))
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn controller_kind(name: &str) -> Result<ControllerKind> {
    name.parse::<Method>()?
        .controller_kind()
        .ok_or_else(|| Error::config("controller", format!("`{name}` is not a classical controller")))
}

fn city(name: Option<&String>, cfg: &ExperimentConfig, base: Option<&Path>) -> Result<Scenario> {
    match name {
        Some(n) => CityRef::Named(n.clone()).resolve(base),
        None => cfg.target.resolve(base),
    }
}

fn first_seed(cfg: &ExperimentConfig) -> Result<u64> {
    cfg.seeds.first().copied().ok_or_else(|| Error::config("seeds", "need at least one seed"))
}

fn run(cli: Cli) -> Result<()> {
    let (cfg, base) = load_config(&cli)?;
    let base = base.as_deref();
    match &cli.command {
        Command::Simulate { scenario, controller } => {
            let s = city(scenario.as_ref(), &cfg, base)?;
            let seed = first_seed(&cfg)?;
            let mut ctl = cfg.controller_for(controller_kind(controller)?).build(seed)?;
            let out = run_episode(&s, ctl.as_mut(), false)?;
            let doc = serde_json::json!({
                "scenario": s.name,
                "controller": controller,
                "metrics": out.metrics,
                "final_digest": out.final_digest,
            });
            if let Some(dir) = &cfg.out_dir {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("simulate.json"), serde_json::to_string_pretty(&doc)?)?;
            }
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
        Command::Collect {
            scenario,
            controller,
            episodes,
            epsilon,
        } => {
            let s = city(scenario.as_ref(), &cfg, base)?;
            if !(0.0..=1.0).contains(epsilon) {
                return Err(Error::config("--epsilon", "must lie in [0, 1]"));
            }
            let seed = first_seed(&cfg)?;
            let inner = cfg.controller_for(controller_kind(controller)?).build(seed)?;
            let mut ctl = EpsilonMix::new(inner, *epsilon, seed);
            let ds = collect_experience(&s, &mut ctl, *episodes)?;
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}.jsonl", s.name));
            ds.save_jsonl(&path)?;
            println!("{} records -> {}", ds.len(), path.display());
            Ok(())
        }
        Command::MetaTrain => {
            let r = cfg.resolve(base)?;
            let seed = first_seed(&cfg)?;
            let tasks = collect_sources(&cfg, &r.sources, seed)?;
            let phi = pretrain_dynamics(&cfg, &tasks, r.target.network.state_grids, Pretraining::Maml, seed)?;
            let ck = Checkpoint {
                repr: None,
                dynamics: phi,
                value_params: cfg.adapt.value,
                dist_params: cfg.adapt.dist,
                policy_params: PolicyParams::default(),
                provenance: Provenance {
                    source_cities: r.sources.iter().map(|s| s.name.clone()).collect(),
                    meta_iters: cfg.maml.meta_iterations,
                    seed,
                },
            };
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            ck.save(&dir.join("phi.json"))?;
            let mut m = RunManifest::new("meta-train", &cfg, &[seed])?;
            for s in &r.sources {
                m.add_input(format!("scenario:{}", s.name), &serde_json::to_vec(s)?);
            }
            m.outputs = vec!["phi.json".into()];
            m.save(&dir.join("manifest.json"))?;
            println!("phi -> {}", dir.join("phi.json").display());
            Ok(())
        }
        Command::Adapt { phi } => {
            let r = cfg.resolve(base)?;
            let seed = first_seed(&cfg)?;
            let ck = Checkpoint::load(phi)?;
            let run = adapt_and_evaluate(&ck.dynamics, &r.target, &cfg.adapt, seed)?;
            let adapted = Checkpoint {
                repr: Some(run.adapted.f.clone()),
                dynamics: run.adapted.g.clone(),
                policy_params: PolicyParams::greedy(),
                ..ck
            };
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            adapted.save(&dir.join("adapted.json"))?;
            let mut m = RunManifest::new("adapt", &cfg, &[seed])?;
            m.add_input_file(phi)?;
            m.outputs = vec!["adapted.json".into()];
            m.save(&dir.join("manifest.json"))?;
            println!("{}", serde_json::to_string_pretty(&run.row("AMM", seed))?);
            Ok(())
        }
        Command::Evaluate { checkpoint, method } => match (checkpoint, method) {
            (Some(p), _) => {
                let target = cfg.target.resolve(base)?;
                let ck = Checkpoint::load(p)?;
                let f = ck
                    .repr
                    .ok_or_else(|| Error::config("checkpoint", "no representation module; adapt it first"))?;
                if f.schema != target.schema {
                    return Err(Error::config("checkpoint", "representation schema differs from the target's"));
                }
                let mut ctl = AmmController::new(f, ck.dynamics, ck.value_params, PolicyParams::greedy(), first_seed(&cfg)?)?;
                let metrics = run_episode(&target, &mut ctl, false)?.metrics;
                println!("{}", serde_json::to_string_pretty(&metrics)?);
                Ok(())
            }
            (None, m) => {
                let mut cfg = cfg.clone();
                if let Some(m) = m {
                    cfg.method = m.parse()?;
                }
                let report = run_main(&cfg, base)?;
                print!("{}", report.table());
                Ok(())
            }
        },
        Command::Ablation => {
            let r = run_ablation(&cfg, base)?;
            print!("{}", r.report.table());
            for e in &r.expectations {
                println!("{}: {} ({:.2} vs {:.2})", e.claim, if e.holds { "holds" } else { "does not hold" }, e.lhs, e.rhs);
            }
            Ok(())
        }
        Command::Sweep => {
            let entries = run_complexity_sweep(&cfg, base)?;
            print!("{}", sweep_csv(&entries)?);
            Ok(())
        }
        Command::SourceMatrix => {
            let m = run_source_selection(&cfg, base)?;
            print!("{}", m.table());
            Ok(())
        }
        Command::Offline => {
            let r = run_offline_case(&cfg, base)?;
            print!("{}", r.report.table());
            println!("offline interactions: {}", r.offline_interactions);
            Ok(())
        }
        Command::Curve => {
            let c = data_volume_curve(&cfg, base)?;
            print!("{}", c.to_csv()?);
            Ok(())
        }
    }
}
