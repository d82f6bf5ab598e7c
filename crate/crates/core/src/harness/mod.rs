//! Experiment configuration, runners and reporting.

mod config;
mod nonmodular;
mod report;
mod runners;
pub mod scenarios;

pub use config::{CityRef, ExperimentConfig, Method, OfflineConfig, Resolved, SweepConfig};
pub use nonmodular::{adapt_mono, train_on_city, MonoController, MonoModel};
pub use report::{mean_std, Expectation, RunReport, SeedRow, Summary};
pub use runners::{
    adapt_and_evaluate, architecture, budget_for, collect_sources, data_volume_curve, derive_seed, offline_log,
    pretrain_dynamics, run_ablation, run_complexity_sweep, run_main, run_offline_case, run_source_selection, sweep_csv,
    AblationReport, AmmRun, CurvePoint, CurveReport, MatrixCell, OfflineReport, Pretraining, SourceMatrix, SweepEntry,
};
