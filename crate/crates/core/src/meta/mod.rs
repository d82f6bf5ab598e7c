//! Experience collection, multi-city meta-training and target adaptation.

mod adapt;
mod checkpoint;
mod dataset;
mod episode;
mod maml;

pub use adapt::{
    adapt, dynamics_error, evaluate_greedy, initial_repr, observation_pairs, offline_train_repr, representation_error, AdaptConfig,
    AdaptOutcome, AmmController,
};
pub use checkpoint::{content_hash, hex, json_digest, Checkpoint, Provenance, RunManifest};
pub use dataset::{collect_experience, transition, TaskDataset};
pub use episode::{run_episode, snapshot, CountedEnv, EpisodeOutcome, TransitionRecord};
pub use maml::{
    maml_train, maml_train_dynamics, sequential_pretrain, DynamicsObjective, MamlConfig, MamlOutcome, MetaObjective,
    OuterOptimizer,
};
