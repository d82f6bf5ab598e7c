//! The modular controller: representation, dynamics, explicit value and policy.

mod model;
mod policy;
mod value;

pub use model::{repr_forward, rollout, rollout_many, DynModel, Dynamics, LossKind, ReprModel, Representation, Transition};
pub use policy::{
    argmax_first, candidates, score_candidates, select_action, ActionSequence, CandidateMode, PolicyParams,
    MAX_FULL_CANDIDATES,
};
pub use value::{block_sums, dist, value, DistParams, ValueParams};
