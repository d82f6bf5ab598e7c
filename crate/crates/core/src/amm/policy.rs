//! Receding-horizon action-sequence selection with epsilon-greedy exploration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{rollout_many, Dynamics, Representation};
use super::value::{value, ValueParams};
use crate::error::{Error, Result};
use crate::sim::{Observation, Phase, NUM_PHASES};

/// Largest candidate set allowed in full enumeration.
pub const MAX_FULL_CANDIDATES: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CandidateMode {
    /// One phase held for the whole horizon: 8 candidates.
    #[default]
    Constant,
    /// Every phase sequence of length `h + 1`.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub epsilon: f64,
    pub candidate_mode: CandidateMode,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            epsilon: 0.1,
            candidate_mode: CandidateMode::Constant,
        }
    }
}

impl PolicyParams {
    pub fn greedy() -> PolicyParams {
        PolicyParams {
            epsilon: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("epsilon", "must lie in [0, 1]"));
        }
        if self.candidate_mode == CandidateMode::Full && full_count(horizon) > MAX_FULL_CANDIDATES {
            return Err(Error::config(
                "candidate_mode",
                format!("FULL enumeration with h = {horizon} exceeds {MAX_FULL_CANDIDATES} candidates"),
            ));
        }
        Ok(())
    }
}

fn full_count(horizon: usize) -> usize {
    let mut n: usize = 1;
    for _ in 0..=horizon {
        n = n.saturating_mul(NUM_PHASES);
    }
    n
}

/// A sequence of `h + 1` phases; only the first is executed before re-planning.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSequence(pub Vec<Phase>);

impl ActionSequence {
    pub fn first(&self) -> Phase {
        self.0[0]
    }
}

/// Candidate sequences in canonical order: ascending by phase id, lexicographic.
pub fn candidates(mode: CandidateMode, horizon: usize) -> Vec<Vec<Phase>> {
    match mode {
        CandidateMode::Constant => Phase::all().map(|p| vec![p; horizon + 1]).collect(),
        CandidateMode::Full => {
            let mut out: Vec<Vec<Phase>> = vec![Vec::new()];
            for _ in 0..=horizon {
                out = out
                    .into_iter()
                    .flat_map(|prefix| {
                        Phase::all().map(move |p| {
                            let mut q = prefix.clone();
                            q.push(p);
                            q
                        })
                    })
                    .collect();
            }
            out
        }
    }
}

/// Index of the maximal score; the earliest index wins ties.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] >= s => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Value of every candidate from the estimated state of `o`.
pub fn score_candidates<F, G>(
    f: &F,
    g: &G,
    o: &Observation,
    sequences: &[Vec<Phase>],
    vp: &ValueParams,
) -> Result<Vec<f64>>
where
    F: Representation + ?Sized,
    G: Dynamics + ?Sized,
{
    let s = f.estimate(o)?;
    rollout_many(g, &s, sequences)?
        .iter()
        .map(|traj| value(traj, vp))
        .collect()
}

/// Epsilon-greedy choice of an action sequence.
///
/// With probability `epsilon` a uniformly random candidate is returned;
/// otherwise every candidate is rolled out through `g` from `f(o)` and the
/// one with the highest predicted value wins, lowest phase ids first on ties.
pub fn select_action<F, G, R>(
    f: &F,
    g: &G,
    o: &Observation,
    pp: &PolicyParams,
    vp: &ValueParams,
    rng: &mut R,
) -> Result<ActionSequence>
where
    F: Representation + ?Sized,
    G: Dynamics + ?Sized,
    R: Rng + ?Sized,
{
    pp.validate(vp.horizon)?;
    let mut seqs = candidates(pp.candidate_mode, vp.horizon);
    if pp.epsilon > 0.0 && rng.gen::<f64>() < pp.epsilon {
        let k = rng.gen_range(0..seqs.len());
        return Ok(ActionSequence(seqs.swap_remove(k)));
    }
    let scores = score_candidates(f, g, o, &seqs, vp)?;
    let best = argmax_first(&scores).ok_or_else(|| Error::shape("no candidates"))?;
    Ok(ActionSequence(seqs.swap_remove(best)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Schema, StateMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn candidate_counts_and_order() {
        let c = candidates(CandidateMode::Constant, 2);
        assert_eq!(c.len(), 8);
        assert_eq!(c[0], vec![Phase::new(1).unwrap(); 3]);
        let full = candidates(CandidateMode::Full, 1);
        assert_eq!(full.len(), 64);
        assert_eq!(full[1], vec![Phase::new(1).unwrap(), Phase::new(2).unwrap()]);
    }

    #[test]
    fn full_mode_is_bounded() {
        let pp = PolicyParams {
            epsilon: 0.0,
            candidate_mode: CandidateMode::Full,
        };
        assert!(pp.validate(3).is_ok());
        assert!(pp.validate(4).is_err());
    }

    #[test]
    fn argmax_prefers_higher_then_earlier() {
        assert_eq!(argmax_first(&[-5.0, -3.0]), Some(1));
        assert_eq!(argmax_first(&[-1.0, -1.0, -2.0]), Some(0));
        assert_eq!(argmax_first(&[]), None);
    }

    struct Passthrough;
    impl Representation for Passthrough {
        fn estimate(&self, o: &Observation) -> Result<StateMatrix> {
            StateMatrix::from_flat(o.lanes, 1, o.values.clone())
        }
    }

    /// Clears the lane whose index matches the phase.
    struct ClearLane;
    impl Dynamics for ClearLane {
        fn predict_batch(&self, states: &[StateMatrix], actions: &[Phase]) -> Result<Vec<StateMatrix>> {
            Ok(states
                .iter()
                .zip(actions)
                .map(|(s, a)| {
                    let mut n = s.clone();
                    n.set(a.index(), 0, 0.0);
                    n
                })
                .collect())
        }
    }

    #[test]
    fn greedy_picks_the_lane_with_most_vehicles() {
        let mut o = Observation::zeros(Schema::Base, 8);
        o.values = vec![1.0, 0.0, 5.0, 2.0, 0.0, 0.0, 5.0, 0.0];
        let vp = ValueParams {
            horizon: 1,
            gamma1: 0.9,
            gamma2: 0.8,
            state_grids: 1,
            pass_grids: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = select_action(&Passthrough, &ClearLane, &o, &PolicyParams::greedy(), &vp, &mut rng).unwrap();
        // Lanes 2 and 6 tie; phase 3 (index 2) wins.
        assert_eq!(a.first().id(), 3);
        assert_eq!(a.0.len(), 2);
    }
}
