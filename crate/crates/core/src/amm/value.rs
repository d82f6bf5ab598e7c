//! Explicit congestion value of a state trajectory and the block-blurred
//! distance between states.
//!
//! Both work on column blocks of width `n`: block `j` covers grids
//! `j*n .. (j+1)*n` of every lane, and only the block total (summed over all
//! lanes) matters. Moving a vehicle inside a block changes neither quantity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::StateMatrix;

fn check_blocks(state_grids: usize, pass_grids: usize) -> Result<()> {
    if pass_grids == 0 || state_grids == 0 || state_grids % pass_grids != 0 {
        return Err(Error::config(
            "N",
            format!("N = {state_grids} must be a positive multiple of n = {pass_grids}"),
        ));
    }
    Ok(())
}

fn check_unit(field: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::config(field, format!("{v} is outside [0, 1]")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    /// Future steps beyond the first (`h`); trajectories hold `h + 1` states.
    pub horizon: usize,
    /// Discount across trajectory steps.
    pub gamma1: f64,
    /// Discount across column blocks, away from the stop line.
    pub gamma2: f64,
    #[serde(rename = "N")]
    pub state_grids: usize,
    #[serde(rename = "n")]
    pub pass_grids: usize,
}

impl Default for ValueParams {
    fn default() -> Self {
        ValueParams {
            horizon: 2,
            gamma1: 0.9,
            gamma2: 0.8,
            state_grids: 12,
            pass_grids: 4,
        }
    }
}

impl ValueParams {
    pub fn validate(&self) -> Result<()> {
        check_blocks(self.state_grids, self.pass_grids)?;
        check_unit("gamma1", self.gamma1)?;
        check_unit("gamma2", self.gamma2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistParams {
    /// Discount across column blocks, away from the stop line.
    pub beta: f64,
    #[serde(rename = "N")]
    pub state_grids: usize,
    #[serde(rename = "n")]
    pub pass_grids: usize,
}

impl Default for DistParams {
    fn default() -> Self {
        DistParams {
            beta: 0.8,
            state_grids: 12,
            pass_grids: 4,
        }
    }
}

impl DistParams {
    pub fn validate(&self) -> Result<()> {
        check_blocks(self.state_grids, self.pass_grids)?;
        check_unit("beta", self.beta)
    }
}

/// Total of each width-`n` column block, summed over every lane.
pub fn block_sums(s: &[f64], grids: usize, pass_grids: usize) -> Vec<f64> {
    let blocks = grids / pass_grids;
    let mut out = vec![0.0; blocks];
    for row in s.chunks_exact(grids) {
        for (j, block) in row.chunks_exact(pass_grids).enumerate() {
            out[j] += block.iter().sum::<f64>();
        }
    }
    out
}

fn check_state(s: &StateMatrix, grids: usize) -> Result<()> {
    if s.grids != grids || s.values.len() != s.lanes * s.grids {
        return Err(Error::shape(format!(
            "state is {}x{}, expected N = {grids} grids per lane",
            s.lanes, s.grids
        )));
    }
    Ok(())
}

/// Negative discounted congestion of `trajectory` (`h + 1` states). Always `<= 0`
/// for nonnegative states.
pub fn value(trajectory: &[StateMatrix], vp: &ValueParams) -> Result<f64> {
    vp.validate()?;
    if trajectory.len() != vp.horizon + 1 {
        return Err(Error::shape(format!(
            "trajectory has {} states, horizon {} needs {}",
            trajectory.len(),
            vp.horizon,
            vp.horizon + 1
        )));
    }
    let mut total = 0.0;
    let mut step_weight = 1.0;
    for s in trajectory {
        check_state(s, vp.state_grids)?;
        let mut block_weight = 1.0;
        let mut inner = 0.0;
        for b in block_sums(&s.values, s.grids, vp.pass_grids) {
            inner += block_weight * b;
            block_weight *= vp.gamma2;
        }
        total += step_weight * inner;
        step_weight *= vp.gamma1;
    }
    Ok(-total)
}

/// Block-discounted squared difference of block totals.
pub fn dist(s1: &StateMatrix, s2: &StateMatrix, dp: &DistParams) -> Result<f64> {
    dp.validate()?;
    if !s1.same_shape(s2) {
        return Err(Error::shape(format!(
            "states differ in shape: {}x{} vs {}x{}",
            s1.lanes, s1.grids, s2.lanes, s2.grids
        )));
    }
    check_state(s1, dp.state_grids)?;
    Ok(dist_raw(&s1.values, &s2.values, s1.grids, dp, None))
}

/// Distance between flat row-major states of `grids` columns; optionally
/// writes dDist/d`pred` into `grad` (scaled by `scale`).
pub(crate) fn dist_raw(
    pred: &[f64],
    target: &[f64],
    grids: usize,
    dp: &DistParams,
    grad: Option<(&mut [f64], f64)>,
) -> f64 {
    let a = block_sums(pred, grids, dp.pass_grids);
    let b = block_sums(target, grids, dp.pass_grids);
    let mut total = 0.0;
    let mut w = 1.0;
    let mut dblock = vec![0.0; a.len()];
    for j in 0..a.len() {
        let diff = a[j] - b[j];
        total += w * diff * diff;
        dblock[j] = 2.0 * w * diff;
        w *= dp.beta;
    }
    if let Some((g, scale)) = grad {
        for (idx, gv) in g.iter_mut().enumerate() {
            *gv = scale * dblock[(idx % grids) / dp.pass_grids];
        }
    }
    total
}

/// Sum of [`dist`] applied to each lane separately. Unlike the aggregate
/// distance it pins down which lane a vehicle is on.
pub(crate) fn lane_dist_raw(
    pred: &[f64],
    target: &[f64],
    grids: usize,
    dp: &DistParams,
    mut grad: Option<(&mut [f64], f64)>,
) -> f64 {
    let mut total = 0.0;
    for (lane, (p, t)) in pred.chunks_exact(grids).zip(target.chunks_exact(grids)).enumerate() {
        let g = grad
            .as_mut()
            .map(|(g, scale)| (&mut g[lane * grids..(lane + 1) * grids], *scale));
        total += dist_raw(p, t, grids, dp, g);
    }
    total
}
