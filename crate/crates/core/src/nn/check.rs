//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{Net, ParamVector};
use crate::error::{Error, Result};

/// Nets larger than this are checked on a random parameter subset.
const FULL_CHECK_LIMIT: usize = 2000;
const SUBSET: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose perturbation flipped a ReLU and were left out.
    pub skipped_kinks: usize,
}

/// Compare analytic gradients against central differences with step `eps`.
///
/// Relative error per parameter is `|a - n| / max(|a|, |n|, floor)` where
/// the floor is `1e-7 * max(1, |loss|)`, absorbing round-off of the
/// difference quotient on near-zero components.
pub fn grad_check<F>(net: &Net, inputs: &[f64], mut loss: F, eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::config("eps", "must be positive"));
    }
    let params = net.params().clone();
    if params.is_empty() {
        return Ok(GradCheckReport {
            max_rel_error: 0.0,
            checked: 0,
            skipped_kinks: 0,
        });
    }
    let (value, analytic) = net.grad_with(&params, inputs, &mut loss)?;
    let floor = 1e-7 * value.abs().max(1.0);
    let base_pattern = net.relu_pattern(&params, inputs)?;
    let mut scratch = Vec::new();
    let mut eval = |p: &ParamVector, loss: &mut F| -> Result<f64> {
        let out = net.forward_batch_with(p, inputs)?;
        scratch.clear();
        scratch.resize(out.len(), 0.0);
        Ok(loss(&out, &mut scratch))
    };

    let indices: Vec<usize> = if params.len() > FULL_CHECK_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
        let mut v = sample(&mut rng, params.len(), SUBSET).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..params.len()).collect()
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    let mut probe = params.clone();
    for i in indices {
        let orig = probe.0[i];
        probe.0[i] = orig + eps;
        let kink_plus = net.relu_pattern(&probe, inputs)? != base_pattern;
        let up = eval(&probe, &mut loss)?;
        probe.0[i] = orig - eps;
        let kink_minus = net.relu_pattern(&probe, inputs)? != base_pattern;
        let down = eval(&probe, &mut loss)?;
        probe.0[i] = orig;
        if kink_plus || kink_minus {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.0[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    Ok(report)
}
