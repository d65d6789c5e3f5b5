//! Exact computation on finite models: target tables, normalizers,
//! window functionals, divergences, expected estimators, and exact kernel
//! matrices for the iterated conditional samplers.
//!
//! Everything in this module is deterministic and computed to double
//! precision with compensated summation; enumeration sizes are guarded with
//! explicit errors rather than silent truncation.

mod enumerate;
mod kernels;

pub use enumerate::{
    expected_estimator_exact, expected_estimator_mc, expected_normalizer_exact, Algorithm,
    EstimateMode, ExpectedEstimate,
};
pub use kernels::{
    csmc_expected_normalizer_bruteforce, csmc_expected_normalizer_closed_form, icsmc_kernel_matrix,
    kernel_tv_decay, pg_stationary, pg_transition_matrix, ConditionalAlgorithm, KernelVariant,
};

use crate::engine::TargetKind;
use crate::model::FiniteModel;
use crate::numerics::ksum;
use crate::{Error, Result};

/// Hard ceiling on the number of paths a finite-model oracle enumerates.
const PATH_GUARD: usize = 1_000_000;

/// Encodes a path as an integer with the step-0 state most significant, the
/// index order of every joint table in this module.
pub fn encode_path(path: &[usize], state_count: usize) -> usize {
    path.iter().fold(0usize, |code, &x| code * state_count + x)
}

/// Inverse of [`encode_path`] for paths of length `len`.
pub fn decode_path(code: usize, state_count: usize, len: usize) -> Vec<usize> {
    let mut path = vec![0usize; len];
    let mut rest = code;
    for slot in path.iter_mut().rev() {
        *slot = rest % state_count;
        rest /= state_count;
    }
    path
}

/// Kullback-Leibler divergence from `p` to `q` on a shared finite index
/// set, with the conventions `0·log(0/q) = 0`.
///
/// # Errors
///
/// [`Error::SupportMismatch`] when `p` puts mass where `q` has none;
/// [`Error::Dimension`] when lengths differ.
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64> {
    check_same_len(p, q)?;
    let mut terms = Vec::with_capacity(p.len());
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::SupportMismatch);
        }
        terms.push(pi * (pi / qi).ln());
    }
    Ok(ksum(terms))
}

/// Total variation distance, half the L1 distance on finite spaces.
///
/// # Errors
///
/// [`Error::Dimension`] when lengths differ.
pub fn tv_dist(p: &[f64], q: &[f64]) -> Result<f64> {
    check_same_len(p, q)?;
    Ok(0.5 * ksum(p.iter().zip(q).map(|(&pi, &qi)| (pi - qi).abs())))
}

/// Chi-square divergence from `p` to `q`: the `q`-expectation of
/// `(dp/dq - 1)^2`.
///
/// # Errors
///
/// As [`kl_div`].
pub fn chi2_div(p: &[f64], q: &[f64]) -> Result<f64> {
    check_same_len(p, q)?;
    let mut terms = Vec::with_capacity(p.len());
    for (&pi, &qi) in p.iter().zip(q) {
        if qi == 0.0 {
            if pi != 0.0 {
                return Err(Error::SupportMismatch);
            }
            continue;
        }
        let d = pi - qi;
        terms.push(d * d / qi);
    }
    Ok(ksum(terms))
}

fn check_same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "tables of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// The three divergences reported together by the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport {
    pub kl: f64,
    pub tv: f64,
    pub chi2: f64,
}

/// All three divergences from `p` to `q` at once.
///
/// # Errors
///
/// As [`kl_div`].
pub fn divergences(p: &[f64], q: &[f64]) -> Result<DivergenceReport> {
    Ok(DivergenceReport {
        kl: kl_div(p, q)?,
        tv: tv_dist(p, q)?,
        chi2: chi2_div(p, q)?,
    })
}

/// Exact distributions and functionals of one finite model.
///
/// Time indices on tables are generations `0..t`. The window functionals
/// [`OracleTables::g_fn`] keep the one-based convention of the convergence
/// analysis: `g_fn(s, tp, x)` is the expected product of potentials over
/// steps `s..tp` (exclusive of `tp`) started from state `x` at step `s`,
/// for `1 <= s <= tp <= t + 1`, and `g0(tp)` is its average under the
/// initial law, which equals the normalizer after `tp - 1` potentials.
#[derive(Debug, Clone)]
pub struct OracleTables {
    model: FiniteModel,
    /// `z[s]` is the normalizer after `s + 1` potentials.
    z: Vec<f64>,
    /// `z_hat[s]` is the predictive normalizer at generation `s`: the mass
    /// after `s` potentials, before the generation-`s` potential applies.
    z_hat: Vec<f64>,
    updated_joint: Vec<f64>,
    predictive_joint: Vec<f64>,
    proposal_joint: Vec<f64>,
    updated_marginals: Vec<Vec<f64>>,
    predictive_marginals: Vec<Vec<f64>>,
    smoothing_marginals: Vec<Vec<f64>>,
    /// `backward[s][to][from]` conditions generation `s` on generation
    /// `s + 1` under the updated joint law.
    backward: Vec<Vec<Vec<f64>>>,
    /// `g_table[s][tp][x]` for `1 <= s <= tp <= t + 1`; inner vectors are
    /// empty at invalid index pairs.
    g_table: Vec<Vec<Vec<f64>>>,
}

/// Builds every exact table for a finite model.
///
/// # Errors
///
/// [`Error::EnumerationTooLarge`] when the model has more than `10^6`
/// paths; [`Error::Dimension`] when [`FiniteModel::validate`] reports
/// violations.
pub fn build_oracle(model: &FiniteModel) -> Result<OracleTables> {
    let violations = model.validate();
    if !violations.is_empty() {
        return Err(Error::Dimension(format!(
            "invalid model: {}",
            violations.join("; ")
        )));
    }
    let t = model.horizon();
    let s_count = model.state_count();
    let paths = checked_power(s_count, t).ok_or(Error::EnumerationTooLarge)?;
    if paths > PATH_GUARD {
        return Err(Error::EnumerationTooLarge);
    }

    // Forward pass: predictive mass (before the step potential) and updated
    // mass (after it), per generation.
    let mut predictive_raw: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut updated_raw: Vec<Vec<f64>> = Vec::with_capacity(t);
    predictive_raw.push(model.initial().to_vec());
    for s in 0..t {
        if s > 0 {
            let prev = &updated_raw[s - 1];
            let m = model.transition(s);
            let mut next = vec![0.0f64; s_count];
            for (to, slot) in next.iter_mut().enumerate() {
                *slot = ksum(prev.iter().enumerate().map(|(from, &f)| f * m[from][to]));
            }
            predictive_raw.push(next);
        }
        let updated: Vec<f64> = predictive_raw[s]
            .iter()
            .zip(model.potential_vec(s))
            .map(|(&f, &g)| f * g)
            .collect();
        updated_raw.push(updated);
    }
    let z: Vec<f64> = updated_raw
        .iter()
        .map(|row| ksum(row.iter().cloned()))
        .collect();
    let z_hat: Vec<f64> = predictive_raw
        .iter()
        .map(|row| ksum(row.iter().cloned()))
        .collect();

    // Backward pass: expected product of the remaining potentials.
    let mut tail = vec![vec![1.0f64; s_count]; t];
    for s in (0..t.saturating_sub(1)).rev() {
        let m = model.transition(s + 1);
        let g_next = model.potential_vec(s + 1);
        let next = tail[s + 1].clone();
        for (x, slot) in tail[s].iter_mut().enumerate() {
            *slot = ksum((0..s_count).map(|y| m[x][y] * g_next[y] * next[y]));
        }
    }

    let updated_marginals: Vec<Vec<f64>> = updated_raw
        .iter()
        .zip(&z)
        .map(|(row, &zs)| row.iter().map(|&v| v / zs).collect())
        .collect();
    let predictive_marginals: Vec<Vec<f64>> = predictive_raw
        .iter()
        .zip(&z_hat)
        .map(|(row, &zh)| row.iter().map(|&v| v / zh).collect())
        .collect();
    let smoothing_marginals: Vec<Vec<f64>> = (0..t)
        .map(|s| {
            let raw: Vec<f64> = updated_raw[s]
                .iter()
                .zip(&tail[s])
                .map(|(&f, &h)| f * h)
                .collect();
            let total = ksum(raw.iter().cloned());
            raw.iter().map(|&v| v / total).collect()
        })
        .collect();

    let mut backward = Vec::with_capacity(t.saturating_sub(1));
    for (s, upd) in updated_raw.iter().enumerate().take(t.saturating_sub(1)) {
        let m = model.transition(s + 1);
        let mut rows = vec![vec![0.0f64; s_count]; s_count];
        for (to, row) in rows.iter_mut().enumerate() {
            let den = ksum((0..s_count).map(|from| upd[from] * m[from][to]));
            if den > 0.0 {
                for (from, slot) in row.iter_mut().enumerate() {
                    *slot = upd[from] * m[from][to] / den;
                }
            } else {
                // Unreachable destination: any stochastic row preserves the
                // reconstruction identity, which only weighs reachable mass.
                row.iter_mut().for_each(|slot| *slot = 1.0 / s_count as f64);
            }
        }
        backward.push(rows);
    }

    // Joint tables by path enumeration.
    let mut proposal_raw = vec![0.0f64; paths];
    let mut predictive_joint_raw = vec![0.0f64; paths];
    let mut updated_joint_raw = vec![0.0f64; paths];
    for code in 0..paths {
        let path = decode_path(code, s_count, t);
        let dens = model.path_density(&path);
        let mut all_but_last = 1.0f64;
        for (s, &x) in path.iter().enumerate().take(t.saturating_sub(1)) {
            all_but_last *= model.potential_vec(s)[x];
        }
        proposal_raw[code] = dens;
        predictive_joint_raw[code] = dens * all_but_last;
        updated_joint_raw[code] = dens * all_but_last * model.potential_vec(t - 1)[path[t - 1]];
    }
    let normalize_table = |raw: &[f64]| -> Vec<f64> {
        let total = ksum(raw.iter().cloned());
        raw.iter().map(|&v| v / total).collect()
    };
    let updated_joint = normalize_table(&updated_joint_raw);
    let predictive_joint = normalize_table(&predictive_joint_raw);
    let proposal_joint = normalize_table(&proposal_raw);

    // Window functionals with one-based step indices. Each pass seeds the
    // diagonal and fills column `tp` bottom-up, so the loop needs the raw
    // index on both dimensions.
    let mut g_table = vec![vec![Vec::new(); t + 2]; t + 2];
    #[allow(clippy::needless_range_loop)]
    for tp in 1..=t + 1 {
        g_table[tp][tp] = vec![1.0f64; s_count];
        for s in (1..tp).rev() {
            let g_s = model.potential_vec(s - 1);
            let next = &g_table[s + 1][tp];
            let row: Vec<f64> = if s == t {
                // No kernel follows the final step; the continuation is the
                // constant 1 of `g_table[t + 1][t + 1]`.
                g_s.to_vec()
            } else {
                let m = model.transition(s);
                (0..s_count)
                    .map(|x| g_s[x] * ksum((0..s_count).map(|y| m[x][y] * next[y])))
                    .collect()
            };
            g_table[s][tp] = row;
        }
    }

    Ok(OracleTables {
        model: model.clone(),
        z,
        z_hat,
        updated_joint,
        predictive_joint,
        proposal_joint,
        updated_marginals,
        predictive_marginals,
        smoothing_marginals,
        backward,
        g_table,
    })
}

pub(crate) fn checked_power(base: usize, exp: usize) -> Option<usize> {
    let mut acc = 1usize;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

impl OracleTables {
    pub fn model(&self) -> &FiniteModel {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon()
    }

    pub fn state_count(&self) -> usize {
        self.model.state_count()
    }

    pub fn path_count(&self) -> usize {
        self.updated_joint.len()
    }

    /// Normalizers per generation: `z()[s]` sums `s + 1` potentials.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Full-horizon normalizer.
    pub fn z_final(&self) -> f64 {
        *self.z.last().expect("horizon is positive")
    }

    /// Predictive normalizers per generation; `z_hat()[s]` equals
    /// `z()[s - 1]` for `s >= 1` and one at `s = 0`.
    pub fn z_hat(&self) -> &[f64] {
        &self.z_hat
    }

    pub fn updated_joint(&self) -> &[f64] {
        &self.updated_joint
    }

    pub fn predictive_joint(&self) -> &[f64] {
        &self.predictive_joint
    }

    /// Path law of the proposal chain alone (no potentials).
    pub fn proposal_joint(&self) -> &[f64] {
        &self.proposal_joint
    }

    /// Generation-`s` marginal including the generation-`s` potential.
    pub fn updated_marginal(&self, s: usize) -> &[f64] {
        &self.updated_marginals[s]
    }

    /// Generation-`s` marginal excluding the generation-`s` potential.
    pub fn predictive_marginal(&self, s: usize) -> &[f64] {
        &self.predictive_marginals[s]
    }

    /// Generation-`s` marginal of the full-horizon updated joint law.
    pub fn smoothing_marginal(&self, s: usize) -> &[f64] {
        &self.smoothing_marginals[s]
    }

    /// Backward kernel rows at generation `s`: `backward_kernel(s)[to][from]`
    /// is the updated-law probability of `from` at `s` given `to` at `s + 1`.
    pub fn backward_kernel(&self, s: usize) -> &[Vec<f64>] {
        &self.backward[s]
    }

    /// The exact table the four empirical measures estimate.
    pub fn target(&self, kind: TargetKind) -> &[f64] {
        match kind {
            TargetKind::UpdatedJoint => &self.updated_joint,
            TargetKind::PredictiveJoint => &self.predictive_joint,
            TargetKind::UpdatedMarginal => &self.updated_marginals[self.horizon() - 1],
            TargetKind::PredictiveMarginal => &self.predictive_marginals[self.horizon() - 1],
        }
    }

    /// Window functional at one-based steps: the expected product of
    /// potentials over steps `s..tp` started from `x` at step `s`, for
    /// `1 <= s <= tp <= t + 1`. `g_fn(s, s, _)` is one.
    pub fn g_fn(&self, s: usize, tp: usize, x: usize) -> f64 {
        self.g_table[s][tp][x]
    }

    /// Initial-law average of the window functional: `g0(tp)` equals the
    /// normalizer after `tp - 1` potentials (one when `tp` is 1).
    pub fn g0(&self, tp: usize) -> f64 {
        if tp == 1 {
            1.0
        } else {
            self.z[tp - 2]
        }
    }

    /// Product of window functionals along consecutive pairs of a time
    /// tuple, evaluated on a one-based path: the term `C` of the expected
    /// normalizer expansions. Empty for tuples of length one.
    pub fn gap_product(&self, taus: &[usize], path: &[usize]) -> f64 {
        let mut acc = 1.0f64;
        for m in 0..taus.len().saturating_sub(1) {
            acc *= self.g_fn(taus[m], taus[m + 1], path[taus[m] - 1]);
        }
        acc
    }
}
