//! Expected estimators and expected normalizers of the particle samplers
//! on finite models, by exact enumeration of all algorithm randomness or by
//! Monte Carlo averaging.

use std::collections::BTreeMap;

use rand::RngCore;

use crate::engine::{run_alpha_smc, run_sir, run_sis, TargetKind};
use crate::ess::p_ess;
use crate::model::FiniteModel;
use crate::numerics::{ksum, NeumaierAcc};
use crate::oracle::{checked_power, encode_path, PATH_GUARD};
use crate::resampling::{select_alpha, AlphaMatrix, AlphaPolicy};
use crate::{Error, Result};

/// Which sampler's law an oracle computation integrates over.
#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    /// Sequential importance sampling: no interaction.
    Sis,
    /// Resampling at every step.
    Sir,
    /// Matrix resampling under the given policy.
    Alpha { policy: AlphaPolicy },
}

impl Algorithm {
    /// Short lowercase name, suitable for report columns.
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Sis => "sis",
            Algorithm::Sir => "sir",
            Algorithm::Alpha { .. } => "alpha",
        }
    }
}

/// How an [`ExpectedEstimate`] was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    Exact,
    MonteCarlo { replications: usize },
}

/// The expected empirical measure of a sampler, as a probability table over
/// path codes (joint targets) or states (marginal targets).
#[derive(Debug, Clone)]
pub struct ExpectedEstimate {
    pub table: Vec<f64>,
    pub target: TargetKind,
    pub mode: EstimateMode,
    /// Per-entry standard errors of the table mean; present in Monte Carlo
    /// mode only, and zero when it was computed from a single replication.
    pub std_error: Option<Vec<f64>>,
    /// Smallest `∞`-ESS seen at any generation across every outcome with
    /// positive probability (exact mode) or every replication (MC mode).
    pub ess_min_inf: f64,
    /// As above at order 2.
    pub ess_min_two: f64,
}

/// One fully expanded final generation: its probability, every particle's
/// path code, and every particle's weight.
struct BranchOutcome {
    prob: f64,
    codes: Vec<u32>,
    weights: Vec<f64>,
}

/// The exact law of a sampler's final generation, plus the bookkeeping the
/// consumers need.
struct ExactLaw {
    outcomes: Vec<BranchOutcome>,
    halted_mass: f64,
    ess_min_inf: f64,
    ess_min_two: f64,
}

type EnsembleKey = Vec<(u32, u64)>;

fn guard_exact(s_count: usize, t: usize, n: usize) -> Result<()> {
    // Work estimate: per-particle path codes give at most (S^t)^N distinct
    // ensembles, each expanding into at most N^N * S^N children per step.
    let s_ln = (s_count as f64).ln();
    let cost = (n * t) as f64 * s_ln + n as f64 * (n as f64).ln() + n as f64 * s_ln;
    if cost > 5e8f64.ln() {
        return Err(Error::UseMonteCarloMode);
    }
    Ok(())
}

/// Whether the sampler's law is invariant under particle relabeling, which
/// lets the enumeration merge ensembles that differ only by a permutation.
fn exchangeable(algorithm: &Algorithm) -> bool {
    match algorithm {
        Algorithm::Sis | Algorithm::Sir => true,
        Algorithm::Alpha { policy } => !matches!(policy, AlphaPolicy::Fixed(_)),
    }
}

fn effective_alpha(algorithm: &Algorithm, w: &[f64], step: usize) -> Result<AlphaMatrix> {
    match algorithm {
        Algorithm::Sis => Ok(AlphaMatrix::identity(w.len())),
        Algorithm::Sir => Ok(AlphaMatrix::uniform(w.len())),
        Algorithm::Alpha { policy } => select_alpha(policy, w, step),
    }
}

fn canonical_key(codes: &[u32], weights: &[f64], sort: bool) -> EnsembleKey {
    let mut key: EnsembleKey = codes
        .iter()
        .zip(weights)
        .map(|(&c, &w)| (c, w.to_bits()))
        .collect();
    if sort {
        key.sort_unstable();
    }
    key
}

pub(super) fn walk_product(
    options: &[Vec<(u32, f64)>],
    depth: usize,
    prob: f64,
    chosen: &mut Vec<u32>,
    visit: &mut impl FnMut(f64, &[u32]),
) {
    if depth == options.len() {
        visit(prob, chosen);
        return;
    }
    for &(code, p) in &options[depth] {
        chosen.push(code);
        walk_product(options, depth + 1, prob * p, chosen, visit);
        chosen.pop();
    }
}

fn record_ess(w: &[f64], min_inf: &mut f64, min_two: &mut f64) {
    if let Ok(e) = p_ess(w, f64::INFINITY) {
        *min_inf = min_inf.min(e);
    }
    if let Ok(e) = p_ess(w, 2.0) {
        *min_two = min_two.min(e);
    }
}

/// Enumerates every outcome of the sampler on a finite model, merging
/// ensembles that the law cannot distinguish. Probabilities are accumulated
/// in deterministic (ordered) fashion so repeated calls are bit-identical.
fn exact_law(model: &FiniteModel, algorithm: &Algorithm, n: usize) -> Result<ExactLaw> {
    if n == 0 {
        return Err(Error::Dimension("particle count must be positive".into()));
    }
    let t = model.horizon();
    if t == 0 {
        return Err(Error::Dimension("horizon must be positive".into()));
    }
    let s_count = model.state_count();
    guard_exact(s_count, t, n)?;
    let sort = exchangeable(algorithm);

    let mut states: BTreeMap<EnsembleKey, NeumaierAcc> = BTreeMap::new();
    {
        let initial: Vec<(u32, f64)> = model
            .initial()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(x, &p)| (x as u32, p))
            .collect();
        let options = vec![initial; n];
        let mut chosen = Vec::with_capacity(n);
        let ones = vec![1.0f64; n];
        walk_product(&options, 0, 1.0, &mut chosen, &mut |p, codes| {
            let key = canonical_key(codes, &ones, sort);
            states.entry(key).or_default().add(p);
        });
    }

    let mut halted = NeumaierAcc::new();
    let mut ess_min_inf = n as f64;
    let mut ess_min_two = n as f64;

    for s in 1..t {
        let g_prev_vec = model.potential_vec(s - 1);
        let kernel = model.transition(s);
        let mut next: BTreeMap<EnsembleKey, NeumaierAcc> = BTreeMap::new();

        for (key, acc) in &states {
            let p = acc.value();
            if p <= 0.0 {
                continue;
            }
            let codes: Vec<u32> = key.iter().map(|&(c, _)| c).collect();
            let w: Vec<f64> = key.iter().map(|&(_, bits)| f64::from_bits(bits)).collect();
            let g_prev: Vec<f64> = codes
                .iter()
                .map(|&c| g_prev_vec[(c as usize) % s_count])
                .collect();
            let alpha = effective_alpha(algorithm, &w, s - 1)?;
            let new_w: Vec<f64> = (0..n)
                .map(|m| {
                    ksum(
                        alpha
                            .row(m)
                            .iter()
                            .zip(w.iter().zip(&g_prev))
                            .map(|(&a, (&wk, &gk))| a * wk * gk),
                    )
                })
                .collect();

            let dead_row = new_w.contains(&0.0);
            match algorithm {
                Algorithm::Sis => {}
                Algorithm::Sir | Algorithm::Alpha { .. } => {
                    // The resampling categorical of a dead slot is undefined,
                    // so the sampler halts; under full resampling all slots
                    // share one row and die together.
                    if dead_row {
                        halted.add(p);
                        continue;
                    }
                }
            }
            record_ess(&new_w, &mut ess_min_inf, &mut ess_min_two);

            let mut options: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
            for (m, &wm) in new_w.iter().enumerate() {
                let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
                let mut push = |ancestor: usize, pa: f64| {
                    let from = (codes[ancestor] as usize) % s_count;
                    for (to, &pm) in kernel[from].iter().enumerate() {
                        if pm > 0.0 {
                            *merged
                                .entry(codes[ancestor] * s_count as u32 + to as u32)
                                .or_insert(0.0) += pa * pm;
                        }
                    }
                };
                if matches!(algorithm, Algorithm::Sis) {
                    push(m, 1.0);
                } else {
                    for a in 0..n {
                        let ra = alpha.entry(m, a) * w[a] * g_prev[a];
                        if ra > 0.0 {
                            push(a, ra / wm);
                        }
                    }
                }
                options.push(merged.into_iter().collect());
            }

            let mut chosen = Vec::with_capacity(n);
            walk_product(&options, 0, p, &mut chosen, &mut |q, new_codes| {
                let key = canonical_key(new_codes, &new_w, sort);
                next.entry(key).or_default().add(q);
            });
        }
        states = next;
    }

    let outcomes = states
        .iter()
        .filter_map(|(key, acc)| {
            let prob = acc.value();
            if prob <= 0.0 {
                return None;
            }
            Some(BranchOutcome {
                prob,
                codes: key.iter().map(|&(c, _)| c).collect(),
                weights: key.iter().map(|&(_, b)| f64::from_bits(b)).collect(),
            })
        })
        .collect();

    Ok(ExactLaw {
        outcomes,
        halted_mass: halted.value(),
        ess_min_inf,
        ess_min_two,
    })
}

fn table_len(model: &FiniteModel, target: TargetKind) -> Result<usize> {
    if target.is_joint() {
        let paths = checked_power(model.state_count(), model.horizon())
            .ok_or(Error::EnumerationTooLarge)?;
        if paths > PATH_GUARD {
            return Err(Error::EnumerationTooLarge);
        }
        Ok(paths)
    } else {
        Ok(model.state_count())
    }
}

/// Per-branch empirical measure weights for the requested target, or `None`
/// when they carry no mass.
fn branch_target_weights(
    model: &FiniteModel,
    target: TargetKind,
    codes: &[u32],
    weights: &[f64],
) -> Option<Vec<f64>> {
    let t = model.horizon();
    let s_count = model.state_count();
    let g_last = model.potential_vec(t - 1);
    let raw: Vec<f64> = if target.is_updated() {
        codes
            .iter()
            .zip(weights)
            .map(|(&c, &w)| w * g_last[(c as usize) % s_count])
            .collect()
    } else {
        weights.to_vec()
    };
    let total = ksum(raw.iter().cloned());
    if total > 0.0 {
        Some(raw.iter().map(|&v| v / total).collect())
    } else {
        None
    }
}

/// Computes the expected empirical measure of a sampler exactly, by
/// integrating over every proposal and ancestor assignment.
///
/// # Errors
///
/// [`Error::UseMonteCarloMode`] when the outcome space exceeds the
/// enumeration guard; [`Error::EnumerationTooLarge`] when the joint table
/// itself would be too large; [`Error::DegenerateWeights`] when the sampler
/// halts or produces an empty measure with positive probability.
pub fn expected_estimator_exact(
    model: &FiniteModel,
    algorithm: &Algorithm,
    n: usize,
    target: TargetKind,
) -> Result<ExpectedEstimate> {
    let len = table_len(model, target)?;
    let law = exact_law(model, algorithm, n)?;
    if law.halted_mass > 0.0 {
        return Err(Error::DegenerateWeights);
    }

    let s_count = model.state_count();
    let mut cells = vec![NeumaierAcc::new(); len];
    for branch in &law.outcomes {
        let Some(measure) = branch_target_weights(model, target, &branch.codes, &branch.weights)
        else {
            return Err(Error::DegenerateWeights);
        };
        for (&code, &mass) in branch.codes.iter().zip(&measure) {
            let slot = if target.is_joint() {
                code as usize
            } else {
                (code as usize) % s_count
            };
            cells[slot].add(branch.prob * mass);
        }
    }

    Ok(ExpectedEstimate {
        table: cells.iter().map(NeumaierAcc::value).collect(),
        target,
        mode: EstimateMode::Exact,
        std_error: None,
        ess_min_inf: law.ess_min_inf,
        ess_min_two: law.ess_min_two,
    })
}

/// Computes the expected normalizer estimate of a sampler exactly. For an
/// unbiased sampler this equals the model's true normalizer.
///
/// # Errors
///
/// [`Error::UseMonteCarloMode`] on guard violation;
/// [`Error::DegenerateWeights`] when the sampler halts with positive
/// probability, since the estimate is then undefined on part of the space.
pub fn expected_normalizer_exact(
    model: &FiniteModel,
    algorithm: &Algorithm,
    n: usize,
) -> Result<f64> {
    let law = exact_law(model, algorithm, n)?;
    if law.halted_mass > 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let t = model.horizon();
    let s_count = model.state_count();
    let g_last = model.potential_vec(t - 1);
    let mut acc = NeumaierAcc::new();
    for branch in &law.outcomes {
        let z = ksum(
            branch
                .codes
                .iter()
                .zip(&branch.weights)
                .map(|(&c, &w)| w * g_last[(c as usize) % s_count]),
        ) / n as f64;
        acc.add(branch.prob * z);
    }
    Ok(acc.value())
}

/// Estimates the expected empirical measure by averaging `replications`
/// independent sampler runs, consuming the supplied generator sequentially.
///
/// # Errors
///
/// [`Error::NoReplications`] when `replications` is zero;
/// [`Error::EnumerationTooLarge`] when a joint table would be too large;
/// [`Error::DegenerateWeights`] when any replication halts or produces an
/// empty measure.
pub fn expected_estimator_mc(
    model: &FiniteModel,
    algorithm: &Algorithm,
    n: usize,
    target: TargetKind,
    replications: usize,
    rng: &mut dyn RngCore,
) -> Result<ExpectedEstimate> {
    if replications == 0 {
        return Err(Error::NoReplications);
    }
    let len = table_len(model, target)?;
    let s_count = model.state_count();

    let mut sums = vec![NeumaierAcc::new(); len];
    let mut squares = vec![NeumaierAcc::new(); len];
    let mut ess_min_inf = f64::INFINITY;
    let mut ess_min_two = f64::INFINITY;

    for _ in 0..replications {
        let output = match algorithm {
            Algorithm::Sis => run_sis(model, n, rng)?,
            Algorithm::Sir => run_sir(model, n, rng)?,
            Algorithm::Alpha { policy } => run_alpha_smc(model, n, policy, 1.0, rng)?,
        };
        for triple in &output.ess {
            if !triple.infinity.is_nan() {
                ess_min_inf = ess_min_inf.min(triple.infinity);
            }
            if !triple.order_two.is_nan() {
                ess_min_two = ess_min_two.min(triple.order_two);
            }
        }
        let mut one = vec![0.0f64; len];
        match target {
            TargetKind::UpdatedJoint | TargetKind::PredictiveJoint => {
                let measure = if target.is_updated() {
                    output.updated_joint()?
                } else {
                    output.predictive_joint()?
                };
                for (mass, path) in measure {
                    one[encode_path(&path, s_count)] += mass;
                }
            }
            TargetKind::UpdatedMarginal | TargetKind::PredictiveMarginal => {
                let measure = if target.is_updated() {
                    output.updated_marginal()?
                } else {
                    output.predictive_marginal()?
                };
                for (mass, x) in measure {
                    one[x] += mass;
                }
            }
        }
        for (slot, &v) in one.iter().enumerate() {
            sums[slot].add(v);
            squares[slot].add(v * v);
        }
    }

    let r = replications as f64;
    let table: Vec<f64> = sums.iter().map(|acc| acc.value() / r).collect();
    let std_error: Vec<f64> = if replications == 1 {
        vec![0.0; len]
    } else {
        squares
            .iter()
            .zip(&table)
            .map(|(sq, &mean)| {
                let var = ((sq.value() - r * mean * mean) / (r - 1.0)).max(0.0);
                (var / r).sqrt()
            })
            .collect()
    };

    Ok(ExpectedEstimate {
        table,
        target,
        mode: EstimateMode::MonteCarlo { replications },
        std_error: Some(std_error),
        ess_min_inf,
        ess_min_two,
    })
}
