//! Conditional-run oracles: expected normalizers of the conditional
//! samplers in closed form and by brute-force enumeration, exact transition
//! matrices of the iterated conditional kernels and of the particle Gibbs
//! operator, and total-variation decay curves.

use std::collections::BTreeMap;

use crate::conditional::{distinct_tuples, owner_by_slot};
use crate::model::{FiniteModel, ParamGridModel};
use crate::numerics::{ksum, NeumaierAcc};
use crate::oracle::enumerate::walk_product;
use crate::oracle::{checked_power, decode_path, encode_path, tv_dist, OracleTables, PATH_GUARD};
use crate::resampling::{select_alpha, AlphaPolicy};
use crate::timegrid::time_tuples;
use crate::{Error, Result};

/// Which conditional sampler a brute-force expectation integrates over.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionalAlgorithm {
    /// Frozen paths at fixed slots, resampling every step.
    Csmc,
    /// Frozen paths with redrawn slots under a mixing-matrix policy. The
    /// floor `zeta` is validated but does not alter the law.
    Calpha { policy: AlphaPolicy, zeta: f64 },
}

/// Which iterated conditional kernel a transition matrix describes.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelVariant {
    Icsmc,
    Icalpha { policy: AlphaPolicy, zeta: f64 },
}

fn check_frozen(model: &FiniteModel, frozen: &[Vec<usize>], n: usize) -> Result<()> {
    let i = frozen.len();
    if i == 0 {
        return Err(Error::Dimension("at least one frozen path required".into()));
    }
    if i > n {
        return Err(Error::TooManyFrozenPaths);
    }
    let t = model.horizon();
    let s_count = model.state_count();
    for (j, path) in frozen.iter().enumerate() {
        if path.len() != t {
            return Err(Error::Dimension(format!(
                "frozen path {j} has length {} for horizon {t}",
                path.len()
            )));
        }
        if path.iter().any(|&x| x >= s_count) {
            return Err(Error::Dimension(format!(
                "frozen path {j} leaves the state space of {s_count}"
            )));
        }
    }
    Ok(())
}

/// Expected normalizer estimate of a conditional run, in closed form.
///
/// Without `zeta` this is the exact expectation for the fixed-slot
/// conditional sampler: a sum over survival-time tuples weighted by
/// `(N-i)` powers, window functionals started from the frozen states, and
/// partial normalizers. With `zeta` it is instead an upper bound valid for
/// any matrix-resampling policy whose catalogue keeps every entry at least
/// `zeta` and an ESS floor of `zeta * N`.
///
/// # Errors
///
/// [`Error::TooManyFrozenPaths`] when `n` is smaller than the number of
/// frozen paths; [`Error::Dimension`] on shape violations or a `zeta`
/// outside `(0, 1]`.
pub fn csmc_expected_normalizer_closed_form(
    oracle: &OracleTables,
    frozen: &[Vec<usize>],
    n: usize,
    zeta: Option<f64>,
) -> Result<f64> {
    check_frozen(oracle.model(), frozen, n)?;
    if let Some(z) = zeta {
        if !(z > 0.0 && z <= 1.0) {
            return Err(Error::Dimension("ess floor must lie in (0, 1]".into()));
        }
    }
    let t = oracle.horizon();
    let i = frozen.len();
    let nf = n as f64;

    let mut acc = NeumaierAcc::new();
    for ell in 1..=t + 1 {
        for taus in time_tuples(ell, t + 1, t + 1) {
            let mut term = oracle.g0(taus[0]);
            for m in 0..ell - 1 {
                term *= ksum(
                    frozen
                        .iter()
                        .map(|path| oracle.g_fn(taus[m], taus[m + 1], path[taus[m] - 1])),
                );
            }
            let coeff = match zeta {
                None => (nf - i as f64).powi((t + 1 - ell) as i32) / nf.powi(t as i32),
                Some(z) => {
                    let zn = z * nf;
                    let off_start = if taus[0] > 1 {
                        (nf - i as f64) / zn
                    } else {
                        1.0
                    };
                    zn.powi((t + 1 - ell) as i32) * off_start / (nf * zn.powi(t as i32 - 1))
                }
            };
            acc.add(coeff * term);
        }
    }
    Ok(acc.value())
}

type CondKey = (Vec<u32>, Vec<u64>, Vec<u8>);

struct CondBranch {
    prob: f64,
    codes: Vec<u32>,
    weights: Vec<f64>,
}

struct CondLaw {
    branches: Vec<CondBranch>,
    /// Probability that a free resampling draw finds no mass.
    halted_mass: f64,
    /// Probability that no distinct slot tuple has positive probability.
    catalogue_degenerate_mass: f64,
}

fn guard_conditional(s_count: usize, t: usize, n: usize) -> Result<()> {
    let s_ln = (s_count as f64).ln();
    let cost = (n * t) as f64 * s_ln + n as f64 * (n as f64).ln() + n as f64 * s_ln;
    if cost > 5e8f64.ln() {
        return Err(Error::EnumerationTooLarge);
    }
    Ok(())
}

/// Merged per-slot proposal options reached by drawing an ancestor with the
/// given unnormalized mass and then a transition.
fn merged_options(
    codes: &[u32],
    ancestor_mass: &[f64],
    total: f64,
    kernel: &[Vec<f64>],
    s_count: usize,
) -> Vec<(u32, f64)> {
    let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
    for (a, &mass) in ancestor_mass.iter().enumerate() {
        if mass <= 0.0 {
            continue;
        }
        let pa = mass / total;
        let from = (codes[a] as usize) % s_count;
        for (to, &pm) in kernel[from].iter().enumerate() {
            if pm > 0.0 {
                *merged
                    .entry(codes[a] * s_count as u32 + to as u32)
                    .or_insert(0.0) += pa * pm;
            }
        }
    }
    merged.into_iter().collect()
}

/// Enumerates every outcome of a conditional run, mirroring the sampler's
/// law exactly: frozen slots are forced, free ancestors draw from the same
/// categoricals the sampler uses, and the branch probabilities accumulate
/// in deterministic order.
fn conditional_law(
    model: &FiniteModel,
    frozen: &[Vec<usize>],
    n: usize,
    algorithm: &ConditionalAlgorithm,
) -> Result<CondLaw> {
    if n == 0 {
        return Err(Error::Dimension("particle count must be positive".into()));
    }
    let i = frozen.len();
    if matches!(algorithm, ConditionalAlgorithm::Calpha { .. }) && i > 2 {
        return Err(Error::TooManyFrozenPaths);
    }
    check_frozen(model, frozen, n)?;
    if let ConditionalAlgorithm::Calpha { zeta, .. } = algorithm {
        if !(*zeta > 0.0 && *zeta <= 1.0) {
            return Err(Error::Dimension("ess floor must lie in (0, 1]".into()));
        }
    }
    let t = model.horizon();
    let s_count = model.state_count();
    guard_conditional(s_count, t, n)?;

    // Path-prefix code of frozen path `j` at each generation.
    let frozen_codes: Vec<Vec<u32>> = frozen
        .iter()
        .map(|path| {
            (0..t)
                .map(|s| encode_path(&path[..=s], s_count) as u32)
                .collect()
        })
        .collect();
    let initial_options: Vec<(u32, f64)> = model
        .initial()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(x, &p)| (x as u32, p))
        .collect();
    let tuples = distinct_tuples(n, i);

    let mut states: BTreeMap<CondKey, NeumaierAcc> = BTreeMap::new();
    let seed_generation =
        |tuple: &[usize], base: f64, states: &mut BTreeMap<CondKey, NeumaierAcc>| {
            let owner = owner_by_slot(tuple, n);
            let options: Vec<Vec<(u32, f64)>> = (0..n)
                .map(|slot| match owner[slot] {
                    Some(j) => vec![(frozen_codes[j][0], 1.0)],
                    None => initial_options.clone(),
                })
                .collect();
            let weights = match algorithm {
                ConditionalAlgorithm::Csmc => vec![1.0f64.to_bits()],
                ConditionalAlgorithm::Calpha { .. } => vec![1.0f64.to_bits(); n],
            };
            let tuple_key: Vec<u8> = tuple.iter().map(|&v| v as u8).collect();
            let mut chosen = Vec::with_capacity(n);
            walk_product(&options, 0, base, &mut chosen, &mut |p, codes| {
                let key = (codes.to_vec(), weights.clone(), tuple_key.clone());
                states.entry(key).or_default().add(p);
            });
        };
    match algorithm {
        ConditionalAlgorithm::Csmc => {
            let slots: Vec<usize> = (0..i).collect();
            seed_generation(&slots, 1.0, &mut states);
        }
        ConditionalAlgorithm::Calpha { .. } => {
            let base = 1.0 / tuples.len() as f64;
            for tuple in &tuples {
                seed_generation(tuple, base, &mut states);
            }
        }
    }

    let mut halted = NeumaierAcc::new();
    let mut catalogue_degenerate = NeumaierAcc::new();

    // The loop walks generations; `s` picks a column of `frozen_codes`, not a
    // row, so an iterator over the outer vec would be the wrong shape.
    #[allow(clippy::needless_range_loop)]
    for s in 1..t {
        let g_prev_vec = model.potential_vec(s - 1);
        let kernel = model.transition(s);
        let mut next: BTreeMap<CondKey, NeumaierAcc> = BTreeMap::new();

        for (key, acc) in &states {
            let p = acc.value();
            if p <= 0.0 {
                continue;
            }
            let (codes, w_bits, tuple_key) = key;
            let g_prev: Vec<f64> = codes
                .iter()
                .map(|&c| g_prev_vec[(c as usize) % s_count])
                .collect();

            match algorithm {
                ConditionalAlgorithm::Csmc => {
                    let w = f64::from_bits(w_bits[0]);
                    let total = ksum(g_prev.iter().cloned());
                    if n > i && total <= 0.0 {
                        halted.add(p);
                        continue;
                    }
                    let new_w = w * total / n as f64;
                    let free_options = if n > i {
                        merged_options(codes, &g_prev, total, kernel, s_count)
                    } else {
                        Vec::new()
                    };
                    let options: Vec<Vec<(u32, f64)>> = (0..n)
                        .map(|slot| {
                            if slot < i {
                                vec![(frozen_codes[slot][s], 1.0)]
                            } else {
                                free_options.clone()
                            }
                        })
                        .collect();
                    let new_bits = vec![new_w.to_bits()];
                    let mut chosen = Vec::with_capacity(n);
                    walk_product(&options, 0, p, &mut chosen, &mut |q, new_codes| {
                        let key = (new_codes.to_vec(), new_bits.clone(), Vec::new());
                        next.entry(key).or_default().add(q);
                    });
                }
                ConditionalAlgorithm::Calpha { policy, .. } => {
                    let w: Vec<f64> = w_bits.iter().map(|&b| f64::from_bits(b)).collect();
                    let current: Vec<usize> = tuple_key.iter().map(|&v| v as usize).collect();
                    let alpha = select_alpha(policy, &w, s - 1)?;
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
                    let tuple_mass: Vec<f64> = tuples
                        .iter()
                        .map(|f| {
                            f.iter()
                                .zip(&current)
                                .map(|(&to, &from)| alpha.entry(to, from))
                                .product()
                        })
                        .collect();
                    let tuple_total = ksum(tuple_mass.iter().cloned());
                    if tuple_total <= 0.0 {
                        catalogue_degenerate.add(p);
                        continue;
                    }
                    let new_bits: Vec<u64> = new_w.iter().map(|v| v.to_bits()).collect();

                    for (f, &mass) in tuples.iter().zip(&tuple_mass) {
                        if mass <= 0.0 {
                            continue;
                        }
                        let p_tuple = p * mass / tuple_total;
                        let owner = owner_by_slot(f, n);
                        let mut dead_free_row = false;
                        let mut options: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
                        for slot in 0..n {
                            match owner[slot] {
                                Some(j) => options.push(vec![(frozen_codes[j][s], 1.0)]),
                                None => {
                                    if new_w[slot] <= 0.0 {
                                        dead_free_row = true;
                                        break;
                                    }
                                    let row: Vec<f64> = alpha
                                        .row(slot)
                                        .iter()
                                        .zip(w.iter().zip(&g_prev))
                                        .map(|(&a, (&wk, &gk))| a * wk * gk)
                                        .collect();
                                    options.push(merged_options(
                                        codes,
                                        &row,
                                        new_w[slot],
                                        kernel,
                                        s_count,
                                    ));
                                }
                            }
                        }
                        if dead_free_row {
                            halted.add(p_tuple);
                            continue;
                        }
                        let tuple_key: Vec<u8> = f.iter().map(|&v| v as u8).collect();
                        let mut chosen = Vec::with_capacity(n);
                        walk_product(&options, 0, p_tuple, &mut chosen, &mut |q, new_codes| {
                            let key = (new_codes.to_vec(), new_bits.clone(), tuple_key.clone());
                            next.entry(key).or_default().add(q);
                        });
                    }
                }
            }
        }
        states = next;
    }

    let branches = states
        .iter()
        .filter_map(|(key, acc)| {
            let prob = acc.value();
            if prob <= 0.0 {
                return None;
            }
            let weights = match algorithm {
                ConditionalAlgorithm::Csmc => vec![f64::from_bits(key.1[0]); n],
                ConditionalAlgorithm::Calpha { .. } => {
                    key.1.iter().map(|&b| f64::from_bits(b)).collect()
                }
            };
            Some(CondBranch {
                prob,
                codes: key.0.clone(),
                weights,
            })
        })
        .collect();

    Ok(CondLaw {
        branches,
        halted_mass: halted.value(),
        catalogue_degenerate_mass: catalogue_degenerate.value(),
    })
}

fn check_law_complete(law: &CondLaw) -> Result<()> {
    if law.catalogue_degenerate_mass > 0.0 {
        return Err(Error::CatalogueDegenerateForConditioning);
    }
    if law.halted_mass > 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok(())
}

/// Expected normalizer estimate of a conditional run, by exact enumeration
/// of every slot draw, ancestor draw, and proposal. Independent of the
/// closed form above: it integrates the sampler's own law.
///
/// # Errors
///
/// [`Error::EnumerationTooLarge`] on guard violation;
/// [`Error::DegenerateWeights`] or
/// [`Error::CatalogueDegenerateForConditioning`] when the sampler fails with
/// positive probability; shape errors as the sampler itself.
pub fn csmc_expected_normalizer_bruteforce(
    model: &FiniteModel,
    frozen: &[Vec<usize>],
    n: usize,
    algorithm: &ConditionalAlgorithm,
) -> Result<f64> {
    let law = conditional_law(model, frozen, n, algorithm)?;
    check_law_complete(&law)?;
    let t = model.horizon();
    let s_count = model.state_count();
    let g_last = model.potential_vec(t - 1);
    let mut acc = NeumaierAcc::new();
    for branch in &law.branches {
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

/// Terminal-selection law of one conditional run: the probability of each
/// path code being returned.
fn selection_row(
    model: &FiniteModel,
    law: &CondLaw,
    paths: usize,
    weighted: bool,
) -> Result<Vec<f64>> {
    let t = model.horizon();
    let s_count = model.state_count();
    let g_last = model.potential_vec(t - 1);
    let mut cells = vec![NeumaierAcc::new(); paths];
    for branch in &law.branches {
        let sel: Vec<f64> = branch
            .codes
            .iter()
            .zip(&branch.weights)
            .map(|(&c, &w)| {
                let g = g_last[(c as usize) % s_count];
                if weighted {
                    w * g
                } else {
                    g
                }
            })
            .collect();
        let total = ksum(sel.iter().cloned());
        if total <= 0.0 {
            return Err(Error::DegenerateWeights);
        }
        for (&code, &mass) in branch.codes.iter().zip(&sel) {
            cells[code as usize].add(branch.prob * mass / total);
        }
    }
    Ok(cells.iter().map(NeumaierAcc::value).collect())
}

/// Exact transition matrix of the iterated conditional kernel on path
/// space: row `y` is the law of the path returned by one conditional run
/// pinned to `y`.
///
/// # Errors
///
/// As [`csmc_expected_normalizer_bruteforce`], plus
/// [`Error::DegenerateWeights`] when some terminal selection carries no
/// mass.
pub fn icsmc_kernel_matrix(
    oracle: &OracleTables,
    n: usize,
    variant: &KernelVariant,
) -> Result<Vec<Vec<f64>>> {
    let model = oracle.model();
    let (algorithm, weighted) = match variant {
        KernelVariant::Icsmc => (ConditionalAlgorithm::Csmc, false),
        KernelVariant::Icalpha { policy, zeta } => (
            ConditionalAlgorithm::Calpha {
                policy: policy.clone(),
                zeta: *zeta,
            },
            true,
        ),
    };
    let paths = oracle.path_count();
    let t = model.horizon();
    let s_count = model.state_count();
    let mut matrix = Vec::with_capacity(paths);
    for code in 0..paths {
        let y = decode_path(code, s_count, t);
        let law = conditional_law(model, &[y], n, &algorithm)?;
        check_law_complete(&law)?;
        matrix.push(selection_row(model, &law, paths, weighted)?);
    }
    Ok(matrix)
}

/// Exact transition matrix of the particle Gibbs operator on the product
/// space of parameter and path, indexed `theta * S^t + path_code`. Each row
/// composes the exact parameter posterior given the path with the iterated
/// conditional kernel under the drawn parameter.
///
/// # Errors
///
/// [`Error::ParameterPosteriorDegenerate`] when some path has zero mass
/// under every parameter; [`Error::EnumerationTooLarge`] on guard
/// violations; otherwise as [`icsmc_kernel_matrix`].
pub fn pg_transition_matrix(
    grid: &ParamGridModel,
    n: usize,
    variant: &KernelVariant,
) -> Result<Vec<Vec<f64>>> {
    let s_count = grid.state_count();
    let t = grid.horizon();
    let paths = checked_power(s_count, t).ok_or(Error::EnumerationTooLarge)?;
    if paths > PATH_GUARD {
        return Err(Error::EnumerationTooLarge);
    }
    let kernels: Vec<Vec<Vec<f64>>> = (0..grid.grid_len())
        .map(|theta| {
            let oracle = super::build_oracle(grid.model(theta))?;
            icsmc_kernel_matrix(&oracle, n, variant)
        })
        .collect::<Result<_>>()?;

    let dim = grid.grid_len() * paths;
    let mut matrix = vec![vec![0.0f64; dim]; dim];
    for code in 0..paths {
        let path = decode_path(code, s_count, t);
        let posterior = grid.posterior_given_path(&path)?;
        // The transition ignores the incoming parameter, so every parameter
        // block shares one row template.
        let mut template = vec![0.0f64; dim];
        for (theta, &q) in posterior.iter().enumerate() {
            if q <= 0.0 {
                continue;
            }
            for (dest, &k) in kernels[theta][code].iter().enumerate() {
                template[theta * paths + dest] = q * k;
            }
        }
        for theta in 0..grid.grid_len() {
            matrix[theta * paths + code] = template.clone();
        }
    }
    Ok(matrix)
}

/// Stationary law of the particle Gibbs operator: the normalized joint mass
/// of parameter and path, indexed as in [`pg_transition_matrix`].
///
/// # Errors
///
/// [`Error::ParameterPosteriorDegenerate`] when the whole grid carries no
/// mass; [`Error::EnumerationTooLarge`] on guard violation.
pub fn pg_stationary(grid: &ParamGridModel) -> Result<Vec<f64>> {
    let s_count = grid.state_count();
    let t = grid.horizon();
    let paths = checked_power(s_count, t).ok_or(Error::EnumerationTooLarge)?;
    if paths > PATH_GUARD {
        return Err(Error::EnumerationTooLarge);
    }
    let mut raw = Vec::with_capacity(grid.grid_len() * paths);
    for theta in 0..grid.grid_len() {
        for code in 0..paths {
            let path = decode_path(code, s_count, t);
            raw.push(grid.joint_mass(theta, &path)?);
        }
    }
    let total = ksum(raw.iter().cloned());
    if total <= 0.0 {
        return Err(Error::ParameterPosteriorDegenerate);
    }
    Ok(raw.iter().map(|&v| v / total).collect())
}

/// Worst-case total variation between the `k`-step law and the stationary
/// table, for `k = 1..=k_max`: entry `k - 1` is `max_y tv(P^k(y, .), pi)`.
///
/// # Panics
///
/// When the matrix is not square or does not match `pi`'s length.
pub fn kernel_tv_decay(p: &[Vec<f64>], pi: &[f64], k_max: usize) -> Vec<f64> {
    let dim = pi.len();
    assert_eq!(p.len(), dim, "kernel must be square and match the table");
    for row in p {
        assert_eq!(row.len(), dim, "kernel must be square and match the table");
    }
    let mut current = p.to_vec();
    let mut out = Vec::with_capacity(k_max);
    for step in 0..k_max {
        let worst = current
            .iter()
            .map(|row| tv_dist(row, pi).expect("dimensions checked above"))
            .fold(0.0f64, f64::max);
        out.push(worst);
        if step + 1 < k_max {
            let mut next = vec![vec![0.0f64; dim]; dim];
            for (row, slot) in current.iter().zip(&mut next) {
                for dest in 0..dim {
                    slot[dest] = ksum((0..dim).map(|mid| row[mid] * p[mid][dest]));
                }
            }
            current = next;
        }
    }
    out
}
