//! Experiment drivers: each config kind expands into a deterministic grid of
//! cells, cells run in parallel, and every cell yields report rows.
//!
//! Randomized cells draw from substreams of one ChaCha20 generator seeded by
//! the config `seed`: cell `i` (counted per experiment, documented in
//! `docs/config.md`) uses stream `i`, so reruns with the same seed reproduce
//! every row regardless of thread count.

use anyhow::{anyhow, bail, Context, Result};
use feynkac::bounds::{bound_report, kl_bound};
use feynkac::engine::{run_alpha_smc, run_sir, run_sis, SmcOutput, TargetKind};
use feynkac::ess::{entropic_ess, p_ess};
use feynkac::model::{FiniteModel, ParamGridModel};
use feynkac::oracle::{
    build_oracle, chi2_div, expected_estimator_exact, expected_estimator_mc,
    expected_normalizer_exact, icsmc_kernel_matrix, kernel_tv_decay, kl_div, pg_stationary,
    pg_transition_matrix, tv_dist, Algorithm, KernelVariant, OracleTables,
};
use feynkac::resampling::AlphaPolicy;
use feynkac::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind, ModelChoice};

/// One report row; `None` cells print empty.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub experiment: &'static str,
    pub model_id: String,
    pub algorithm: String,
    pub policy: String,
    pub n: usize,
    pub mode: &'static str,
    pub kl: Option<f64>,
    pub kl_bound: Option<f64>,
    pub tv: Option<f64>,
    pub chi2: Option<f64>,
    pub ess_min_inf: Option<f64>,
    pub ess_min_2: Option<f64>,
    pub assumption_ok: Option<bool>,
    pub eps_minorization: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub seed: u64,
}

impl ResultRow {
    fn blank(config: &ExperimentConfig, n: usize, mode: &'static str) -> Self {
        ResultRow {
            experiment: config.kind.name(),
            model_id: config.model_id.clone(),
            algorithm: config.smc.algorithm.label().to_string(),
            policy: config.smc.policy_label.clone(),
            n,
            mode,
            kl: None,
            kl_bound: None,
            tv: None,
            chi2: None,
            ess_min_inf: None,
            ess_min_2: None,
            assumption_ok: None,
            eps_minorization: None,
            runtime_ms: None,
            seed: config.seed,
        }
    }
}

/// Runs the configured experiment and returns its rows in deterministic
/// order: ascending particle count, exact rows before sampled rows.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let rows = match config.kind {
        ExperimentKind::KlVsN => kl_vs_n(config)?,
        ExperimentKind::BoundCheck => bound_check(config)?,
        ExperimentKind::EssSuite => ess_suite(config)?,
        ExperimentKind::NormalizerCheck => normalizer_check(config)?,
        ExperimentKind::IcsmcMinorization => icsmc_minorization(config)?,
        ExperimentKind::TvDecay => tv_decay(config)?,
        ExperimentKind::PgErgodicity => pg_ergodicity(config)?,
    };
    for row in &rows {
        if row.mode == "exact" && row.assumption_ok == Some(true) {
            if let (Some(kl), Some(bound)) = (row.kl, row.kl_bound) {
                if kl > bound + 1e-12 {
                    bail!(
                        "internal invariant violated: kl {kl:.17e} exceeds its bound \
                         {bound:.17e} at N = {}",
                        row.n
                    );
                }
            }
        }
    }
    Ok(rows)
}

fn cell_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn single_model(config: &ExperimentConfig) -> Result<&FiniteModel> {
    match &config.model {
        ModelChoice::Single(model) => Ok(model),
        ModelChoice::Grid(_) => bail!("{} runs on a single model", config.kind.name()),
    }
}

fn grid_model(config: &ExperimentConfig) -> Result<&ParamGridModel> {
    match &config.model {
        ModelChoice::Grid(grid) => Ok(grid),
        ModelChoice::Single(_) => bail!("{} runs on a parameter grid", config.kind.name()),
    }
}

/// Policy backing the resampling step, for overlap constants: plain
/// multinomial resampling mixes like the uniform matrix, sequential
/// importance sampling never mixes.
fn report_policy(algorithm: &Algorithm) -> AlphaPolicy {
    match algorithm {
        Algorithm::Sis => AlphaPolicy::Identity,
        Algorithm::Sir => AlphaPolicy::Uniform,
        Algorithm::Alpha { policy } => policy.clone(),
    }
}

fn conditional_variant(config: &ExperimentConfig) -> Result<KernelVariant> {
    match &config.smc.algorithm {
        Algorithm::Sir => Ok(KernelVariant::Icsmc),
        Algorithm::Alpha { policy } => Ok(KernelVariant::Icalpha {
            policy: policy.clone(),
            zeta: config.smc.zeta,
        }),
        Algorithm::Sis => bail!(
            "{} iterates a conditional kernel; use algorithm = \"sir\" or \"alpha\"",
            config.kind.name()
        ),
    }
}

fn bound_for(oracle: &OracleTables, config: &ExperimentConfig, n: usize) -> Result<Option<f64>> {
    match kl_bound(
        oracle,
        &config.smc.algorithm,
        config.smc.target,
        n,
        config.smc.zeta,
        &config.smc.assumptions,
    ) {
        Ok(value) => Ok(Some(value)),
        Err(Error::NoApplicableBound) => Ok(None),
        Err(e) => Err(e).context("divergence bound failed"),
    }
}

/// Whether the assumptions behind the reported bound held on this cell: a
/// declared form applied, and matrix samplers kept the `ζN` effective
/// sample size floor their analysis requires.
fn assumptions_hold(
    config: &ExperimentConfig,
    n: usize,
    bound: Option<f64>,
    ess_min_inf: Option<f64>,
) -> bool {
    let floor_ok = match &config.smc.algorithm {
        Algorithm::Alpha { .. } => match ess_min_inf {
            Some(value) => value >= config.smc.zeta * n as f64 - 1e-9,
            None => true,
        },
        _ => true,
    };
    bound.is_some() && floor_ok
}

fn divergences_against(
    oracle: &OracleTables,
    target: TargetKind,
    table: &[f64],
) -> Result<(f64, f64, f64)> {
    let truth = oracle.target(target);
    let kl = kl_div(truth, table)?;
    let tv = tv_dist(truth, table)?;
    let chi2 = chi2_div(truth, table)?;
    Ok((kl, tv, chi2))
}

fn run_once(
    config: &ExperimentConfig,
    model: &FiniteModel,
    n: usize,
    rng: &mut ChaCha20Rng,
) -> feynkac::Result<SmcOutput<usize>> {
    match &config.smc.algorithm {
        Algorithm::Sis => run_sis(model, n, rng),
        Algorithm::Sir => run_sir(model, n, rng),
        Algorithm::Alpha { policy } => run_alpha_smc(model, n, policy, config.smc.zeta, rng),
    }
}

fn kl_vs_n(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let model = single_model(config)?;
    let oracle = build_oracle(model)?;
    let target = config.smc.target;
    config
        .smc
        .n_list
        .par_iter()
        .enumerate()
        .map(|(i, &n)| -> Result<ResultRow> {
            let estimate = match expected_estimator_exact(model, &config.smc.algorithm, n, target) {
                Ok(estimate) => estimate,
                Err(Error::UseMonteCarloMode) => {
                    let mut rng = cell_rng(config.seed, i as u64);
                    expected_estimator_mc(
                        model,
                        &config.smc.algorithm,
                        n,
                        target,
                        config.smc.replications,
                        &mut rng,
                    )?
                }
                Err(e) => return Err(e).context("exact estimator law failed"),
            };
            let mode = match estimate.std_error {
                None => "exact",
                Some(_) => "mc",
            };
            let (kl, tv, chi2) = divergences_against(&oracle, target, &estimate.table)?;
            let bound = bound_for(&oracle, config, n)?;
            let mut row = ResultRow::blank(config, n, mode);
            row.kl = Some(kl);
            row.tv = Some(tv);
            row.chi2 = Some(chi2);
            row.kl_bound = bound;
            row.ess_min_inf = Some(estimate.ess_min_inf);
            row.ess_min_2 = Some(estimate.ess_min_two);
            row.assumption_ok = Some(assumptions_hold(
                config,
                n,
                bound,
                Some(estimate.ess_min_inf),
            ));
            Ok(row)
        })
        .collect()
}

fn bound_check(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let model = single_model(config)?;
    let oracle = build_oracle(model)?;
    let policy = report_policy(&config.smc.algorithm);
    config
        .smc
        .n_list
        .par_iter()
        .map(|&n| -> Result<ResultRow> {
            let report = bound_report(&oracle, n, config.smc.zeta, &policy, 1)?;
            let bound = bound_for(&oracle, config, n)?;
            let kl = match expected_estimator_exact(
                model,
                &config.smc.algorithm,
                n,
                config.smc.target,
            ) {
                Ok(estimate) => Some(kl_div(oracle.target(config.smc.target), &estimate.table)?),
                Err(Error::UseMonteCarloMode) => None,
                Err(e) => return Err(e).context("exact estimator law failed"),
            };
            let mut row = ResultRow::blank(config, n, "exact");
            row.kl = kl;
            row.kl_bound = bound;
            row.eps_minorization = report.eps_minorization;
            row.assumption_ok = Some(assumptions_hold(config, n, bound, None));
            Ok(row)
        })
        .collect()
}

fn ess_suite(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config
        .smc
        .n_list
        .par_iter()
        .enumerate()
        .map(|(i, &n)| -> Result<ResultRow> {
            let mut rng = cell_rng(config.seed, i as u64);
            let mut min_inf = f64::INFINITY;
            let mut min_two = f64::INFINITY;
            let mut all_ok = true;
            for _ in 0..config.smc.replications {
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                if w.iter().sum::<f64>() == 0.0 {
                    continue;
                }
                let ent = entropic_ess(&w)?;
                let near_one = p_ess(&w, 1.0 + 1e-6)?;
                let two = p_ess(&w, 2.0)?;
                let inf = p_ess(&w, f64::INFINITY)?;
                min_inf = min_inf.min(inf);
                min_two = min_two.min(two);
                let ok = (1.0 - 1e-9..=n as f64 + 1e-9).contains(&inf)
                    && inf <= two + 1e-9
                    && two <= near_one + 1e-9
                    && near_one <= n as f64 + 1e-9
                    && ent <= n as f64 + 1e-9
                    && ent >= 1.0 - 1e-9
                    && (near_one - ent).abs() <= 1e-4 * ent;
                all_ok &= ok;
            }
            let mut row = ResultRow::blank(config, n, "mc");
            row.ess_min_inf = Some(min_inf);
            row.ess_min_2 = Some(min_two);
            row.assumption_ok = Some(all_ok);
            Ok(row)
        })
        .collect()
}

fn normalizer_check(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let model = single_model(config)?;
    let oracle = build_oracle(model)?;
    let z = oracle.z_final();
    config
        .smc
        .n_list
        .par_iter()
        .enumerate()
        .map(|(i, &n)| -> Result<ResultRow> {
            match expected_normalizer_exact(model, &config.smc.algorithm, n) {
                Ok(expected) => {
                    let mut row = ResultRow::blank(config, n, "exact");
                    row.assumption_ok = Some((expected - z).abs() <= 1e-12 * z.abs().max(1.0));
                    Ok(row)
                }
                Err(Error::UseMonteCarloMode) => {
                    let mut rng = cell_rng(config.seed, i as u64);
                    let r = config.smc.replications;
                    let mut values = Vec::with_capacity(r);
                    let mut min_inf = f64::INFINITY;
                    let mut min_two = f64::INFINITY;
                    for _ in 0..r {
                        let output = run_once(config, model, n, &mut rng)?;
                        values.push(output.z);
                        for triple in &output.ess {
                            if !triple.infinity.is_nan() {
                                min_inf = min_inf.min(triple.infinity);
                            }
                            if !triple.order_two.is_nan() {
                                min_two = min_two.min(triple.order_two);
                            }
                        }
                    }
                    let mean = values.iter().sum::<f64>() / r as f64;
                    let se = if r > 1 {
                        let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                        (ss / ((r - 1) as f64 * r as f64)).sqrt()
                    } else {
                        0.0
                    };
                    let ok = if se > 0.0 {
                        (mean - z).abs() <= 3.0 * se
                    } else {
                        (mean - z).abs() <= 1e-12 * z.abs().max(1.0)
                    };
                    let mut row = ResultRow::blank(config, n, "mc");
                    row.ess_min_inf = Some(min_inf);
                    row.ess_min_2 = Some(min_two);
                    row.assumption_ok = Some(ok);
                    Ok(row)
                }
                Err(e) => Err(e).context("exact normalizer law failed"),
            }
        })
        .collect()
}

/// Kernel matrix plus its minorization floor from the model constants.
fn kernel_with_floor(
    config: &ExperimentConfig,
    oracle: &OracleTables,
    n: usize,
) -> Result<(Vec<Vec<f64>>, Option<f64>)> {
    let variant = conditional_variant(config)?;
    let matrix = icsmc_kernel_matrix(oracle, n, &variant)?;
    let beta = feynkac::bounds::beta_constant(oracle);
    let (policy, zeta) = match &variant {
        KernelVariant::Icsmc => (AlphaPolicy::Uniform, 1.0),
        KernelVariant::Icalpha { policy, zeta } => (policy.clone(), *zeta),
    };
    let eps = match feynkac::resampling::kappa(&policy.catalogue(n)) {
        Ok(kappa) => feynkac::bounds::minorization_eps(oracle.horizon(), n, beta, zeta, kappa).ok(),
        Err(Error::SingleParticle) => None,
        Err(e) => return Err(e.into()),
    };
    Ok((matrix, eps))
}

fn icsmc_minorization(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let model = single_model(config)?;
    let oracle = build_oracle(model)?;
    let pi = oracle.target(TargetKind::UpdatedJoint);
    config
        .smc
        .n_list
        .par_iter()
        .map(|&n| -> Result<ResultRow> {
            let (matrix, eps) = kernel_with_floor(config, &oracle, n)?;
            let stochastic = matrix
                .iter()
                .all(|r| (r.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let mut image = vec![0.0; pi.len()];
            for (y, row) in matrix.iter().enumerate() {
                for (x, p) in row.iter().enumerate() {
                    image[x] += pi[y] * p;
                }
            }
            let invariant = image.iter().zip(pi).all(|(a, b)| (a - b).abs() <= 1e-9);
            let floor_ok = match eps {
                Some(eps) => matrix
                    .iter()
                    .all(|row| row.iter().zip(pi).all(|(p, mass)| *p >= eps * mass - 1e-12)),
                None => true,
            };
            let mut row = ResultRow::blank(config, n, "exact");
            row.eps_minorization = eps;
            row.assumption_ok = Some(stochastic && invariant && floor_ok);
            Ok(row)
        })
        .collect()
}

fn tv_decay(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let model = single_model(config)?;
    let oracle = build_oracle(model)?;
    let pi = oracle.target(TargetKind::UpdatedJoint);
    let k_max = config
        .chain
        .as_ref()
        .map(|c| c.k_max)
        .ok_or_else(|| anyhow!("tv_decay requires chain.k_max"))?;
    config
        .smc
        .n_list
        .par_iter()
        .map(|&n| -> Result<ResultRow> {
            let (matrix, eps) = kernel_with_floor(config, &oracle, n)?;
            let decay = kernel_tv_decay(&matrix, pi, k_max);
            let geometric_ok = match eps {
                Some(eps) => decay
                    .iter()
                    .enumerate()
                    .all(|(idx, tv)| *tv <= (1.0 - eps).powi(idx as i32 + 1) + 1e-12),
                None => true,
            };
            let monotone = decay.windows(2).all(|w| w[1] <= w[0] + 1e-12);
            let mut row = ResultRow::blank(config, n, "exact");
            row.tv = decay.last().copied();
            row.eps_minorization = eps;
            row.assumption_ok = Some(geometric_ok && monotone);
            Ok(row)
        })
        .collect()
}

fn pg_ergodicity(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let grid = grid_model(config)?;
    let variant = conditional_variant(config)?;
    let pi = pg_stationary(grid)?;
    let chain = config
        .chain
        .ok_or_else(|| anyhow!("pg_ergodicity requires a chain block"))?;
    let theta_truth = theta_marginal(grid, &pi)?;
    let start = best_start(grid, &pi);

    config
        .smc
        .n_list
        .par_iter()
        .enumerate()
        .map(|(i, &n)| -> Result<Vec<ResultRow>> {
            let matrix = pg_transition_matrix(grid, n, &variant)?;
            let mut image = vec![0.0; pi.len()];
            for (from, row) in matrix.iter().enumerate() {
                for (to, p) in row.iter().enumerate() {
                    image[to] += pi[from] * p;
                }
            }
            let mut exact = ResultRow::blank(config, n, "exact");
            exact.tv = Some(tv_dist(&image, &pi)?);
            exact.assumption_ok = Some(image.iter().zip(&pi).all(|(a, b)| (a - b).abs() <= 1e-10));

            let mut counts = vec![0usize; grid.grid_len()];
            let mut total = 0usize;
            for c in 0..chain.chain_count {
                let stream = (i * chain.chain_count + c) as u64;
                let mut rng = cell_rng(config.seed, stream);
                let adaptive = match &variant {
                    KernelVariant::Icsmc => None,
                    KernelVariant::Icalpha { policy, zeta } => Some((policy, *zeta)),
                };
                let mut state = start.clone();
                for _ in 0..chain.k_max {
                    state = feynkac::conditional::pg_step(
                        grid, state.0, &state.1, n, adaptive, &mut rng,
                    )?;
                    counts[state.0] += 1;
                    total += 1;
                }
            }
            let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
            let in_band = theta_truth.iter().zip(&counts).all(|(&p, &c)| {
                let sd = (p * (1.0 - p) * total as f64).sqrt();
                (c as f64 - p * total as f64).abs() <= 3.0 * sd.max(1.0)
            });
            let mut sampled = ResultRow::blank(config, n, "mc");
            sampled.kl = Some(kl_div(&theta_truth, &empirical)?);
            sampled.tv = Some(tv_dist(&theta_truth, &empirical)?);
            sampled.chi2 = Some(chi2_div(&theta_truth, &empirical)?);
            sampled.assumption_ok = Some(in_band);
            Ok(vec![exact, sampled])
        })
        .collect::<Result<Vec<Vec<ResultRow>>>>()
        .map(|nested| nested.into_iter().flatten().collect())
}

/// Exact parameter marginal of the posterior over (θ, path) states.
fn theta_marginal(grid: &ParamGridModel, pi: &[f64]) -> Result<Vec<f64>> {
    let paths = pi.len() / grid.grid_len();
    let mut marginal = vec![0.0; grid.grid_len()];
    for (idx, mass) in pi.iter().enumerate() {
        marginal[idx / paths] += mass;
    }
    Ok(marginal)
}

/// Deterministic chain start: the posterior mode over (θ, path).
fn best_start(grid: &ParamGridModel, pi: &[f64]) -> (usize, Vec<usize>) {
    let paths = pi.len() / grid.grid_len();
    let t = grid.horizon();
    let s_count = grid.state_count();
    let best = pi
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(idx, _)| idx)
        .unwrap_or(0);
    let theta = best / paths;
    let path = feynkac::oracle::decode_path(best % paths, s_count, t);
    (theta, path)
}
