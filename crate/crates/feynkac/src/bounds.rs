//! Divergence bounds and the constants they are built from: the variance
//! constants of importance sampling and resampling, the finite-sample
//! normalizer quantity, potential-ratio and mixing constants, minorization
//! floors for the iterated conditional kernels, and the Kullback-Leibler
//! bound selector that picks the tightest right-hand side a declared
//! assumption set supports.

use crate::engine::TargetKind;
use crate::model::{product_potential, FiniteModel};
use crate::numerics::{ksum, NeumaierAcc};
use crate::oracle::{build_oracle, decode_path, Algorithm, OracleTables};
use crate::resampling::{kappa, kappa_prime, AlphaPolicy};
use crate::timegrid::time_tuples;
use crate::{Error, Result};

/// What a bound is allowed to assume about the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundAssumption {
    /// Exact model constants are available (finite enumeration).
    Exact,
    /// Potentials are bounded above and the normalizer is positive.
    BoundedPotentials,
    /// The window-functional ratio constant is finite.
    NormalizerRatio,
}

/// One candidate right-hand side together with what it assumes and whether
/// its particle-count gate holds.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsEntry {
    pub label: &'static str,
    pub assumption: BoundAssumption,
    pub value: f64,
    pub gate_ok: bool,
}

/// Kernel- and potential-mixing constants over windows of `m` steps, with
/// infinity marking a failed infimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingConstants {
    pub gamma: f64,
    pub delta: f64,
}

/// Every bound constant for one model at one particle count, alongside the
/// candidate right-hand sides.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub sis_sigma2: f64,
    pub sir_sigma2: f64,
    pub sir_q: f64,
    pub beta: f64,
    pub gamma_mixing: f64,
    pub delta_mixing: f64,
    pub zeta: f64,
    /// Catalogue overlap constant; absent below two particles.
    pub kappa: Option<f64>,
    /// Overlap constant floored at `1/N`; absent below two particles.
    pub kappa_prime: Option<f64>,
    /// Minorization floor of the iterated conditional kernel; absent when
    /// the catalogue degenerates or has fewer than two particles.
    pub eps_minorization: Option<f64>,
    pub rhs: Vec<RhsEntry>,
}

/// Variance of the normalized potential product under the proposal path
/// law: the importance-sampling constant, equal to the chi-squared
/// divergence from the updated joint target to the proposal.
pub fn sis_constant(oracle: &OracleTables) -> f64 {
    let model = oracle.model();
    let z = oracle.z_final();
    let mut acc = NeumaierAcc::new();
    for code in 0..oracle.path_count() {
        let path = decode_path(code, oracle.state_count(), oracle.horizon());
        let dens = model.path_density(&path);
        if dens <= 0.0 {
            continue;
        }
        let ratio = product_potential(model, &path).expect("path matches the horizon") / z;
        acc.add(dens * ratio * ratio);
    }
    acc.value() - 1.0
}

/// Smoothing-law average of the window functional starting at one-based
/// step `s`: the target-side factor of the resampling variance constant.
fn smoothed_window(oracle: &OracleTables, s: usize) -> f64 {
    let t = oracle.horizon();
    ksum(
        oracle
            .smoothing_marginal(s - 1)
            .iter()
            .enumerate()
            .map(|(x, &p)| p * oracle.g_fn(s, t + 1, x)),
    )
}

/// The resampling variance constant: normalized sum over steps of the
/// partial normalizer times the smoothed window functional, less the
/// horizon.
pub fn sir_constant(oracle: &OracleTables) -> f64 {
    let t = oracle.horizon();
    let z = oracle.z_final();
    let mut acc = NeumaierAcc::new();
    for s in 1..=t {
        acc.add(oracle.g0(s) * smoothed_window(oracle, s) / z);
    }
    acc.value() - t as f64
}

/// The finite-sample resampling quantity: the normalized expectation of the
/// conditional expected normalizer under the updated joint target. Equals
/// one plus the resampling variance constant over `n`, up to second-order
/// terms.
pub fn sir_q(oracle: &OracleTables, n: usize) -> f64 {
    assert!(n >= 1, "particle count must be positive");
    let t = oracle.horizon();
    let s_count = oracle.state_count();
    let pi = oracle.updated_joint();
    let nf = n as f64;
    let mut acc = NeumaierAcc::new();
    for ell in 1..=t + 1 {
        for taus in time_tuples(ell, t + 1, t + 1) {
            let smoothed_gap = ksum((0..oracle.path_count()).map(|code| {
                let path = decode_path(code, s_count, t);
                pi[code] * oracle.gap_product(&taus, &path)
            }));
            let coeff = (nf - 1.0).powi((t + 1 - ell) as i32) / nf.powi(t as i32);
            acc.add(coeff * oracle.g0(taus[0]) * smoothed_gap);
        }
    }
    acc.value() / oracle.z_final()
}

/// The window-functional ratio constant: the largest factor by which
/// restarting the potential product at an intermediate state can beat its
/// average continuation. One for unit potentials; infinite when some
/// partial normalizer vanishes while the restarted product does not.
pub fn beta_constant(oracle: &OracleTables) -> f64 {
    let t = oracle.horizon();
    let mut best = 1.0f64;
    for a in 1..=t {
        for b in a + 1..=t + 1 {
            let den = oracle.g0(b);
            for x in 0..oracle.state_count() {
                let num = oracle.g0(a) * oracle.g_fn(a, b, x);
                if den > 0.0 {
                    best = best.max(num / den);
                } else if num > 0.0 {
                    return f64::INFINITY;
                }
            }
        }
    }
    best
}

fn matrix_product(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = a.len();
    let mut out = vec![vec![0.0f64; dim]; dim];
    for (row, slot) in a.iter().zip(&mut out) {
        for dest in 0..dim {
            slot[dest] = ksum((0..dim).map(|mid| row[mid] * b[mid][dest]));
        }
    }
    out
}

/// Smallest kernel-ratio constant over all `m`-step windows and the largest
/// potential ratio raised to `m`. Windows compare every pair of rows of the
/// composed kernel column by column; a zero entry against positive mass in
/// the same column makes the constant infinite. Horizons too short for a
/// window yield one.
pub fn mixing_constants(model: &FiniteModel, m: usize) -> MixingConstants {
    let t = model.horizon();
    let s_count = model.state_count();

    let mut gamma = 1.0f64;
    if m >= 1 && t > m {
        for start in 1..=t - m {
            let mut composed: Vec<Vec<f64>> = model.transition(start).to_vec();
            for step in start + 1..start + m {
                composed = matrix_product(&composed, model.transition(step));
            }
            for column in 0..s_count {
                let mut max = 0.0f64;
                let mut min = f64::INFINITY;
                for row in &composed {
                    max = max.max(row[column]);
                    min = min.min(row[column]);
                }
                if max == 0.0 {
                    continue;
                }
                gamma = if min > 0.0 {
                    gamma.max(max / min)
                } else {
                    f64::INFINITY
                };
            }
        }
    }

    let mut worst_ratio = 1.0f64;
    for s in 0..t {
        let g = model.potential_vec(s);
        let sup = g.iter().cloned().fold(0.0f64, f64::max);
        let inf = g.iter().cloned().fold(f64::INFINITY, f64::min);
        worst_ratio = if inf > 0.0 {
            worst_ratio.max(sup / inf)
        } else {
            f64::INFINITY
        };
    }
    MixingConstants {
        gamma,
        delta: worst_ratio.powi(m as i32),
    }
}

/// The normalizer-deflation factor of the potentials: the product of
/// per-step suprema over the full-horizon normalizer. At least one;
/// infinite when the normalizer vanishes.
fn sup_product_over_z(oracle: &OracleTables) -> f64 {
    let model = oracle.model();
    let mut prod = 1.0f64;
    for s in 0..oracle.horizon() {
        prod *= model
            .potential_vec(s)
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
    }
    let z = oracle.z_final();
    if z > 0.0 {
        prod / z
    } else {
        f64::INFINITY
    }
}

fn updated_rhs_entries(
    oracle: &OracleTables,
    algorithm: &Algorithm,
    n: usize,
    zeta: f64,
) -> Vec<RhsEntry> {
    let t = oracle.horizon();
    let nf = n as f64;
    let mut out = Vec::new();
    match algorithm {
        Algorithm::Sis => {
            out.push(RhsEntry {
                label: "sis_exact",
                assumption: BoundAssumption::Exact,
                value: (sis_constant(oracle) / nf).ln_1p(),
                gate_ok: true,
            });
        }
        Algorithm::Sir => {
            out.push(RhsEntry {
                label: "sir_exact",
                assumption: BoundAssumption::Exact,
                value: sir_q(oracle, n).ln(),
                gate_ok: true,
            });
            let survive = 1.0 - (1.0 - 1.0 / nf).powi(t as i32);
            out.push(RhsEntry {
                label: "sir_bounded_potentials",
                assumption: BoundAssumption::BoundedPotentials,
                value: (survive * (sup_product_over_z(oracle) - 1.0)).ln_1p(),
                gate_ok: true,
            });
            out.push(RhsEntry {
                label: "sir_window_ratio",
                assumption: BoundAssumption::NormalizerRatio,
                value: t as f64 * ((beta_constant(oracle) - 1.0) / nf).ln_1p(),
                gate_ok: true,
            });
        }
        Algorithm::Alpha { .. } => {
            let zn = zeta * nf;
            out.push(RhsEntry {
                label: "alpha_bounded_potentials",
                assumption: BoundAssumption::BoundedPotentials,
                value: (sup_product_over_z(oracle) * ((1.0 + 1.0 / zn).powi(t as i32) - 1.0))
                    .ln_1p(),
                gate_ok: zn >= 1.0,
            });
            out.push(RhsEntry {
                label: "alpha_window_ratio",
                assumption: BoundAssumption::NormalizerRatio,
                value: t as f64 * (beta_constant(oracle) / zn).ln_1p(),
                gate_ok: true,
            });
        }
    }
    out
}

/// The tightest Kullback-Leibler bound the declared assumptions support,
/// for the divergence of the target from the expected empirical measure at
/// `n` particles.
///
/// Marginal targets share the joint bounds. Predictive targets are bounded
/// through the model truncated by one step, and are exactly zero at horizon
/// one where every sampler reproduces the initial law.
///
/// # Errors
///
/// [`Error::NoApplicableBound`] when no declared assumption yields a finite
/// gated bound; [`Error::Dimension`] on a non-positive particle count or an
/// ESS floor outside `(0, 1]` for the matrix-resampling forms.
pub fn kl_bound(
    oracle: &OracleTables,
    algorithm: &Algorithm,
    target: TargetKind,
    n: usize,
    zeta: f64,
    assumptions: &[BoundAssumption],
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Dimension("particle count must be positive".into()));
    }
    if matches!(algorithm, Algorithm::Alpha { .. }) && !(zeta > 0.0 && zeta <= 1.0) {
        return Err(Error::Dimension("ess floor must lie in (0, 1]".into()));
    }
    if !target.is_updated() {
        let t = oracle.horizon();
        if t == 1 {
            return Ok(0.0);
        }
        let truncated = oracle.model().truncate(t - 1)?;
        let sub = build_oracle(&truncated)?;
        return kl_bound(
            &sub,
            algorithm,
            TargetKind::UpdatedJoint,
            n,
            zeta,
            assumptions,
        );
    }

    let best = updated_rhs_entries(oracle, algorithm, n, zeta)
        .into_iter()
        .filter(|entry| {
            entry.gate_ok && entry.value.is_finite() && assumptions.contains(&entry.assumption)
        })
        .map(|entry| entry.value)
        .fold(f64::INFINITY, f64::min);
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::NoApplicableBound)
    }
}

/// Minorization floor of the iterated conditional kernel at `n` particles:
/// how much of the target every transition row is guaranteed to contain.
///
/// # Errors
///
/// [`Error::SingleParticle`] below two particles;
/// [`Error::DegenerateCatalogue`] when the overlap constant reaches one;
/// [`Error::Dimension`] on a zero horizon, a negative ratio constant, or an
/// ESS floor outside `(0, 1]`.
pub fn minorization_eps(t: usize, n: usize, beta: f64, zeta: f64, kappa: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::Dimension("horizon must be positive".into()));
    }
    if n < 2 {
        return Err(Error::SingleParticle);
    }
    if zeta.is_nan() || zeta <= 0.0 || zeta > 1.0 {
        return Err(Error::Dimension("ess floor must lie in (0, 1]".into()));
    }
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::Dimension(
            "ratio constant must be nonnegative".into(),
        ));
    }
    if kappa >= 1.0 {
        return Err(Error::DegenerateCatalogue);
    }
    let nf = n as f64;
    let value = (1.0 - 1.0 / nf) * (1.0 - kappa).powi(t as i32 - 1)
        / (1.0 + 2.0 * beta / (zeta * nf)).powi(t as i32);
    Ok(value)
}

/// Horizon-free minorization floor under the linear particle budget
/// `n = c * t + b`: no matter how long the horizon grows, the iterated
/// conditional kernel keeps at least this much of the target.
///
/// # Panics
///
/// When `c` is not positive.
pub fn particle_budget_eps(c: f64, zeta: f64, beta: f64, b: f64) -> f64 {
    assert!(c > 0.0, "budget slope must be positive");
    (-2.0 * beta / (zeta * c) - b).exp()
}

/// Computes every constant and candidate right-hand side for one model at
/// one particle count, with the overlap constants taken from the policy's
/// catalogue.
///
/// # Errors
///
/// [`Error::Dimension`] on a non-positive particle count or an ESS floor
/// outside `(0, 1]`.
pub fn bound_report(
    oracle: &OracleTables,
    n: usize,
    zeta: f64,
    policy: &AlphaPolicy,
    mixing_window: usize,
) -> Result<BoundReport> {
    if n == 0 {
        return Err(Error::Dimension("particle count must be positive".into()));
    }
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(Error::Dimension("ess floor must lie in (0, 1]".into()));
    }
    let beta = beta_constant(oracle);
    let mixing = mixing_constants(oracle.model(), mixing_window);
    let catalogue = policy.catalogue(n);
    let kappa_value = match kappa(&catalogue) {
        Ok(v) => Some(v),
        Err(Error::SingleParticle) => None,
        Err(e) => return Err(e),
    };
    let kappa_prime_value = match kappa_prime(&catalogue, n) {
        Ok(v) => Some(v),
        Err(Error::SingleParticle) => None,
        Err(e) => return Err(e),
    };
    let eps = kappa_value.and_then(|k| minorization_eps(oracle.horizon(), n, beta, zeta, k).ok());

    let mut rhs = Vec::new();
    for algorithm in [
        Algorithm::Sis,
        Algorithm::Sir,
        Algorithm::Alpha {
            policy: policy.clone(),
        },
    ] {
        rhs.extend(updated_rhs_entries(oracle, &algorithm, n, zeta));
    }

    Ok(BoundReport {
        sis_sigma2: sis_constant(oracle),
        sir_sigma2: sir_constant(oracle),
        sir_q: sir_q(oracle, n),
        beta,
        gamma_mixing: mixing.gamma,
        delta_mixing: mixing.delta,
        zeta,
        kappa: kappa_value,
        kappa_prime: kappa_prime_value,
        eps_minorization: eps,
        rhs,
    })
}
