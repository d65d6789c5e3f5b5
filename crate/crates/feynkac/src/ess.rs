//! The p-norm effective-sample-size family.
//!
//! For a nonnegative weight vector `w` with at least one positive entry and
//! order `p` in `[1, inf]`:
//!
//! | order        | value                                          |
//! |--------------|------------------------------------------------|
//! | `p = 1`      | `exp(H(w))`, `H` the entropy of `w / sum(w)`   |
//! | `1 < p < inf`| `(‖w‖_1 / ‖w‖_p)^(p/(p-1))`                    |
//! | `p = inf`    | `‖w‖_1 / ‖w‖_inf`                              |
//!
//! Every member takes values in `[1, N]`; the value is 1 exactly when all
//! mass sits on one entry and `N` exactly when the weights are equal. The
//! family is nonincreasing in `p`, so the `inf`-ESS is the most conservative
//! member. Ratios are computed on weights rescaled by their maximum, which
//! keeps large orders finite.

use crate::{Error, Result};

/// Validates a weight vector (nonempty, finite, nonnegative, positive mass)
/// and returns its sum.
///
/// # Errors
///
/// [`Error::DegenerateWeights`] on any violation.
pub fn check_weights(w: &[f64]) -> Result<f64> {
    if w.is_empty() || w.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let sum: f64 = w.iter().sum();
    if sum > 0.0 {
        Ok(sum)
    } else {
        Err(Error::DegenerateWeights)
    }
}

/// Rescales weights to sum to one.
///
/// # Errors
///
/// [`Error::DegenerateWeights`] when the vector is empty, carries a negative
/// or non-finite entry, or has no mass.
pub fn normalize(w: &[f64]) -> Result<Vec<f64>> {
    let sum = check_weights(w)?;
    Ok(w.iter().map(|&v| v / sum).collect())
}

/// The p-ESS of a weight vector.
///
/// `p = 1` is evaluated as the entropic limit ([`entropic_ess`]); `p` may be
/// [`f64::INFINITY`].
///
/// # Errors
///
/// [`Error::InvalidOrder`] when `p < 1` or `p` is NaN;
/// [`Error::DegenerateWeights`] as in [`check_weights`].
pub fn p_ess(w: &[f64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidOrder);
    }
    let sum = check_weights(w)?;
    if p == 1.0 {
        return entropic_ess(w);
    }
    let max = w.iter().cloned().fold(0.0, f64::max);
    if p.is_infinite() {
        return Ok(sum / max);
    }
    let s1 = sum / max;
    let sp: f64 = w.iter().map(|&v| (v / max).powf(p)).sum();
    let conjugate = p / (p - 1.0);
    Ok((s1 / sp.powf(1.0 / p)).powf(conjugate))
}

/// The entropic ESS `exp(H(w / sum(w)))`, the `p -> 1` limit of [`p_ess`].
///
/// # Errors
///
/// [`Error::DegenerateWeights`] as in [`check_weights`].
pub fn entropic_ess(w: &[f64]) -> Result<f64> {
    let sum = check_weights(w)?;
    let entropy: f64 = w
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| {
            let q = v / sum;
            -q * q.ln()
        })
        .sum();
    Ok(entropy.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn inf_ess_is_sum_over_max() {
        assert_abs_diff_eq!(
            p_ess(&[2.0, 1.0, 1.0], f64::INFINITY).unwrap(),
            2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn two_ess_is_the_classic_ratio() {
        // (2+1+1)^2 / (4+1+1)
        assert_abs_diff_eq!(
            p_ess(&[2.0, 1.0, 1.0], 2.0).unwrap(),
            16.0 / 6.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn entropic_ess_matches_frozen_value() {
        // weights (2,1,1): exp(0.5 ln 2 + 0.5 ln 4) = 2 sqrt(2)
        assert_abs_diff_eq!(
            entropic_ess(&[2.0, 1.0, 1.0]).unwrap(),
            2.828_427_1,
            epsilon = 1e-6
        );
    }

    #[test]
    fn order_one_routes_to_the_entropic_limit() {
        let w = [3.0, 1.0, 0.5];
        assert_eq!(p_ess(&w, 1.0).unwrap(), entropic_ess(&w).unwrap());
    }

    #[test]
    fn near_one_orders_approach_the_entropic_value() {
        let w = [3.0, 1.0, 0.5, 2.0];
        let limit = entropic_ess(&w).unwrap();
        let near = p_ess(&w, 1.0 + 1e-6).unwrap();
        assert!(
            ((near - limit) / limit).abs() <= 1e-4,
            "p=1+1e-6 gave {near}, entropic limit {limit}"
        );
    }

    #[test]
    fn equal_weights_reach_the_particle_count() {
        for p in [1.0, 1.5, 2.0, 7.0, f64::INFINITY] {
            assert_abs_diff_eq!(p_ess(&[0.3; 5], p).unwrap(), 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_positive_weight_gives_one() {
        for p in [1.0, 2.0, f64::INFINITY] {
            assert_abs_diff_eq!(p_ess(&[0.0, 4.0, 0.0], p).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn orders_below_one_are_rejected() {
        assert_eq!(p_ess(&[1.0], 0.5).unwrap_err(), Error::InvalidOrder);
        assert_eq!(p_ess(&[1.0], f64::NAN).unwrap_err(), Error::InvalidOrder);
    }

    #[test]
    fn degenerate_vectors_are_rejected() {
        assert_eq!(p_ess(&[], 2.0).unwrap_err(), Error::DegenerateWeights);
        assert_eq!(
            p_ess(&[0.0, 0.0], 2.0).unwrap_err(),
            Error::DegenerateWeights
        );
        assert_eq!(
            p_ess(&[1.0, -0.1], 2.0).unwrap_err(),
            Error::DegenerateWeights
        );
        assert_eq!(
            p_ess(&[1.0, f64::NAN], 2.0).unwrap_err(),
            Error::DegenerateWeights
        );
        assert_eq!(normalize(&[0.0]).unwrap_err(), Error::DegenerateWeights);
    }

    #[test]
    fn normalize_divides_by_the_sum() {
        let v = normalize(&[2.0, 6.0]).unwrap();
        assert_abs_diff_eq!(v[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.75, epsilon = 1e-15);
    }
}
