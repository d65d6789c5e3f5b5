//! Small reference instances shared by tests, benchmarks, and the shipped
//! experiment configurations.

use crate::model::{FiniteModel, ParamGridModel};

/// Two-state chain with asymmetric dynamics and potentials that cycle with
/// period three, so no step is a rescaled copy of another.
///
/// Initial law `(0.6, 0.4)`, transitions `[[0.7, 0.3], [0.2, 0.8]]` at every
/// step, potentials cycling `(2, 1)`, `(1, 3)`, `(1.5, 0.5)`.
pub fn canonical_two_state(horizon: usize) -> FiniteModel {
    let cycle = [vec![2.0, 1.0], vec![1.0, 3.0], vec![1.5, 0.5]];
    FiniteModel::new(
        vec![0.6, 0.4],
        vec![vec![vec![0.7, 0.3], vec![0.2, 0.8]]; horizon.saturating_sub(1)],
        (0..horizon).map(|s| cycle[s % 3].clone()).collect(),
    )
    .expect("canonical fixture shapes are static")
}

/// The same chain with every potential equal to one: the updated,
/// predictive, and proposal laws coincide and every normalizer is one.
pub fn flat_two_state(horizon: usize) -> FiniteModel {
    FiniteModel::new(
        vec![0.6, 0.4],
        vec![vec![vec![0.7, 0.3], vec![0.2, 0.8]]; horizon.saturating_sub(1)],
        vec![vec![1.0, 1.0]; horizon],
    )
    .expect("flat fixture shapes are static")
}

/// Two-parameter grid for the particle Gibbs experiments: stay probability
/// `theta` in `{0.3, 0.7}` under a uniform prior, horizon 2, shared initial
/// law `(0.5, 0.5)` and potentials `(2, 1)`, `(1, 3)`.
pub fn param_grid_pair() -> ParamGridModel {
    let member = |theta: f64| {
        FiniteModel::new(
            vec![0.5, 0.5],
            vec![vec![vec![theta, 1.0 - theta], vec![1.0 - theta, theta]]],
            vec![vec![2.0, 1.0], vec![1.0, 3.0]],
        )
        .expect("grid member shapes are static")
    };
    ParamGridModel::new(vec![0.5, 0.5], vec![member(0.3), member(0.7)])
        .expect("grid shapes are static")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_validate_cleanly() {
        assert!(canonical_two_state(1).validate().is_empty());
        assert!(canonical_two_state(5).validate().is_empty());
        assert!(flat_two_state(3).validate().is_empty());
        for theta in 0..param_grid_pair().grid_len() {
            assert!(param_grid_pair().model(theta).validate().is_empty());
        }
    }

    #[test]
    fn canonical_potentials_cycle_with_period_three() {
        let m = canonical_two_state(7);
        assert_eq!(m.potential_vec(0), &[2.0, 1.0]);
        assert_eq!(m.potential_vec(1), &[1.0, 3.0]);
        assert_eq!(m.potential_vec(2), &[1.5, 0.5]);
        assert_eq!(m.potential_vec(3), &[2.0, 1.0]);
        assert_eq!(m.potential_vec(6), &[2.0, 1.0]);
    }
}
