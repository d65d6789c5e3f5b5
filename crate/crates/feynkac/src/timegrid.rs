//! Integer time tuples used by the gap decompositions of expected
//! normalizers.
//!
//! The closed-form expressions for conditional expected normalizers sum over
//! tuples of resampling "survival times". Each tuple is strictly increasing,
//! confined to a window of admissible times, and anchored at the window's
//! right endpoint.

/// Enumerates the strictly increasing tuples `(τ_1, ..., τ_ell)` with every
/// entry in the half-open window `(end - window, end]` and `τ_ell = end`.
///
/// Equivalently: the first `ell - 1` entries form a subset of the
/// `window - 1` admissible interior times, so there are
/// `C(window - 1, ell - 1)` tuples. Tuples are returned in lexicographic
/// order. `ell = 0`, `ell > window`, or `window > end` yields no tuples.
pub fn time_tuples(ell: usize, window: usize, end: usize) -> Vec<Vec<usize>> {
    if ell == 0 || ell > window || window > end {
        return Vec::new();
    }
    let lower = end - window; // exclusive lower bound
    let interior: Vec<usize> = (lower + 1..end).collect();
    let mut out = Vec::new();
    let mut chosen = Vec::with_capacity(ell);
    fill(&interior, 0, ell - 1, end, &mut chosen, &mut out);
    out
}

fn fill(
    interior: &[usize],
    start: usize,
    remaining: usize,
    end: usize,
    chosen: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if remaining == 0 {
        let mut tuple = chosen.clone();
        tuple.push(end);
        out.push(tuple);
        return;
    }
    // Not enough interior values left to complete the tuple.
    if interior.len() - start < remaining {
        return;
    }
    for idx in start..=interior.len() - remaining {
        chosen.push(interior[idx]);
        fill(interior, idx + 1, remaining - 1, end, chosen, out);
        chosen.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: usize, k: usize) -> usize {
        if k > n {
            return 0;
        }
        let mut value = 1usize;
        for i in 0..k.min(n - k) {
            value = value * (n - i) / (i + 1);
        }
        value
    }

    #[test]
    fn singleton_tuple_is_endpoint() {
        assert_eq!(time_tuples(1, 3, 3), vec![vec![3]]);
    }

    #[test]
    fn full_window_tuple_is_consecutive() {
        assert_eq!(time_tuples(4, 4, 4), vec![vec![1, 2, 3, 4]]);
    }

    #[test]
    fn enumerates_interior_choices() {
        let tuples = time_tuples(2, 4, 4);
        assert_eq!(tuples, vec![vec![1, 4], vec![2, 4], vec![3, 4]]);
    }

    #[test]
    fn respects_window_offset() {
        let tuples = time_tuples(2, 2, 5);
        assert_eq!(tuples, vec![vec![4, 5]]);
    }

    #[test]
    fn degenerate_requests_are_empty() {
        assert!(time_tuples(0, 3, 3).is_empty());
        assert!(time_tuples(4, 3, 3).is_empty());
        assert!(time_tuples(2, 5, 4).is_empty());
    }

    #[test]
    fn counts_match_binomial_coefficients() {
        for window in 1..=7usize {
            for end in window..=window + 3 {
                for ell in 1..=window {
                    let tuples = time_tuples(ell, window, end);
                    assert_eq!(tuples.len(), binomial(window - 1, ell - 1));
                    for tuple in &tuples {
                        assert_eq!(*tuple.last().unwrap(), end);
                        assert!(tuple.windows(2).all(|w| w[0] < w[1]));
                        assert!(tuple.iter().all(|&tau| tau > end - window));
                    }
                }
            }
        }
    }
}
