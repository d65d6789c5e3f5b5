//! Resampling matrices, their overlap constant, and categorical sampling.
//!
//! The adaptive samplers mix particles through Markov matrices `alpha`
//! (rows sum to one). Two members generate the classic algorithms: the
//! identity (no interaction) and the uniform matrix with entries `1/N`
//! (full multinomial resampling). A catalogue is the set of matrices a
//! policy may select from; its column-overlap constant
//!
//! ```text
//! kappa = max over alpha in catalogue, columns n != n' of
//!         sum_k alpha[k][n] * alpha[k][n']
//! ```
//!
//! measures how strongly two distinct slots can share ancestors and enters
//! the minorization constant of the conditional kernels.
//!
//! **Draw convention.** All categorical draws invert a single uniform
//! variate against the cumulative weights, except that a point-mass
//! distribution (exactly one positive weight) consumes no randomness. The
//! exception makes a no-interaction sampler consume the same stream as a
//! plain sequential one, so the two can be compared draw for draw.

use rand::{Rng, RngCore};

use crate::ess::{check_weights, p_ess};
use crate::model::NORMALIZATION_TOL;
use crate::{Error, Result};

/// A row-stochastic mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatrix {
    entries: Vec<Vec<f64>>,
    doubly_stochastic: bool,
}

impl AlphaMatrix {
    /// Builds a matrix, checking row normalization to within
    /// [`NORMALIZATION_TOL`] and flagging double stochasticity (column sums
    /// one to the same tolerance).
    ///
    /// # Errors
    ///
    /// [`Error::Dimension`] when the matrix is empty, ragged, or a row is
    /// negative or not normalized.
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::Dimension("empty matrix".into()));
        }
        for (i, row) in entries.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "row {i} has length {}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(Error::Dimension(format!("row {i} has invalid entries")));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::Dimension(format!("row {i} not normalized")));
            }
        }
        let doubly_stochastic = (0..n)
            .all(|c| ((0..n).map(|r| entries[r][c]).sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL);
        Ok(Self {
            entries,
            doubly_stochastic,
        })
    }

    /// The `n x n` identity: particles keep their own lineage.
    pub fn identity(n: usize) -> Self {
        let entries = (0..n)
            .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        Self {
            entries,
            doubly_stochastic: true,
        }
    }

    /// The `n x n` matrix with all entries `1/n`: full resampling.
    pub fn uniform(n: usize) -> Self {
        Self {
            entries: vec![vec![1.0 / n as f64; n]; n],
            doubly_stochastic: true,
        }
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r]
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.entries[r][c]
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.doubly_stochastic
    }
}

/// Largest column overlap of a catalogue: the worst-case probability mass
/// two distinct slots place on a shared ancestor row.
///
/// # Errors
///
/// [`Error::SingleParticle`] when the matrices are 1x1 (no distinct column
/// pair exists); [`Error::Dimension`] on an empty catalogue or mixed sizes.
pub fn kappa(catalogue: &[AlphaMatrix]) -> Result<f64> {
    let n = catalogue
        .first()
        .ok_or_else(|| Error::Dimension("empty catalogue".into()))?
        .size();
    if catalogue.iter().any(|m| m.size() != n) {
        return Err(Error::Dimension("catalogue mixes matrix sizes".into()));
    }
    if n < 2 {
        return Err(Error::SingleParticle);
    }
    let mut worst = 0.0f64;
    for m in catalogue {
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let overlap: f64 = (0..n).map(|k| m.entry(k, a) * m.entry(k, b)).sum();
                worst = worst.max(overlap);
            }
        }
    }
    Ok(worst)
}

/// `max(kappa, 1/n)`, the floor used by the minorization constants.
///
/// # Errors
///
/// As [`kappa`], plus [`Error::Dimension`] when the catalogue size differs
/// from `n`.
pub fn kappa_prime(catalogue: &[AlphaMatrix], n: usize) -> Result<f64> {
    if catalogue.iter().any(|m| m.size() != n) {
        return Err(Error::Dimension(format!("catalogue is not {n}x{n}")));
    }
    Ok(kappa(catalogue)?.max(1.0 / n as f64))
}

/// Draws one index from unnormalized weights by inversion, honoring the
/// module's point-mass convention (no variate consumed when exactly one
/// entry is positive).
///
/// # Errors
///
/// [`Error::DegenerateWeights`] when the weights carry no mass or are
/// invalid.
pub fn draw_categorical(weights: &[f64], rng: &mut dyn RngCore) -> Result<usize> {
    let sum = check_weights(weights)?;
    let mut positive = weights.iter().enumerate().filter(|(_, &w)| w > 0.0);
    let first = positive.next().expect("positive mass exists").0;
    if positive.next().is_none() {
        return Ok(first);
    }
    let u: f64 = rng.gen::<f64>() * sum;
    let mut acc = 0.0;
    let mut last_positive = first;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = i;
        if u < acc {
            return Ok(i);
        }
    }
    // Rounding pushed the accumulated sum a hair under `u`.
    Ok(last_positive)
}

/// Draws `count` ancestor indices independently from a normalized weight
/// vector, in slot order.
///
/// # Errors
///
/// [`Error::DegenerateWeights`] on invalid weights; [`Error::Dimension`]
/// when the weights do not sum to one within [`NORMALIZATION_TOL`].
pub fn multinomial_resample(
    weights: &[f64],
    count: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<usize>> {
    let sum = check_weights(weights)?;
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Dimension("weights not normalized".into()));
    }
    (0..count).map(|_| draw_categorical(weights, rng)).collect()
}

/// How a sampler picks its mixing matrix at each step.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaPolicy {
    /// Always the identity: sequential importance sampling.
    Identity,
    /// Always the uniform matrix: resampling at every step.
    Uniform,
    /// Adaptive: resample (uniform) when the `ess_order`-ESS of the current
    /// weights falls strictly below `threshold * N`, keep lineages
    /// (identity) otherwise. Ties do not resample.
    Adaptive { ess_order: f64, threshold: f64 },
    /// A fixed list of matrices, cycled by step index.
    Fixed(Vec<AlphaMatrix>),
}

impl AlphaPolicy {
    /// Adaptive policy at the conventional order `inf`.
    pub fn adaptive_inf(threshold: f64) -> Self {
        AlphaPolicy::Adaptive {
            ess_order: f64::INFINITY,
            threshold,
        }
    }

    /// Every matrix the policy can select at size `n`, for overlap
    /// constants.
    pub fn catalogue(&self, n: usize) -> Vec<AlphaMatrix> {
        match self {
            AlphaPolicy::Identity => vec![AlphaMatrix::identity(n)],
            AlphaPolicy::Uniform => vec![AlphaMatrix::uniform(n)],
            AlphaPolicy::Adaptive { .. } => {
                vec![AlphaMatrix::identity(n), AlphaMatrix::uniform(n)]
            }
            AlphaPolicy::Fixed(list) => list.clone(),
        }
    }
}

/// Selects the mixing matrix for the transition out of step `step`, given
/// the current (unnormalized) weights.
///
/// # Errors
///
/// [`Error::DegenerateWeights`] on invalid weights; [`Error::InvalidOrder`]
/// on a bad adaptive order; [`Error::Dimension`] when a fixed matrix does
/// not match the weight count or the fixed list is empty.
pub fn select_alpha(policy: &AlphaPolicy, w: &[f64], step: usize) -> Result<AlphaMatrix> {
    let n = w.len();
    check_weights(w)?;
    match policy {
        AlphaPolicy::Identity => Ok(AlphaMatrix::identity(n)),
        AlphaPolicy::Uniform => Ok(AlphaMatrix::uniform(n)),
        AlphaPolicy::Adaptive {
            ess_order,
            threshold,
        } => {
            let ess = p_ess(w, *ess_order)?;
            if ess < threshold * n as f64 {
                Ok(AlphaMatrix::uniform(n))
            } else {
                Ok(AlphaMatrix::identity(n))
            }
        }
        AlphaPolicy::Fixed(list) => {
            if list.is_empty() {
                return Err(Error::Dimension("empty fixed catalogue".into()));
            }
            let m = list[step % list.len()].clone();
            if m.size() != n {
                return Err(Error::Dimension(format!(
                    "fixed matrix is {}x{} for {n} weights",
                    m.size(),
                    m.size()
                )));
            }
            Ok(m)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn identity_catalogue_has_no_overlap() {
        assert_eq!(kappa(&[AlphaMatrix::identity(4)]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_catalogue_overlap_is_one_over_n() {
        assert!((kappa(&[AlphaMatrix::uniform(4)]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mixed_catalogue_takes_the_worst_matrix() {
        let cat = [AlphaMatrix::identity(4), AlphaMatrix::uniform(4)];
        assert!((kappa(&cat).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn kappa_prime_floors_at_one_over_n() {
        assert!((kappa_prime(&[AlphaMatrix::identity(4)], 4).unwrap() - 0.25).abs() < 1e-15);
        assert!((kappa_prime(&[AlphaMatrix::identity(10)], 10).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn kappa_needs_two_particles() {
        assert_eq!(
            kappa(&[AlphaMatrix::identity(1)]).unwrap_err(),
            Error::SingleParticle
        );
    }

    #[test]
    fn point_mass_draw_consumes_no_randomness() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let before = rng.clone();
        assert_eq!(draw_categorical(&[0.0, 3.0, 0.0], &mut rng).unwrap(), 1);
        assert_eq!(rng, before, "point-mass draw must not touch the stream");
    }

    #[test]
    fn draws_cover_the_support_in_proportion() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let w = [0.5, 0.25, 0.25];
        let draws = multinomial_resample(&w, 100_000, &mut rng).unwrap();
        let mut counts = [0usize; 3];
        for d in draws {
            counts[d] += 1;
        }
        // 3-sigma binomial bands around the expected frequencies.
        for (i, &p) in w.iter().enumerate() {
            let mean = 100_000.0 * p;
            let sd = (100_000.0 * p * (1.0 - p)).sqrt();
            let dev = (counts[i] as f64 - mean).abs();
            assert!(
                dev < 3.0 * sd,
                "state {i}: count {} vs mean {mean}",
                counts[i]
            );
        }
    }

    #[test]
    fn resampling_requires_normalized_weights() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let err = multinomial_resample(&[0.5, 0.4], 3, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        assert_eq!(
            multinomial_resample(&[0.0, 0.0], 3, &mut rng).unwrap_err(),
            Error::DegenerateWeights
        );
    }

    #[test]
    fn resampling_is_deterministic_under_a_seed() {
        let w = [0.2, 0.3, 0.5];
        let a = multinomial_resample(&w, 64, &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        let b = multinomial_resample(&w, 64, &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adaptive_policy_resamples_only_below_threshold() {
        // Equal weights: ESS = N, never below zeta * N.
        let even = select_alpha(&AlphaPolicy::adaptive_inf(0.5), &[1.0; 8], 0).unwrap();
        assert_eq!(even, AlphaMatrix::identity(8));
        // One particle holds all mass: inf-ESS = 1 < 0.5 * 4.
        let skew = select_alpha(&AlphaPolicy::adaptive_inf(0.5), &[1.0, 0.0, 0.0, 0.0], 0).unwrap();
        assert_eq!(skew, AlphaMatrix::uniform(4));
    }

    #[test]
    fn adaptive_ties_keep_lineages() {
        // inf-ESS of (1,1) is exactly 2 = zeta * N with zeta = 1: no resample.
        let m = select_alpha(&AlphaPolicy::adaptive_inf(1.0), &[1.0, 1.0], 0).unwrap();
        assert_eq!(m, AlphaMatrix::identity(2));
    }

    #[test]
    fn fixed_catalogue_cycles_by_step() {
        let list = vec![AlphaMatrix::identity(2), AlphaMatrix::uniform(2)];
        let policy = AlphaPolicy::Fixed(list);
        assert_eq!(
            select_alpha(&policy, &[1.0, 1.0], 0).unwrap(),
            AlphaMatrix::identity(2)
        );
        assert_eq!(
            select_alpha(&policy, &[1.0, 1.0], 1).unwrap(),
            AlphaMatrix::uniform(2)
        );
        assert_eq!(
            select_alpha(&policy, &[1.0, 1.0], 2).unwrap(),
            AlphaMatrix::identity(2)
        );
    }

    #[test]
    fn constructed_matrices_report_double_stochasticity() {
        let m = AlphaMatrix::new(vec![vec![0.25, 0.75], vec![0.75, 0.25]]).unwrap();
        assert!(m.is_doubly_stochastic());
        let m = AlphaMatrix::new(vec![vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(!m.is_doubly_stochastic());
        assert!(AlphaMatrix::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
    }
}
