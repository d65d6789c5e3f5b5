//! Conditional particle runs, their iterated kernels, and the particle
//! Gibbs step built on top of them.
//!
//! A conditional run behaves like its unconditional counterpart except that
//! one or more trajectories are pinned in advance: at every generation the
//! pinned trajectories occupy designated slots and survive resampling
//! unchanged, while the remaining particles evolve under the usual law. The
//! two flavors differ in how the designated slots arise:
//!
//! * [`run_csmc`] pins trajectories together with fixed per-generation slot
//!   assignments (lineages);
//! * [`run_calpha_smc`] pins trajectories only; their slot tuple is drawn
//!   afresh at every generation, jointly over distinct slots, with
//!   probability proportional to the product of mixing-matrix entries
//!   connecting each slot to its predecessor.
//!
//! Both runs end by drawing a terminal selection index, which makes one
//! application of the run a Markov transition on trajectories that leaves
//! the updated target invariant. [`pg_step`] interleaves that transition
//! with an exact parameter draw on a finite grid.
//!
//! Generator consumption extends the unconditional contract: pinned slots
//! consume nothing; the slot tuple of [`run_calpha_smc`] is one categorical
//! draw taken first in each generation; the terminal selection is one
//! categorical draw taken last.

use rand::RngCore;

use crate::engine::ParticleSystem;
use crate::model::{FeynmanKacModel, ParamGridModel};
use crate::numerics::ksum;
use crate::resampling::{draw_categorical, select_alpha, AlphaPolicy};
use crate::{Error, Result};

/// A trajectory pinned into a conditional run, optionally with the slot it
/// must occupy at each generation.
///
/// Without an explicit lineage, the `j`-th frozen path of a run occupies
/// slot `j` at every generation.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenPath<S> {
    states: Vec<S>,
    lineage: Option<Vec<usize>>,
}

impl<S> FrozenPath<S> {
    pub fn new(states: Vec<S>) -> Self {
        Self {
            states,
            lineage: None,
        }
    }

    pub fn with_lineage(states: Vec<S>, lineage: Vec<usize>) -> Self {
        Self {
            states,
            lineage: Some(lineage),
        }
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn lineage(&self) -> Option<&[usize]> {
        self.lineage.as_deref()
    }
}

/// Per-generation slot assignments of the frozen paths: `slots[s][j]` is
/// the slot of path `j` at generation `s`.
fn resolve_lineages<S>(frozen: &[FrozenPath<S>], t: usize, n: usize) -> Result<Vec<Vec<usize>>> {
    let i = frozen.len();
    let mut slots = vec![vec![0usize; i]; t];
    for (j, path) in frozen.iter().enumerate() {
        if path.states.len() != t {
            return Err(Error::Dimension(format!(
                "frozen path {j} has length {} for horizon {t}",
                path.states.len()
            )));
        }
        match &path.lineage {
            None => {
                for row in &mut slots {
                    row[j] = j;
                }
            }
            Some(lineage) => {
                if lineage.len() != t {
                    return Err(Error::Dimension(format!(
                        "lineage {j} has length {} for horizon {t}",
                        lineage.len()
                    )));
                }
                if lineage.iter().any(|&k| k >= n) {
                    return Err(Error::Dimension(format!(
                        "lineage {j} names a slot outside 0..{n}"
                    )));
                }
                for (row, &k) in slots.iter_mut().zip(lineage) {
                    row[j] = k;
                }
            }
        }
    }
    for row in &slots {
        for a in 0..i {
            for b in a + 1..i {
                if row[a] == row[b] {
                    return Err(Error::LineagesNotDistinct);
                }
            }
        }
    }
    Ok(slots)
}

/// Slot-indexed view of one generation's frozen assignment: `Some(j)` when
/// the slot carries frozen path `j`.
pub(crate) fn owner_by_slot(row: &[usize], n: usize) -> Vec<Option<usize>> {
    let mut owner = vec![None; n];
    for (j, &slot) in row.iter().enumerate() {
        owner[slot] = Some(j);
    }
    owner
}

fn check_conditional_shape<M: FeynmanKacModel>(model: &M, n: usize, i: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::Dimension("particle count must be positive".into()));
    }
    let t = model.horizon();
    if t == 0 {
        return Err(Error::Dimension("horizon must be positive".into()));
    }
    if i == 0 {
        return Err(Error::Dimension("at least one frozen path required".into()));
    }
    if i > n {
        return Err(Error::TooManyFrozenPaths);
    }
    Ok(t)
}

/// Runs the conditional resampling sampler: the frozen trajectories occupy
/// their lineage slots at every generation, free particles resample from
/// the previous generation's potentials over all `n` slots, and a terminal
/// selection index is drawn in proportion to the final potentials.
///
/// # Errors
///
/// [`Error::TooManyFrozenPaths`] when there are more frozen paths than
/// particles; [`Error::LineagesNotDistinct`] when two paths claim one slot
/// at some generation; [`Error::Dimension`] on shape violations;
/// [`Error::DegenerateWeights`] when a resampling or selection categorical
/// carries no mass.
pub fn run_csmc<M: FeynmanKacModel>(
    model: &M,
    frozen: &[FrozenPath<M::State>],
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<ParticleSystem<M::State>> {
    let i = frozen.len();
    let t = check_conditional_shape(model, n, i)?;
    let slots = resolve_lineages(frozen, t, n)?;

    let mut states: Vec<Vec<M::State>> = Vec::with_capacity(t);
    let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(t);
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(t);

    let owner0 = owner_by_slot(&slots[0], n);
    let mut first = Vec::with_capacity(n);
    for &owner in &owner0 {
        match owner {
            Some(j) => first.push(frozen[j].states[0].clone()),
            None => first.push(model.sample_initial(rng)),
        }
    }
    states.push(first);
    ancestors.push((0..n).collect());
    weights.push(vec![1.0; n]);
    let mut common_weight = 1.0f64;

    for s in 1..t {
        let one_step: Vec<f64> = states[s - 1]
            .iter()
            .map(|state| model.potential(s - 1, state))
            .collect();
        let owner = owner_by_slot(&slots[s], n);

        let mut drawn = vec![0usize; n];
        for slot in 0..n {
            match owner[slot] {
                Some(j) => drawn[slot] = slots[s - 1][j],
                None => drawn[slot] = draw_categorical(&one_step, rng)?,
            }
        }
        let mut next = Vec::with_capacity(n);
        for slot in 0..n {
            match owner[slot] {
                Some(j) => next.push(frozen[j].states[s].clone()),
                None => next.push(model.sample_transition(s, &states[s - 1][drawn[slot]], rng)),
            }
        }

        common_weight *= ksum(one_step.iter().cloned()) / n as f64;
        ancestors.push(drawn);
        states.push(next);
        weights.push(vec![common_weight; n]);
    }

    let final_potentials: Vec<f64> = states[t - 1]
        .iter()
        .map(|state| model.potential(t - 1, state))
        .collect();
    let selection = draw_categorical(&final_potentials, rng)?;

    Ok(ParticleSystem {
        states,
        ancestors,
        weights,
        selection: Some(selection),
        frozen_slots: slots,
    })
}

/// Lexicographically ordered tuples of `arity` pairwise-distinct indices in
/// `0..n`, the outcome space of one frozen-slot draw.
pub(crate) fn distinct_tuples(n: usize, arity: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(arity);
    fn extend(n: usize, arity: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == arity {
            out.push(current.clone());
            return;
        }
        for v in 0..n {
            if current.contains(&v) {
                continue;
            }
            current.push(v);
            extend(n, arity, current, out);
            current.pop();
        }
    }
    if arity <= n {
        extend(n, arity, &mut current, &mut out);
    }
    out
}

/// Runs the conditional matrix-resampling sampler: the frozen trajectories
/// are pinned but their slots are drawn at every generation, jointly over
/// distinct tuples with probability proportional to the product of mixing
/// entries linking each slot to its predecessor. Free particles resample
/// from their mixing rows as in the unconditional sampler, and a terminal
/// selection index is drawn in proportion to weight times final potential.
///
/// At most two trajectories may be pinned. `zeta` is validated for range
/// but does not affect the law; an adaptive policy carries its own
/// threshold.
///
/// # Errors
///
/// [`Error::TooManyFrozenPaths`] for more than two paths or more paths than
/// particles; [`Error::CatalogueDegenerateForConditioning`] when no distinct
/// slot tuple has positive probability under the selected matrix;
/// [`Error::Dimension`] on shape violations; [`Error::DegenerateWeights`]
/// when a free resampling row or the terminal selection carries no mass.
pub fn run_calpha_smc<M: FeynmanKacModel>(
    model: &M,
    frozen: &[Vec<M::State>],
    n: usize,
    policy: &AlphaPolicy,
    zeta: f64,
    rng: &mut dyn RngCore,
) -> Result<ParticleSystem<M::State>> {
    let i = frozen.len();
    if i > 2 {
        return Err(Error::TooManyFrozenPaths);
    }
    let t = check_conditional_shape(model, n, i)?;
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(Error::Dimension("ess floor must lie in (0, 1]".into()));
    }
    for (j, path) in frozen.iter().enumerate() {
        if path.len() != t {
            return Err(Error::Dimension(format!(
                "frozen path {j} has length {} for horizon {t}",
                path.len()
            )));
        }
    }
    let tuples = distinct_tuples(n, i);

    let mut states: Vec<Vec<M::State>> = Vec::with_capacity(t);
    let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(t);
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut frozen_slots: Vec<Vec<usize>> = Vec::with_capacity(t);

    let uniform = vec![1.0; tuples.len()];
    let mut current_tuple = tuples[draw_categorical(&uniform, rng)?].clone();
    let owner0 = owner_by_slot(&current_tuple, n);
    let mut first = Vec::with_capacity(n);
    for &owner in &owner0 {
        match owner {
            Some(j) => first.push(frozen[j][0].clone()),
            None => first.push(model.sample_initial(rng)),
        }
    }
    states.push(first);
    ancestors.push((0..n).collect());
    frozen_slots.push(current_tuple.clone());
    let mut w = vec![1.0f64; n];
    weights.push(w.clone());

    for s in 1..t {
        let g_prev: Vec<f64> = states[s - 1]
            .iter()
            .map(|state| model.potential(s - 1, state))
            .collect();
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

        let tuple_weights: Vec<f64> = tuples
            .iter()
            .map(|f| {
                f.iter()
                    .zip(&current_tuple)
                    .map(|(&to, &from)| alpha.entry(to, from))
                    .product()
            })
            .collect();
        if !tuple_weights.iter().any(|&v| v > 0.0) {
            return Err(Error::CatalogueDegenerateForConditioning);
        }
        let next_tuple = tuples[draw_categorical(&tuple_weights, rng)?].clone();
        let owner = owner_by_slot(&next_tuple, n);

        let mut drawn = vec![0usize; n];
        for slot in 0..n {
            match owner[slot] {
                Some(j) => drawn[slot] = current_tuple[j],
                None => {
                    let row: Vec<f64> = alpha
                        .row(slot)
                        .iter()
                        .zip(w.iter().zip(&g_prev))
                        .map(|(&a, (&wk, &gk))| a * wk * gk)
                        .collect();
                    drawn[slot] = draw_categorical(&row, rng)?;
                }
            }
        }
        let mut next = Vec::with_capacity(n);
        for slot in 0..n {
            match owner[slot] {
                Some(j) => next.push(frozen[j][s].clone()),
                None => next.push(model.sample_transition(s, &states[s - 1][drawn[slot]], rng)),
            }
        }

        ancestors.push(drawn);
        states.push(next);
        weights.push(new_w.clone());
        frozen_slots.push(next_tuple.clone());
        w = new_w;
        current_tuple = next_tuple;
    }

    let selection_weights: Vec<f64> = states[t - 1]
        .iter()
        .zip(&w)
        .map(|(state, &wk)| wk * model.potential(t - 1, state))
        .collect();
    let selection = draw_categorical(&selection_weights, rng)?;

    Ok(ParticleSystem {
        states,
        ancestors,
        weights,
        selection: Some(selection),
        frozen_slots,
    })
}

/// One transition of the iterated conditional kernel: a conditional run
/// pinned to `y` at slot 0, followed by extraction of the selected
/// trajectory. Leaves the model's updated joint target invariant.
pub fn icsmc_step<M: FeynmanKacModel>(
    model: &M,
    y: &[M::State],
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<M::State>> {
    let system = run_csmc(model, &[FrozenPath::new(y.to_vec())], n, rng)?;
    let selection = system.selection().expect("conditional runs always select");
    Ok(system.path(selection))
}

/// One transition of the iterated conditional matrix-resampling kernel:
/// as [`icsmc_step`] with the slot of `y` redrawn at every generation.
pub fn icalpha_step<M: FeynmanKacModel>(
    model: &M,
    y: &[M::State],
    n: usize,
    policy: &AlphaPolicy,
    zeta: f64,
    rng: &mut dyn RngCore,
) -> Result<Vec<M::State>> {
    let system = run_calpha_smc(model, &[y.to_vec()], n, policy, zeta, rng)?;
    let selection = system.selection().expect("conditional runs always select");
    Ok(system.path(selection))
}

/// One transition of the particle Gibbs kernel on a finite parameter grid:
/// draws the parameter exactly from its conditional posterior given the
/// path, then advances the path by the iterated conditional kernel under
/// the new parameter (matrix-resampling flavor when `adaptive` carries a
/// policy and its ESS floor).
///
/// The incoming `theta` is part of the chain state but does not influence
/// the transition: the parameter draw conditions on the path alone.
///
/// # Errors
///
/// [`Error::ParameterPosteriorDegenerate`] when the path has zero mass
/// under every parameter; otherwise as the underlying conditional run.
pub fn pg_step(
    grid: &ParamGridModel,
    theta: usize,
    y: &[usize],
    n: usize,
    adaptive: Option<(&AlphaPolicy, f64)>,
    rng: &mut dyn RngCore,
) -> Result<(usize, Vec<usize>)> {
    if theta >= grid.grid_len() {
        return Err(Error::Dimension(format!(
            "parameter index {theta} outside grid of {}",
            grid.grid_len()
        )));
    }
    let posterior = grid.posterior_given_path(y)?;
    let next_theta = draw_categorical(&posterior, rng)?;
    let z = match adaptive {
        None => icsmc_step(grid.model(next_theta), y, n, rng)?,
        Some((policy, zeta)) => icalpha_step(grid.model(next_theta), y, n, policy, zeta, rng)?,
    };
    Ok((next_theta, z))
}

/// Iterates a Markov transition `k_steps` times, recording every state
/// including the initial one.
pub fn run_chain<T, F>(
    mut step: F,
    initial: T,
    k_steps: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<T>>
where
    T: Clone,
    F: FnMut(&T, &mut dyn RngCore) -> Result<T>,
{
    let mut chain = Vec::with_capacity(k_steps + 1);
    chain.push(initial);
    for _ in 0..k_steps {
        let next = step(chain.last().expect("chain never empty"), rng)?;
        chain.push(next);
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{canonical_two_state, param_grid_pair};
    use crate::model::FiniteModel;
    use crate::resampling::AlphaMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn single_particle_returns_the_frozen_path() {
        let model = canonical_two_state(3);
        let y = vec![0usize, 1, 1];
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let before = rng.clone();
        let system = run_csmc(&model, &[FrozenPath::new(y.clone())], 1, &mut rng).unwrap();
        assert_eq!(system.path(system.selection().unwrap()), y);
        assert_eq!(rng, before, "fully frozen run must consume nothing");
    }

    #[test]
    fn frozen_slots_carry_frozen_values_and_ancestry() {
        let model = canonical_two_state(3);
        let y = vec![1usize, 0, 1];
        let lineage = vec![2usize, 0, 3];
        let frozen = FrozenPath::with_lineage(y.clone(), lineage.clone());
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let system = run_csmc(&model, &[frozen], 5, &mut rng).unwrap();
        for s in 0..3 {
            assert_eq!(system.states(s)[lineage[s]], y[s]);
            assert_eq!(system.frozen_slots()[s], vec![lineage[s]]);
        }
        for s in 1..3 {
            assert_eq!(system.ancestors(s)[lineage[s]], lineage[s - 1]);
        }
    }

    #[test]
    fn colliding_lineages_are_rejected() {
        let model = canonical_two_state(2);
        let a = FrozenPath::with_lineage(vec![0usize, 0], vec![0, 1]);
        let b = FrozenPath::with_lineage(vec![1usize, 1], vec![2, 1]);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(
            run_csmc(&model, &[a, b], 4, &mut rng).unwrap_err(),
            Error::LineagesNotDistinct
        );
    }

    #[test]
    fn more_paths_than_particles_is_rejected() {
        let model = canonical_two_state(2);
        let paths: Vec<FrozenPath<usize>> =
            (0..3).map(|_| FrozenPath::new(vec![0usize, 0])).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(
            run_csmc(&model, &paths, 2, &mut rng).unwrap_err(),
            Error::TooManyFrozenPaths
        );
    }

    #[test]
    fn default_lineages_pin_consecutive_slots() {
        let model = canonical_two_state(2);
        let a = FrozenPath::new(vec![0usize, 1]);
        let b = FrozenPath::new(vec![1usize, 0]);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let system = run_csmc(&model, &[a, b], 4, &mut rng).unwrap();
        for s in 0..2 {
            assert_eq!(system.frozen_slots()[s], vec![0, 1]);
        }
        assert_eq!(system.states(0)[0], 0);
        assert_eq!(system.states(0)[1], 1);
        assert_eq!(system.states(1)[0], 1);
        assert_eq!(system.states(1)[1], 0);
    }

    #[test]
    fn distinct_tuples_enumerate_lexicographically() {
        assert_eq!(distinct_tuples(3, 1), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(
            distinct_tuples(3, 2),
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![1, 0],
                vec![1, 2],
                vec![2, 0],
                vec![2, 1],
            ]
        );
        assert!(distinct_tuples(1, 2).is_empty());
    }

    #[test]
    fn calpha_preserves_frozen_values_at_sampled_slots() {
        let model = canonical_two_state(3);
        let y = vec![1usize, 1, 0];
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..50 {
            let system = run_calpha_smc(
                &model,
                std::slice::from_ref(&y),
                4,
                &AlphaPolicy::Uniform,
                1.0,
                &mut rng,
            )
            .unwrap();
            for (s, &ys) in y.iter().enumerate() {
                let slot = system.frozen_slots()[s][0];
                assert_eq!(system.states(s)[slot], ys);
            }
        }
    }

    #[test]
    fn identity_catalogue_pins_the_initial_tuple() {
        let model = canonical_two_state(4);
        let a = vec![0usize, 1, 0, 1];
        let b = vec![1usize, 0, 1, 0];
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..20 {
            let system = run_calpha_smc(
                &model,
                &[a.clone(), b.clone()],
                3,
                &AlphaPolicy::Identity,
                1.0,
                &mut rng,
            )
            .unwrap();
            let first = system.frozen_slots()[0].clone();
            for s in 1..4 {
                assert_eq!(system.frozen_slots()[s], first);
            }
        }
    }

    #[test]
    fn uniform_catalogue_spreads_the_frozen_slot_uniformly() {
        let model = canonical_two_state(2);
        let y = vec![0usize, 1];
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let runs = 30_000usize;
        let n = 3usize;
        let mut counts = vec![0usize; n];
        for _ in 0..runs {
            let system = run_calpha_smc(
                &model,
                std::slice::from_ref(&y),
                n,
                &AlphaPolicy::Uniform,
                1.0,
                &mut rng,
            )
            .unwrap();
            counts[system.frozen_slots()[1][0]] += 1;
        }
        let p = 1.0 / n as f64;
        let sigma = (p * (1.0 - p) / runs as f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / runs as f64;
            assert!(
                (freq - p).abs() <= 4.0 * sigma,
                "slot frequency {freq} strays from {p}"
            );
        }
    }

    #[test]
    fn three_frozen_paths_are_rejected_for_calpha() {
        let model = canonical_two_state(2);
        let paths = vec![vec![0usize, 0]; 3];
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(
            run_calpha_smc(&model, &paths, 8, &AlphaPolicy::Uniform, 1.0, &mut rng).unwrap_err(),
            Error::TooManyFrozenPaths
        );
    }

    #[test]
    fn catalogue_without_distinct_mass_is_degenerate() {
        // Both rows point at slot 1, so no distinct pair of slots can be
        // reached from any predecessor pair.
        let collapsing = AlphaMatrix::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let model = canonical_two_state(2);
        let paths = vec![vec![0usize, 0], vec![1usize, 1]];
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        assert_eq!(
            run_calpha_smc(
                &model,
                &paths,
                2,
                &AlphaPolicy::Fixed(vec![collapsing]),
                1.0,
                &mut rng,
            )
            .unwrap_err(),
            Error::CatalogueDegenerateForConditioning
        );
    }

    #[test]
    fn iterated_kernels_with_one_particle_are_constant() {
        let model = canonical_two_state(3);
        let y = vec![1usize, 0, 1];
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        assert_eq!(icsmc_step(&model, &y, 1, &mut rng).unwrap(), y);
        assert_eq!(
            icalpha_step(&model, &y, 1, &AlphaPolicy::Uniform, 1.0, &mut rng).unwrap(),
            y
        );
    }

    #[test]
    fn pg_step_on_a_single_parameter_grid_keeps_theta() {
        let grid =
            crate::model::ParamGridModel::new(vec![1.0], vec![canonical_two_state(2)]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        for _ in 0..10 {
            let (theta, z) = pg_step(&grid, 0, &[0, 1], 4, None, &mut rng).unwrap();
            assert_eq!(theta, 0);
            assert_eq!(z.len(), 2);
        }
    }

    #[test]
    fn pg_step_advances_both_coordinates_on_a_real_grid() {
        let grid = param_grid_pair();
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let (theta, z) = pg_step(&grid, 0, &[0, 1], 4, None, &mut rng).unwrap();
        assert!(theta < grid.grid_len());
        assert_eq!(z.len(), grid.horizon());
    }

    #[test]
    fn pg_step_rejects_paths_outside_every_support() {
        // The path sits exactly where the only model's potential vanishes.
        let dead = FiniteModel::new(
            vec![1.0, 0.0],
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![0.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let single = crate::model::ParamGridModel::new(vec![1.0], vec![dead]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        assert_eq!(
            pg_step(&single, 0, &[0, 0], 4, None, &mut rng).unwrap_err(),
            Error::ParameterPosteriorDegenerate
        );
    }

    #[test]
    fn run_chain_records_initial_and_is_deterministic() {
        let model = canonical_two_state(2);
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let chain = run_chain(
            |y: &Vec<usize>, rng: &mut dyn RngCore| icsmc_step(&model, y, 3, rng),
            vec![0usize, 1],
            0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(chain, vec![vec![0, 1]]);

        let run = |seed: u64| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            run_chain(
                |y: &Vec<usize>, rng: &mut dyn RngCore| icsmc_step(&model, y, 3, rng),
                vec![0usize, 1],
                25,
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(run(31), run(31));
        assert_eq!(run(31).len(), 26);
    }
}
