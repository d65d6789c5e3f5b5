//! Model interfaces and the finite-state reference model.
//!
//! A model is an initial distribution, a sequence of Markov transitions, and
//! a nonnegative potential per step:
//!
//! | quantity            | code                        | indices           |
//! |---------------------|-----------------------------|-------------------|
//! | initial law         | `sample_initial`            | step 0            |
//! | transition into `s` | `sample_transition(s, ..)`  | `s` in `1..t`     |
//! | step-`s` potential  | `potential(s, ..)`          | `s` in `0..t`     |
//!
//! A path is a state sequence of length `horizon`. The updated target weights
//! a path by the product of all its potentials; the predictive target leaves
//! the final potential out.

use rand::RngCore;

use crate::resampling::draw_categorical;
use crate::{Error, Result};

/// Tolerance for checks that a vector of probabilities sums to one.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A Feynman-Kac model: proposal chain plus per-step potentials.
///
/// Implementations must keep `potential` nonnegative and finite for every
/// reachable state; samplers treat violations as caller error.
pub trait FeynmanKacModel {
    type State: Clone + PartialEq + std::fmt::Debug;

    /// Number of steps; paths have exactly this many states.
    fn horizon(&self) -> usize;

    /// Draws the step-0 state.
    fn sample_initial(&self, rng: &mut dyn RngCore) -> Self::State;

    /// Draws the step-`step` state given the step-`step - 1` state,
    /// for `step` in `1..horizon`.
    fn sample_transition(
        &self,
        step: usize,
        from: &Self::State,
        rng: &mut dyn RngCore,
    ) -> Self::State;

    /// Potential attached at `step` in `0..horizon`.
    fn potential(&self, step: usize, state: &Self::State) -> f64;
}

/// Product of the potentials along (a prefix of) a path.
///
/// The product runs over `path.len()` steps; an empty path yields 1.
///
/// # Errors
///
/// [`Error::HorizonExceeded`] when the path is longer than the horizon.
pub fn product_potential<M: FeynmanKacModel>(model: &M, path: &[M::State]) -> Result<f64> {
    if path.len() > model.horizon() {
        return Err(Error::HorizonExceeded);
    }
    Ok(path
        .iter()
        .enumerate()
        .map(|(s, x)| model.potential(s, x))
        .product())
}

/// Finite-state model with explicit tables, the substrate for every exact
/// computation in [`crate::oracle`].
///
/// States are `0..state_count`. The constructor enforces shapes only;
/// numerical soundness (row normalization, nonnegativity, a reachable
/// target) is reported by [`FiniteModel::validate`] so that deliberately
/// broken instances can still be built and inspected.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteModel {
    state_count: usize,
    initial: Vec<f64>,
    /// `transitions[s - 1][from][to]` drives the step-`s` proposal.
    transitions: Vec<Vec<Vec<f64>>>,
    /// `potentials[s][state]` is the step-`s` potential.
    potentials: Vec<Vec<f64>>,
}

impl FiniteModel {
    /// Builds a model from explicit tables.
    ///
    /// # Errors
    ///
    /// [`Error::Dimension`] when shapes are inconsistent: `horizon` is the
    /// number of potential vectors and there must be `horizon - 1` transition
    /// matrices, all of size `state_count`.
    pub fn new(
        initial: Vec<f64>,
        transitions: Vec<Vec<Vec<f64>>>,
        potentials: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let state_count = initial.len();
        if state_count == 0 {
            return Err(Error::Dimension("empty initial distribution".into()));
        }
        if potentials.is_empty() {
            return Err(Error::Dimension("at least one potential required".into()));
        }
        if transitions.len() + 1 != potentials.len() {
            return Err(Error::Dimension(format!(
                "{} transition matrices do not fit horizon {}",
                transitions.len(),
                potentials.len()
            )));
        }
        for (s, m) in transitions.iter().enumerate() {
            if m.len() != state_count || m.iter().any(|row| row.len() != state_count) {
                return Err(Error::Dimension(format!(
                    "transition matrix {s} is not {state_count}x{state_count}"
                )));
            }
        }
        for (s, g) in potentials.iter().enumerate() {
            if g.len() != state_count {
                return Err(Error::Dimension(format!(
                    "potential vector {s} has length {} instead of {state_count}",
                    g.len()
                )));
            }
        }
        Ok(Self {
            state_count,
            initial,
            transitions,
            potentials,
        })
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    /// Number of potential steps; paths have this many states.
    pub fn horizon(&self) -> usize {
        self.potentials.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Transition matrix driving the step-`step` proposal, `step` in
    /// `1..horizon`; `rows[from][to]`.
    pub fn transition(&self, step: usize) -> &[Vec<f64>] {
        &self.transitions[step - 1]
    }

    /// Potential vector of `step` in `0..horizon`.
    pub fn potential_vec(&self, step: usize) -> &[f64] {
        &self.potentials[step]
    }

    /// Proposal density of a full or partial path: initial mass times the
    /// transition entries along it (no potentials).
    pub fn path_density(&self, path: &[usize]) -> f64 {
        if path.is_empty() {
            return 1.0;
        }
        let mut dens = self.initial[path[0]];
        for s in 1..path.len() {
            dens *= self.transitions[s - 1][path[s - 1]][path[s]];
        }
        dens
    }

    /// Semantic checks, returned as human-readable violations (empty when the
    /// model is sound): normalization of the initial law and of every
    /// transition row, nonnegative finite potentials, and a target that
    /// carries mass at all.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if !is_normalized(&self.initial) {
            violations.push("initial not normalized".to_string());
        }
        for (idx, m) in self.transitions.iter().enumerate() {
            for (from, row) in m.iter().enumerate() {
                if !is_normalized(row) {
                    violations.push(format!(
                        "transition row not normalized (step {}, state {from})",
                        idx + 1
                    ));
                }
            }
        }
        for (s, g) in self.potentials.iter().enumerate() {
            for (x, &v) in g.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    violations.push(format!("invalid potential (step {s}, state {x})"));
                }
            }
        }
        if self.updated_mass() <= 0.0 {
            violations.push("target undefined".to_string());
        }
        violations
    }

    /// Total updated mass: the normalizer of the final target, computed by a
    /// forward pass. Zero means no path survives all potentials.
    fn updated_mass(&self) -> f64 {
        let mut forward: Vec<f64> = self
            .initial
            .iter()
            .zip(&self.potentials[0])
            .map(|(&mu, &g)| mu.max(0.0) * g.max(0.0))
            .collect();
        for s in 1..self.horizon() {
            let mut next = vec![0.0; self.state_count];
            for (from, &f) in forward.iter().enumerate() {
                if f == 0.0 {
                    continue;
                }
                for (nx, &p) in next.iter_mut().zip(&self.transitions[s - 1][from]) {
                    *nx += f * p.max(0.0);
                }
            }
            for (to, n) in next.iter_mut().enumerate() {
                *n *= self.potentials[s][to].max(0.0);
            }
            forward = next;
        }
        forward.iter().sum()
    }

    /// The same model cut off after `horizon` steps.
    ///
    /// # Errors
    ///
    /// [`Error::HorizonExceeded`] when `horizon` exceeds the model's;
    /// [`Error::Dimension`] when it is zero.
    pub fn truncate(&self, horizon: usize) -> Result<FiniteModel> {
        if horizon > self.horizon() {
            return Err(Error::HorizonExceeded);
        }
        if horizon == 0 {
            return Err(Error::Dimension("horizon must be positive".into()));
        }
        FiniteModel::new(
            self.initial.clone(),
            self.transitions[..horizon - 1].to_vec(),
            self.potentials[..horizon].to_vec(),
        )
    }
}

impl FeynmanKacModel for FiniteModel {
    type State = usize;

    fn horizon(&self) -> usize {
        self.potentials.len()
    }

    fn sample_initial(&self, rng: &mut dyn RngCore) -> usize {
        draw_categorical(&self.initial, rng).expect("initial distribution carries no mass")
    }

    fn sample_transition(&self, step: usize, from: &usize, rng: &mut dyn RngCore) -> usize {
        draw_categorical(&self.transitions[step - 1][*from], rng)
            .expect("transition row carries no mass")
    }

    fn potential(&self, step: usize, state: &usize) -> f64 {
        self.potentials[step][*state]
    }
}

fn is_normalized(row: &[f64]) -> bool {
    if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return false;
    }
    (row.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL
}

/// A finite parameter grid, a prior over it, and one finite model per
/// parameter; the substrate of the particle Gibbs sampler.
///
/// The joint target is `prior(theta)` times the updated path density of the
/// theta-model (proposal density times all potentials).
#[derive(Debug, Clone)]
pub struct ParamGridModel {
    prior: Vec<f64>,
    models: Vec<FiniteModel>,
}

impl ParamGridModel {
    /// # Errors
    ///
    /// [`Error::Dimension`] when the prior and model list disagree in length,
    /// the list is empty, or the models differ in state count or horizon.
    pub fn new(prior: Vec<f64>, models: Vec<FiniteModel>) -> Result<Self> {
        if prior.is_empty() || prior.len() != models.len() {
            return Err(Error::Dimension(format!(
                "prior length {} does not match {} models",
                prior.len(),
                models.len()
            )));
        }
        let (s0, t0) = (models[0].state_count(), models[0].horizon());
        if models
            .iter()
            .any(|m| m.state_count() != s0 || m.horizon() != t0)
        {
            return Err(Error::Dimension(
                "models must share state count and horizon".into(),
            ));
        }
        Ok(Self { prior, models })
    }

    pub fn grid_len(&self) -> usize {
        self.prior.len()
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn model(&self, theta: usize) -> &FiniteModel {
        &self.models[theta]
    }

    pub fn state_count(&self) -> usize {
        self.models[0].state_count()
    }

    pub fn horizon(&self) -> usize {
        self.models[0].horizon()
    }

    /// Unnormalized joint mass of `(theta, path)` under the target: prior
    /// times proposal density times every potential along the path.
    pub fn joint_mass(&self, theta: usize, path: &[usize]) -> Result<f64> {
        let model = &self.models[theta];
        Ok(self.prior[theta] * model.path_density(path) * product_potential(model, path)?)
    }

    /// Normalized posterior over the grid given a full path.
    ///
    /// # Errors
    ///
    /// [`Error::ParameterPosteriorDegenerate`] when every parameter has zero
    /// mass at the path.
    pub fn posterior_given_path(&self, path: &[usize]) -> Result<Vec<f64>> {
        let mut w = Vec::with_capacity(self.grid_len());
        for theta in 0..self.grid_len() {
            w.push(self.joint_mass(theta, path)?);
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::ParameterPosteriorDegenerate);
        }
        for v in &mut w {
            *v /= total;
        }
        Ok(w)
    }
}
