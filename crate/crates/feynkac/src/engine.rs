//! Particle system runners: sequential importance sampling, sampling
//! importance resampling, and the matrix-resampling sampler that generalizes
//! both.
//!
//! All runners share one generator-consumption contract so that runs are
//! reproducible and comparable across algorithms:
//!
//! * generation 0 draws `N` initial proposals in particle order;
//! * every later generation draws its ancestor indices in particle order,
//!   then its proposals in particle order;
//! * each categorical draw consumes exactly one `f64`, except that a
//!   point-mass categorical consumes nothing.
//!
//! The exception for point masses means a run with identity resampling
//! consumes exactly the same stream as a plain sequential run, which makes
//! the two directly comparable draw by draw.

use rand::RngCore;

use crate::ess::{entropic_ess, normalize, p_ess};
use crate::model::FeynmanKacModel;
use crate::numerics::ksum;
use crate::resampling::{draw_categorical, multinomial_resample, select_alpha, AlphaPolicy};
use crate::{Error, Result};

/// Relative slack used when checking the realized `∞`-ESS against its
/// configured floor, absorbing summation round-off at exact ties.
const ESS_FLAG_SLACK: f64 = 1e-12;

/// Which of the four empirical measures a consumer wants.
///
/// `Updated` measures weight particles by their full-horizon weights times
/// the final potential; `Predictive` measures omit the final potential.
/// `Joint` measures put mass on reconstructed trajectories, `Marginal`
/// measures on terminal states only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TargetKind {
    UpdatedJoint,
    UpdatedMarginal,
    PredictiveJoint,
    PredictiveMarginal,
}

impl TargetKind {
    /// All four measures, in the fixed order used by reports.
    pub const ALL: [TargetKind; 4] = [
        TargetKind::UpdatedJoint,
        TargetKind::UpdatedMarginal,
        TargetKind::PredictiveJoint,
        TargetKind::PredictiveMarginal,
    ];

    pub fn is_joint(self) -> bool {
        matches!(self, TargetKind::UpdatedJoint | TargetKind::PredictiveJoint)
    }

    pub fn is_updated(self) -> bool {
        matches!(self, TargetKind::UpdatedJoint | TargetKind::UpdatedMarginal)
    }
}

/// A value drawn from one of the empirical measures.
#[derive(Clone, Debug, PartialEq)]
pub enum Drawn<S> {
    Path(Vec<S>),
    State(S),
}

/// Effective sample sizes of one generation's weight vector at the three
/// reported orders. Entries are NaN when the generation's weights were all
/// zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssTriple {
    pub entropic: f64,
    pub order_two: f64,
    pub infinity: f64,
}

/// Per-generation record of the hypotheses the convergence bounds need.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepFlags {
    /// Whether the realized `∞`-ESS stayed at or above `ζN`. Runners without
    /// a configured `ζ` record plain non-degeneracy here.
    pub inf_ess_ok: bool,
    /// Whether the resampling matrix applied at this generation was doubly
    /// stochastic (vacuously true at generation 0 and for runners with a
    /// fixed scheme).
    pub doubly_stochastic: bool,
}

/// Marks the earliest generation at which every relevant weight vanished.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Degeneracy {
    /// Generation index at which the weight system degenerated. For halted
    /// runs this is the generation that could not be built.
    pub step: usize,
    /// Whether the run stopped short of the horizon.
    pub halted: bool,
}

/// Particle trajectories, ancestor indices, and unnormalized weights for
/// every completed generation.
///
/// Generation `s` holds the particles at time `s` and, for `s ≥ 1`, the
/// ancestor indices that produced them; the generation-0 ancestor row is the
/// identity map. Lineages reconstruct backwards: the lineage of particle `k`
/// ends at `k` and follows ancestor rows toward generation 0.
///
/// Weight vectors are unnormalized and may carry an arbitrary common scale
/// (the sequential runner rescales by the per-generation maximum to avoid
/// underflow); every consumer in this crate is scale-free.
#[derive(Clone, Debug)]
pub struct ParticleSystem<S> {
    pub(crate) states: Vec<Vec<S>>,
    pub(crate) ancestors: Vec<Vec<usize>>,
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) selection: Option<usize>,
    pub(crate) frozen_slots: Vec<Vec<usize>>,
}

impl<S: Clone> ParticleSystem<S> {
    /// Number of completed generations.
    pub fn generations(&self) -> usize {
        self.states.len()
    }

    pub fn particle_count(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn states(&self, generation: usize) -> &[S] {
        &self.states[generation]
    }

    pub fn weights(&self, generation: usize) -> &[f64] {
        &self.weights[generation]
    }

    pub fn ancestors(&self, generation: usize) -> &[usize] {
        &self.ancestors[generation]
    }

    /// Terminal selection index, when the run drew one.
    pub fn selection(&self) -> Option<usize> {
        self.selection
    }

    /// Per-generation slot indices of conditioned trajectories; empty for
    /// unconditioned runs. Row `s` lists the slot of each frozen trajectory
    /// at generation `s`.
    pub fn frozen_slots(&self) -> &[Vec<usize>] {
        &self.frozen_slots
    }

    /// Ancestor chain of the particle at slot `k` in the final generation,
    /// from generation 0 to the final generation.
    pub fn lineage(&self, k: usize) -> Vec<usize> {
        let gens = self.generations();
        let mut chain = vec![0usize; gens];
        let mut slot = k;
        for s in (0..gens).rev() {
            chain[s] = slot;
            slot = self.ancestors[s][slot];
        }
        chain
    }

    /// Trajectory carried by the particle at slot `k` in the final
    /// generation.
    pub fn path(&self, k: usize) -> Vec<S> {
        self.lineage(k)
            .iter()
            .enumerate()
            .map(|(s, &slot)| self.states[s][slot].clone())
            .collect()
    }
}

/// A completed run: the particle system plus its normalizer estimates, ESS
/// trace, hypothesis flags, and degeneracy record.
#[derive(Clone, Debug)]
pub struct SmcOutput<S> {
    pub system: ParticleSystem<S>,
    /// Estimate of the full-horizon normalizer.
    pub z: f64,
    /// Estimate of the predictive normalizer (final potential omitted).
    pub z_hat: f64,
    /// Per-generation normalizer estimates; the last entry equals `z`.
    pub z_trace: Vec<f64>,
    /// Per-generation effective sample sizes of the weight vectors.
    pub ess: Vec<EssTriple>,
    pub flags: Vec<StepFlags>,
    pub degeneracy: Option<Degeneracy>,
    /// Unnormalized terminal weights including the final potential; empty
    /// when the run halted early.
    updated_weights: Vec<f64>,
}

impl<S: Clone> SmcOutput<S> {
    fn check_complete(&self) -> Result<()> {
        match self.degeneracy {
            Some(d) if d.halted => Err(Error::DegenerateWeights),
            _ => Ok(()),
        }
    }

    fn raw_weights(&self, target: TargetKind) -> Result<&[f64]> {
        self.check_complete()?;
        if target.is_updated() {
            Ok(&self.updated_weights)
        } else {
            Ok(self.system.weights.last().map_or(&[][..], Vec::as_slice))
        }
    }

    fn measure(&self, target: TargetKind) -> Result<Vec<(f64, usize)>> {
        let normalized = normalize(self.raw_weights(target)?)?;
        Ok(normalized
            .into_iter()
            .enumerate()
            .map(|(k, w)| (w, k))
            .collect())
    }

    /// Normalized empirical measure on trajectories, weighted by the
    /// terminal weights times the final potential.
    pub fn updated_joint(&self) -> Result<Vec<(f64, Vec<S>)>> {
        Ok(self
            .measure(TargetKind::UpdatedJoint)?
            .into_iter()
            .map(|(w, k)| (w, self.system.path(k)))
            .collect())
    }

    /// Normalized empirical measure on terminal states, weighted as in
    /// [`updated_joint`](Self::updated_joint).
    pub fn updated_marginal(&self) -> Result<Vec<(f64, S)>> {
        let last = self.system.states.last().expect("at least one generation");
        Ok(self
            .measure(TargetKind::UpdatedMarginal)?
            .into_iter()
            .map(|(w, k)| (w, last[k].clone()))
            .collect())
    }

    /// Normalized empirical measure on trajectories, weighted by the
    /// terminal weights with the final potential omitted.
    pub fn predictive_joint(&self) -> Result<Vec<(f64, Vec<S>)>> {
        Ok(self
            .measure(TargetKind::PredictiveJoint)?
            .into_iter()
            .map(|(w, k)| (w, self.system.path(k)))
            .collect())
    }

    /// Normalized empirical measure on terminal states, weighted as in
    /// [`predictive_joint`](Self::predictive_joint).
    pub fn predictive_marginal(&self) -> Result<Vec<(f64, S)>> {
        let last = self.system.states.last().expect("at least one generation");
        Ok(self
            .measure(TargetKind::PredictiveMarginal)?
            .into_iter()
            .map(|(w, k)| (w, last[k].clone()))
            .collect())
    }
}

/// Draws one trajectory or terminal state from the requested empirical
/// measure, consuming one `f64` (none if the measure is a point mass).
pub fn sample_path<S: Clone>(
    output: &SmcOutput<S>,
    target: TargetKind,
    rng: &mut dyn RngCore,
) -> Result<Drawn<S>> {
    let weights = output
        .raw_weights(target)
        .map_err(|_| Error::NoValidSample)?;
    let k = draw_categorical(weights, rng).map_err(|_| Error::NoValidSample)?;
    if target.is_joint() {
        Ok(Drawn::Path(output.system.path(k)))
    } else {
        let last = output
            .system
            .states
            .last()
            .expect("at least one generation");
        Ok(Drawn::State(last[k].clone()))
    }
}

fn check_run_shape<M: FeynmanKacModel>(model: &M, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::Dimension("particle count must be positive".into()));
    }
    let t = model.horizon();
    if t == 0 {
        return Err(Error::Dimension("horizon must be positive".into()));
    }
    Ok(t)
}

pub(crate) fn ess_triple(weights: &[f64]) -> EssTriple {
    EssTriple {
        entropic: entropic_ess(weights).unwrap_or(f64::NAN),
        order_two: p_ess(weights, 2.0).unwrap_or(f64::NAN),
        infinity: p_ess(weights, f64::INFINITY).unwrap_or(f64::NAN),
    }
}

/// Mean of `exp(logs[k])`, computed stably by factoring out the maximum.
/// Returns 0 when every entry is `-∞`.
fn exp_mean(logs: &[f64]) -> f64 {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return 0.0;
    }
    m.exp() * ksum(logs.iter().map(|&l| (l - m).exp())) / logs.len() as f64
}

/// Weights rescaled by the generation maximum: `exp(logs[k] - max)`.
fn rescaled_weights(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return vec![0.0; logs.len()];
    }
    logs.iter().map(|&l| (l - m).exp()).collect()
}

/// Runs the sequential sampler: every particle extends its own trajectory
/// and accumulates the product of potentials as its weight.
///
/// Path products are accumulated in the log domain and the stored
/// per-generation weight vectors are rescaled by their maximum, so long
/// horizons do not underflow. The normalizer estimates are exact up to
/// round-off. The run never halts early; if every path product vanishes the
/// output carries a degeneracy record and the affected measures error on
/// access.
pub fn run_sis<M: FeynmanKacModel>(
    model: &M,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<SmcOutput<M::State>> {
    let t = check_run_shape(model, n)?;
    let mut states: Vec<Vec<M::State>> = Vec::with_capacity(t);
    let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(t);
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut ess = Vec::with_capacity(t);
    let mut flags = Vec::with_capacity(t);
    let mut z_trace = Vec::with_capacity(t);
    let mut degeneracy: Option<Degeneracy> = None;

    states.push((0..n).map(|_| model.sample_initial(rng)).collect());
    ancestors.push((0..n).collect());
    weights.push(vec![1.0; n]);
    // Log-domain running products of potentials, one potential behind the
    // current generation.
    let mut log_products = vec![0.0f64; n];

    for s in 1..t {
        for (lp, state) in log_products.iter_mut().zip(&states[s - 1]) {
            *lp += model.potential(s - 1, state).ln();
        }
        let w = rescaled_weights(&log_products);
        if w.iter().all(|&v| v == 0.0) && degeneracy.is_none() {
            degeneracy = Some(Degeneracy {
                step: s,
                halted: false,
            });
        }
        ancestors.push((0..n).collect());
        let prev = &states[s - 1];
        let next: Vec<M::State> = prev
            .iter()
            .map(|state| model.sample_transition(s, state, rng))
            .collect();
        states.push(next);
        weights.push(w);
    }

    let updated_logs: Vec<f64> = log_products
        .iter()
        .zip(states.last().expect("at least one generation"))
        .map(|(&lp, state)| lp + model.potential(t - 1, state).ln())
        .collect();
    let z = exp_mean(&updated_logs);
    let z_hat = exp_mean(&log_products);
    if z == 0.0 && degeneracy.is_none() {
        degeneracy = Some(Degeneracy {
            step: t - 1,
            halted: false,
        });
    }

    // Per-generation normalizer estimates, each including that generation's
    // potential.
    let mut running = vec![0.0f64; n];
    for s in 0..t {
        for (r, state) in running.iter_mut().zip(&states[s]) {
            *r += model.potential(s, state).ln();
        }
        z_trace.push(exp_mean(&running));
        ess.push(ess_triple(&weights[s]));
        flags.push(StepFlags {
            inf_ess_ok: weights[s].iter().any(|&v| v > 0.0),
            doubly_stochastic: true,
        });
    }

    let updated_weights = rescaled_weights(&updated_logs);
    Ok(SmcOutput {
        system: ParticleSystem {
            states,
            ancestors,
            weights,
            selection: None,
            frozen_slots: Vec::new(),
        },
        z,
        z_hat,
        z_trace,
        ess,
        flags,
        degeneracy,
        updated_weights,
    })
}

/// Runs the resampling sampler: every generation resamples ancestors in
/// proportion to the previous generation's potentials, so weight vectors
/// stay constant across particles.
///
/// Halts with a degeneracy record if every potential vanishes at some
/// generation, since the resampling categorical is then undefined.
pub fn run_sir<M: FeynmanKacModel>(
    model: &M,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<SmcOutput<M::State>> {
    let t = check_run_shape(model, n)?;
    let mut states: Vec<Vec<M::State>> = Vec::with_capacity(t);
    let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(t);
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut degeneracy: Option<Degeneracy> = None;

    states.push((0..n).map(|_| model.sample_initial(rng)).collect());
    ancestors.push((0..n).collect());
    weights.push(vec![1.0; n]);
    let mut common_weight = 1.0f64;

    for s in 1..t {
        let one_step: Vec<f64> = states[s - 1]
            .iter()
            .map(|state| model.potential(s - 1, state))
            .collect();
        let total = ksum(one_step.iter().cloned());
        if total == 0.0 {
            degeneracy = Some(Degeneracy {
                step: s,
                halted: true,
            });
            break;
        }
        let probs = normalize(&one_step)?;
        let drawn = multinomial_resample(&probs, n, rng)?;
        let next: Vec<M::State> = drawn
            .iter()
            .map(|&a| model.sample_transition(s, &states[s - 1][a], rng))
            .collect();
        ancestors.push(drawn);
        states.push(next);
        common_weight *= total / n as f64;
        weights.push(vec![common_weight; n]);
    }

    let built = states.len();
    let mut z_trace = Vec::with_capacity(built);
    let mut ess = Vec::with_capacity(built);
    let mut flags = Vec::with_capacity(built);
    for s in 0..built {
        let potentials: Vec<f64> = states[s]
            .iter()
            .map(|state| model.potential(s, state))
            .collect();
        z_trace.push(weights[s][0] * ksum(potentials.iter().cloned()) / n as f64);
        ess.push(ess_triple(&weights[s]));
        flags.push(StepFlags {
            inf_ess_ok: weights[s].iter().any(|&v| v > 0.0),
            doubly_stochastic: true,
        });
    }

    let halted = degeneracy.is_some_and(|d| d.halted);
    let (z, z_hat, updated_weights) = if halted {
        (0.0, 0.0, Vec::new())
    } else {
        let final_potentials: Vec<f64> = states[t - 1]
            .iter()
            .map(|state| model.potential(t - 1, state))
            .collect();
        let z = common_weight * ksum(final_potentials.iter().cloned()) / n as f64;
        if z == 0.0 && degeneracy.is_none() {
            degeneracy = Some(Degeneracy {
                step: t - 1,
                halted: false,
            });
        }
        let updated: Vec<f64> = final_potentials
            .iter()
            .map(|&g| common_weight * g)
            .collect();
        (z, common_weight, updated)
    };

    Ok(SmcOutput {
        system: ParticleSystem {
            states,
            ancestors,
            weights,
            selection: None,
            frozen_slots: Vec::new(),
        },
        z,
        z_hat,
        z_trace,
        ess,
        flags,
        degeneracy,
        updated_weights,
    })
}

/// Runs the matrix-resampling sampler: each generation selects a resampling
/// matrix through `policy`, propagates the weight recursion, and draws each
/// particle's ancestor from its matrix row.
///
/// `zeta` is the `∞`-ESS floor recorded in the per-generation flags; it does
/// not influence the dynamics (an adaptive policy carries its own
/// threshold). Any particle whose resampling row carries zero mass leaves
/// that particle's ancestor categorical undefined, so the run halts with a
/// degeneracy record.
pub fn run_alpha_smc<M: FeynmanKacModel>(
    model: &M,
    n: usize,
    policy: &AlphaPolicy,
    zeta: f64,
    rng: &mut dyn RngCore,
) -> Result<SmcOutput<M::State>> {
    let t = check_run_shape(model, n)?;
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(Error::Dimension("ess floor must lie in (0, 1]".into()));
    }
    let mut states: Vec<Vec<M::State>> = Vec::with_capacity(t);
    let mut ancestors: Vec<Vec<usize>> = Vec::with_capacity(t);
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut ess = Vec::with_capacity(t);
    let mut flags = Vec::with_capacity(t);
    let mut z_trace = Vec::with_capacity(t);
    let mut degeneracy: Option<Degeneracy> = None;

    states.push((0..n).map(|_| model.sample_initial(rng)).collect());
    ancestors.push((0..n).collect());
    let mut w = vec![1.0f64; n];
    weights.push(w.clone());
    ess.push(ess_triple(&w));
    flags.push(StepFlags {
        inf_ess_ok: true,
        doubly_stochastic: true,
    });

    for s in 1..t {
        let g_prev: Vec<f64> = states[s - 1]
            .iter()
            .map(|state| model.potential(s - 1, state))
            .collect();
        z_trace.push(ksum(w.iter().zip(&g_prev).map(|(&wk, &gk)| wk * gk)) / n as f64);

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
        if new_w.contains(&0.0) {
            degeneracy = Some(Degeneracy {
                step: s,
                halted: true,
            });
            break;
        }

        let mut drawn = Vec::with_capacity(n);
        for m in 0..n {
            let row: Vec<f64> = alpha
                .row(m)
                .iter()
                .zip(w.iter().zip(&g_prev))
                .map(|(&a, (&wk, &gk))| a * wk * gk)
                .collect();
            drawn.push(draw_categorical(&row, rng)?);
        }
        let next: Vec<M::State> = drawn
            .iter()
            .map(|&a| model.sample_transition(s, &states[s - 1][a], rng))
            .collect();

        if alpha.is_doubly_stochastic() {
            let conserved = ksum(new_w.iter().cloned()) / n as f64;
            let reference = z_trace[s - 1];
            debug_assert!(
                (conserved - reference).abs() <= 1e-9 * reference.abs().max(1.0),
                "doubly stochastic step must conserve the predictive normalizer"
            );
        }

        ancestors.push(drawn);
        states.push(next);
        let triple = ess_triple(&new_w);
        flags.push(StepFlags {
            inf_ess_ok: triple.infinity >= zeta * n as f64 * (1.0 - ESS_FLAG_SLACK),
            doubly_stochastic: alpha.is_doubly_stochastic(),
        });
        ess.push(triple);
        weights.push(new_w.clone());
        w = new_w;
    }

    let halted = degeneracy.is_some_and(|d| d.halted);
    let (z, z_hat, updated_weights) = if halted {
        (0.0, 0.0, Vec::new())
    } else {
        let final_potentials: Vec<f64> = states[t - 1]
            .iter()
            .map(|state| model.potential(t - 1, state))
            .collect();
        let updated: Vec<f64> = w
            .iter()
            .zip(&final_potentials)
            .map(|(&wk, &gk)| wk * gk)
            .collect();
        let z = ksum(updated.iter().cloned()) / n as f64;
        let z_hat = ksum(w.iter().cloned()) / n as f64;
        if z == 0.0 && degeneracy.is_none() {
            degeneracy = Some(Degeneracy {
                step: t - 1,
                halted: false,
            });
        }
        z_trace.push(z);
        (z, z_hat, updated)
    };

    Ok(SmcOutput {
        system: ParticleSystem {
            states,
            ancestors,
            weights,
            selection: None,
            frozen_slots: Vec::new(),
        },
        z,
        z_hat,
        z_trace,
        ess,
        flags,
        degeneracy,
        updated_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::canonical_two_state;
    use crate::model::FiniteModel;
    use crate::resampling::AlphaMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn flat_model(t: usize) -> FiniteModel {
        FiniteModel::new(
            vec![0.5, 0.5],
            vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]; t - 1],
            vec![vec![1.0, 1.0]; t],
        )
        .unwrap()
    }

    #[test]
    fn sis_unit_potentials_keep_uniform_weights() {
        let model = flat_model(4);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let out = run_sis(&model, 8, &mut rng).unwrap();
        for s in 0..4 {
            assert!(out.system.weights(s).iter().all(|&w| w == 1.0));
            assert_eq!(out.ess[s].infinity, 8.0);
        }
        assert_eq!(out.z, 1.0);
        assert_eq!(out.z_hat, 1.0);
        for (w, _) in out.updated_joint().unwrap() {
            assert!((w - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn sis_single_particle_is_point_mass() {
        let model = canonical_two_state(3);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let out = run_sis(&model, 1, &mut rng).unwrap();
        let joint = out.updated_joint().unwrap();
        assert_eq!(joint.len(), 1);
        assert_eq!(joint[0].0, 1.0);
        assert_eq!(joint[0].1, out.system.path(0));
    }

    #[test]
    fn sis_weights_match_path_products() {
        let model = canonical_two_state(3);
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let out = run_sis(&model, 16, &mut rng).unwrap();
        let products: Vec<f64> = (0..16)
            .map(|k| {
                let path = out.system.path(k);
                path.iter()
                    .enumerate()
                    .take(2)
                    .map(|(s, &x)| model.potential_vec(s)[x])
                    .product()
            })
            .collect();
        let weights = out.system.weights(2);
        let scale = products
            .iter()
            .zip(weights)
            .find(|(&p, _)| p > 0.0)
            .map(|(&p, &w)| w / p)
            .unwrap();
        for (&p, &w) in products.iter().zip(weights) {
            assert!((w - scale * p).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }

    #[test]
    fn sir_unit_potentials_give_unit_normalizer() {
        let model = flat_model(5);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let out = run_sir(&model, 6, &mut rng).unwrap();
        assert_eq!(out.z, 1.0);
        assert_eq!(out.z_hat, 1.0);
        let pred = out.predictive_marginal().unwrap();
        for (w, _) in pred {
            assert!((w - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sir_halts_when_every_potential_vanishes() {
        let model = FiniteModel::new(
            vec![1.0, 0.0],
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
            vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let out = run_sir(&model, 4, &mut rng).unwrap();
        let degeneracy = out.degeneracy.unwrap();
        assert!(degeneracy.halted);
        assert_eq!(degeneracy.step, 1);
        assert!(out.updated_joint().is_err());
        assert!(matches!(
            sample_path(&out, TargetKind::PredictiveJoint, &mut rng),
            Err(Error::NoValidSample)
        ));
    }

    #[test]
    fn identity_policy_matches_sis_stream_and_measure() {
        let model = canonical_two_state(4);
        let mut rng_a = ChaCha20Rng::seed_from_u64(9);
        let mut rng_b = rng_a.clone();
        let sis = run_sis(&model, 8, &mut rng_a).unwrap();
        let alpha = run_alpha_smc(&model, 8, &AlphaPolicy::Identity, 1.0, &mut rng_b).unwrap();
        assert_eq!(rng_a.next_u64(), rng_b.next_u64());
        for s in 0..4 {
            assert_eq!(sis.system.states(s), alpha.system.states(s));
        }
        let sis_marginal = sis.updated_marginal().unwrap();
        let alpha_marginal = alpha.updated_marginal().unwrap();
        for ((wa, xa), (wb, xb)) in sis_marginal.iter().zip(&alpha_marginal) {
            assert_eq!(xa, xb);
            assert!((wa - wb).abs() < 1e-12);
        }
        assert!((sis.z - alpha.z).abs() <= 1e-12 * sis.z.abs());
    }

    #[test]
    fn uniform_policy_mirrors_sir_weight_trace() {
        let model = canonical_two_state(4);
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let out = run_alpha_smc(&model, 6, &AlphaPolicy::Uniform, 1.0, &mut rng).unwrap();
        for s in 0..4 {
            let w = out.system.weights(s);
            assert!(w.iter().all(|&v| (v - w[0]).abs() <= 1e-15 * w[0].abs()));
            assert!((out.ess[s].infinity - 6.0).abs() < 1e-9);
        }
        assert!((out.z_hat - out.z_trace[2]).abs() <= 1e-12 * out.z_trace[2]);
    }

    #[test]
    fn alpha_run_records_ess_floor_violations() {
        // Potentials (1, 0) with identity resampling drive one particle's
        // weight to zero, so the infinity-ESS falls below N.
        let model = FiniteModel::new(
            vec![0.5, 0.5],
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![1.0, 0.1], vec![1.0, 1.0]],
        )
        .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        // Seed 1 puts at least one particle in each state for N = 8.
        let out = run_alpha_smc(&model, 8, &AlphaPolicy::Identity, 1.0, &mut rng).unwrap();
        assert!(!out.flags[1].inf_ess_ok);
        assert!(out.flags[1].doubly_stochastic);
    }

    #[test]
    fn fixed_singular_policy_halts_on_zero_row() {
        let dead_row = AlphaMatrix::new(vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let model = FiniteModel::new(
            vec![0.5, 0.5],
            vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
            vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let out = run_alpha_smc(
            &model,
            3,
            &AlphaPolicy::Fixed(vec![dead_row]),
            1.0,
            &mut rng,
        )
        .unwrap();
        let degeneracy = out.degeneracy.unwrap();
        assert!(degeneracy.halted);
        assert_eq!(out.system.generations(), 1);
    }

    #[test]
    fn lineages_reconstruct_through_ancestors() {
        let model = canonical_two_state(3);
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let out = run_sir(&model, 5, &mut rng).unwrap();
        for k in 0..5 {
            let lineage = out.system.lineage(k);
            assert_eq!(*lineage.last().unwrap(), k);
            for s in 1..3 {
                assert_eq!(lineage[s - 1], out.system.ancestors(s)[lineage[s]]);
            }
            let path = out.system.path(k);
            for s in 0..3 {
                assert_eq!(path[s], out.system.states(s)[lineage[s]]);
            }
        }
    }

    #[test]
    fn sample_path_frequencies_match_weights() {
        let model = canonical_two_state(2);
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let out = run_sir(&model, 3, &mut rng).unwrap();
        let marginal = out.updated_marginal().unwrap();
        let mut mass = [0.0f64; 2];
        for (w, x) in &marginal {
            mass[*x] += w;
        }
        let draws = 100_000usize;
        let mut hits = [0usize; 2];
        for _ in 0..draws {
            match sample_path(&out, TargetKind::UpdatedMarginal, &mut rng).unwrap() {
                Drawn::State(x) => hits[x] += 1,
                Drawn::Path(_) => unreachable!(),
            }
        }
        let freq = hits[0] as f64 / draws as f64;
        let sigma = (mass[0] * (1.0 - mass[0]) / draws as f64).sqrt();
        assert!((freq - mass[0]).abs() <= 3.0 * sigma.max(1e-6));
    }

    #[test]
    fn zero_particles_is_an_error() {
        let model = canonical_two_state(2);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(matches!(
            run_sis(&model, 0, &mut rng),
            Err(Error::Dimension(_))
        ));
    }
}
