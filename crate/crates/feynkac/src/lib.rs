//! Discrete-time Feynman-Kac particle inference.
//!
//! The library covers three layers:
//!
//! * **Samplers** ([`engine`], [`conditional`]): sequential importance
//!   sampling, sampling-importance-resampling, and the adaptive-resampling
//!   family driven by a catalogue of Markov matrices, plus their conditional
//!   variants and the particle Gibbs step built on top of them.
//! * **Exact oracles** ([`oracle`]): for finite-state models, closed-form
//!   marginals, joints, normalizers, backward kernels, exact sampler laws by
//!   enumeration, and exact transition matrices of the conditional kernels.
//! * **Diagnostics** ([`ess`], [`bounds`]): the p-norm effective-sample-size
//!   family and nonasymptotic Kullback-Leibler bounds on the bias of the
//!   normalized particle approximations, with the constants they need.
//!
//! States are generic over [`model::FeynmanKacModel`]; everything exact is
//! specialized to [`model::FiniteModel`]. Steps are indexed `0..horizon`
//! throughout: `potential(s, x)` is the weight attached at step `s`, and
//! `sample_transition(s, from)` proposes the step-`s` state from the
//! step-`s-1` state.

pub mod bounds;
pub mod conditional;
pub mod engine;
pub mod ess;
pub mod fixtures;
pub mod model;
pub mod oracle;
pub mod resampling;
pub mod timegrid;

pub(crate) mod numerics;

use thiserror::Error;

/// Errors shared across the crate.
///
/// Variants map one-to-one onto the failure modes of the public operations;
/// the display strings are part of the contract and are matched by tests.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A weight vector is empty, contains a negative or non-finite entry, or
    /// carries no mass.
    #[error("degenerate weights")]
    DegenerateWeights,
    /// An effective-sample-size order below one was requested.
    #[error("invalid order")]
    InvalidOrder,
    /// A path is longer than the model horizon.
    #[error("horizon exceeded")]
    HorizonExceeded,
    /// A quantity that compares distinct particle slots was requested for a
    /// single particle.
    #[error("undefined for single particle")]
    SingleParticle,
    /// Frozen trajectories were given clashing slot indices.
    #[error("lineages not distinct")]
    LineagesNotDistinct,
    /// More trajectories were frozen than the sampler supports.
    #[error("too many frozen paths")]
    TooManyFrozenPaths,
    /// A slot-tuple normalizer of the conditional adaptive sampler is not
    /// finite and positive.
    #[error("alpha catalogue degenerate for conditioning")]
    CatalogueDegenerateForConditioning,
    /// Every grid parameter has zero posterior mass at the conditioned path.
    #[error("parameter posterior degenerate")]
    ParameterPosteriorDegenerate,
    /// The path space is too large to tabulate.
    #[error("enumeration too large")]
    EnumerationTooLarge,
    /// The exact outcome enumeration would exceed the cost guard.
    #[error("use monte-carlo mode")]
    UseMonteCarloMode,
    /// A Monte Carlo average over zero replications was requested.
    #[error("no replications")]
    NoReplications,
    /// Absolute continuity fails where a divergence requires it.
    #[error("support mismatch")]
    SupportMismatch,
    /// No declared assumption yields a finite bound for the algorithm.
    #[error("no applicable bound")]
    NoApplicableBound,
    /// The catalogue's column overlap leaves no minorization mass.
    #[error("degenerate catalogue")]
    DegenerateCatalogue,
    /// The requested empirical measure carries no mass to sample from.
    #[error("no valid sample")]
    NoValidSample,
    /// Inputs have inconsistent shapes or out-of-range indices.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;
