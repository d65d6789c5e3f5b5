//! Config schema, parsing, and validation.
//!
//! Configs are TOML with four blocks: `experiment`, `model`, `smc`, and an
//! optional `chain` block, plus a top-level `seed` and optional `output`
//! path. Unknown keys are rejected. The full schema with one example per
//! experiment kind ships in `docs/config.md`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use feynkac::bounds::BoundAssumption;
use feynkac::engine::TargetKind;
use feynkac::model::{FiniteModel, ParamGridModel};
use feynkac::oracle::Algorithm;
use feynkac::resampling::AlphaPolicy;
use serde::Deserialize;

/// The experiment kinds the harness understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    KlVsN,
    BoundCheck,
    EssSuite,
    NormalizerCheck,
    IcsmcMinorization,
    TvDecay,
    PgErgodicity,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::KlVsN,
        ExperimentKind::BoundCheck,
        ExperimentKind::EssSuite,
        ExperimentKind::NormalizerCheck,
        ExperimentKind::IcsmcMinorization,
        ExperimentKind::TvDecay,
        ExperimentKind::PgErgodicity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::KlVsN => "kl_vs_n",
            ExperimentKind::BoundCheck => "bound_check",
            ExperimentKind::EssSuite => "ess_suite",
            ExperimentKind::NormalizerCheck => "normalizer_check",
            ExperimentKind::IcsmcMinorization => "icsmc_minorization",
            ExperimentKind::TvDecay => "tv_decay",
            ExperimentKind::PgErgodicity => "pg_ergodicity",
        }
    }

    fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|kind| kind.name() == name)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                anyhow!(
                    "unknown experiment.kind {name:?}; expected one of {}",
                    known.join(", ")
                )
            })
    }
}

/// The model a config describes: one finite model, or a parameter grid of
/// them sharing the initial law and potentials.
#[derive(Debug, Clone)]
pub enum ModelChoice {
    Single(FiniteModel),
    Grid(ParamGridModel),
}

/// A validated experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model_id: String,
    pub model: ModelChoice,
    pub smc: SmcConfig,
    pub chain: Option<ChainConfig>,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

/// Sampler settings shared by every experiment kind.
#[derive(Debug, Clone)]
pub struct SmcConfig {
    pub algorithm: Algorithm,
    /// Policy name for report columns; empty for the non-matrix samplers.
    pub policy_label: String,
    pub zeta: f64,
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub target: TargetKind,
    pub assumptions: Vec<BoundAssumption>,
}

/// Iterated-kernel settings for the chain-based experiments.
#[derive(Debug, Clone, Copy)]
pub struct ChainConfig {
    pub k_max: usize,
    pub chain_count: usize,
}

// Raw mirror of the file, shaped for serde.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    model: RawModel,
    smc: RawSmc,
    chain: Option<RawChain>,
    seed: u64,
    output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    kind: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    id: String,
    initial: Vec<f64>,
    horizon: Option<usize>,
    /// One transition matrix shared by every step.
    transition: Option<Vec<Vec<f64>>>,
    /// Per-step transition matrices.
    transitions: Option<Vec<Vec<Vec<f64>>>>,
    /// One potential vector shared by every step.
    potential: Option<Vec<f64>>,
    /// Per-step potential vectors.
    potentials: Option<Vec<Vec<f64>>>,
    /// Parameter prior; with `grid_transitions`, turns the model into a
    /// parameter grid.
    prior: Option<Vec<f64>>,
    /// Per-parameter shared transition matrices.
    grid_transitions: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSmc {
    algorithm: String,
    policy: Option<String>,
    zeta: Option<f64>,
    ess_order: Option<f64>,
    n_list: Vec<usize>,
    replications: Option<usize>,
    target: Option<String>,
    assumptions: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    k_max: usize,
    chain_count: Option<usize>,
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("could not read config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("invalid config {}", path.display()))
}

/// Parses and validates config text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text)?;
    let kind = ExperimentKind::parse(&raw.experiment.kind)?;
    let model = build_model(&raw.model)?;
    let smc = build_smc(&raw.smc)?;
    let chain = raw
        .chain
        .map(|c| -> Result<ChainConfig> {
            if c.k_max == 0 {
                bail!("chain.k_max must be positive");
            }
            let chain_count = c.chain_count.unwrap_or(1);
            if chain_count == 0 {
                bail!("chain.chain_count must be positive");
            }
            Ok(ChainConfig {
                k_max: c.k_max,
                chain_count,
            })
        })
        .transpose()?;

    match kind {
        ExperimentKind::PgErgodicity => {
            if !matches!(model, ModelChoice::Grid(_)) {
                bail!("pg_ergodicity requires model.prior and model.grid_transitions");
            }
            if chain.is_none() {
                bail!("pg_ergodicity requires a chain block");
            }
        }
        ExperimentKind::TvDecay => {
            if matches!(model, ModelChoice::Grid(_)) {
                bail!("tv_decay runs on a single model, not a parameter grid");
            }
            if chain.is_none() {
                bail!("tv_decay requires a chain block with k_max");
            }
        }
        _ => {
            if matches!(model, ModelChoice::Grid(_)) {
                bail!(
                    "{} runs on a single model, not a parameter grid",
                    kind.name()
                );
            }
            if chain.is_some() {
                bail!("the chain block applies only to tv_decay and pg_ergodicity");
            }
        }
    }

    Ok(ExperimentConfig {
        kind,
        model_id: raw.model.id.clone(),
        model,
        smc,
        chain,
        seed: raw.seed,
        output: raw.output,
    })
}

fn build_model(raw: &RawModel) -> Result<ModelChoice> {
    let potentials: Vec<Vec<f64>> = match (&raw.potentials, &raw.potential) {
        (Some(_), Some(_)) => bail!("model has both potentials and the potential shorthand"),
        (Some(per_step), None) => per_step.clone(),
        (None, Some(shared)) => {
            let horizon = raw
                .horizon
                .ok_or_else(|| anyhow!("model.horizon is required with the potential shorthand"))?;
            vec![shared.clone(); horizon]
        }
        (None, None) => bail!("model needs potentials or the potential shorthand"),
    };
    let horizon = potentials.len();
    if horizon == 0 {
        bail!("model horizon must be positive");
    }
    if let Some(declared) = raw.horizon {
        if declared != horizon {
            bail!("model.horizon is {declared} but {horizon} potential steps are given");
        }
    }

    let expand = |shared: &Vec<Vec<f64>>| vec![shared.clone(); horizon - 1];
    match (&raw.prior, &raw.grid_transitions) {
        (Some(prior), Some(grid)) => {
            if raw.transition.is_some() || raw.transitions.is_some() {
                bail!("grid models take transitions from model.grid_transitions only");
            }
            let models: Vec<FiniteModel> = grid
                .iter()
                .map(|shared| {
                    FiniteModel::new(raw.initial.clone(), expand(shared), potentials.clone())
                        .map_err(|e| anyhow!("invalid grid member: {e}"))
                })
                .collect::<Result<_>>()?;
            let grid_model = ParamGridModel::new(prior.clone(), models)
                .map_err(|e| anyhow!("invalid parameter grid: {e}"))?;
            Ok(ModelChoice::Grid(grid_model))
        }
        (None, None) => {
            let transitions: Vec<Vec<Vec<f64>>> = match (&raw.transitions, &raw.transition) {
                (Some(_), Some(_)) => {
                    bail!("model has both transitions and the transition shorthand")
                }
                (Some(per_step), None) => per_step.clone(),
                (None, Some(shared)) => expand(shared),
                (None, None) if horizon == 1 => Vec::new(),
                (None, None) => bail!("model needs transitions or the transition shorthand"),
            };
            let model = FiniteModel::new(raw.initial.clone(), transitions, potentials)
                .map_err(|e| anyhow!("invalid model: {e}"))?;
            Ok(ModelChoice::Single(model))
        }
        _ => bail!("model.prior and model.grid_transitions must be given together"),
    }
}

fn build_smc(raw: &RawSmc) -> Result<SmcConfig> {
    if raw.n_list.is_empty() {
        bail!("smc.n_list must not be empty");
    }
    if raw.n_list.windows(2).any(|w| w[0] >= w[1]) {
        bail!("smc.n_list must be strictly increasing");
    }
    if raw.n_list[0] == 0 {
        bail!("smc.n_list entries must be positive");
    }
    let zeta = raw.zeta.unwrap_or(1.0);
    if !(zeta > 0.0 && zeta <= 1.0) {
        bail!("smc.zeta must lie in (0, 1]");
    }
    let replications = raw.replications.unwrap_or(1);
    if replications == 0 {
        bail!("smc.replications must be at least 1");
    }

    let (algorithm, policy_label) = match raw.algorithm.as_str() {
        "sis" | "sir" => {
            if raw.policy.is_some() {
                bail!("smc.policy applies only to algorithm = \"alpha\"");
            }
            if raw.ess_order.is_some() {
                bail!("smc.ess_order applies only to the adaptive policy");
            }
            let algorithm = if raw.algorithm == "sis" {
                Algorithm::Sis
            } else {
                Algorithm::Sir
            };
            (algorithm, String::new())
        }
        "alpha" => {
            let policy_name = raw
                .policy
                .as_deref()
                .ok_or_else(|| anyhow!("algorithm = \"alpha\" requires smc.policy"))?;
            let policy = match policy_name {
                "identity" => AlphaPolicy::Identity,
                "uniform" => AlphaPolicy::Uniform,
                "adaptive" => {
                    let ess_order = raw.ess_order.unwrap_or(f64::INFINITY);
                    if ess_order.is_nan() || ess_order < 1.0 {
                        bail!("smc.ess_order must be at least 1");
                    }
                    AlphaPolicy::Adaptive {
                        ess_order,
                        threshold: zeta,
                    }
                }
                other => {
                    bail!("unknown smc.policy {other:?}; expected identity, uniform, or adaptive")
                }
            };
            if policy_name != "adaptive" && raw.ess_order.is_some() {
                bail!("smc.ess_order applies only to the adaptive policy");
            }
            (Algorithm::Alpha { policy }, policy_name.to_string())
        }
        other => bail!("unknown smc.algorithm {other:?}; expected sis, sir, or alpha"),
    };

    let target = match raw.target.as_deref() {
        None | Some("updated_joint") => TargetKind::UpdatedJoint,
        Some("updated_marginal") => TargetKind::UpdatedMarginal,
        Some("predictive_joint") => TargetKind::PredictiveJoint,
        Some("predictive_marginal") => TargetKind::PredictiveMarginal,
        Some(other) => bail!(
            "unknown smc.target {other:?}; expected updated_joint, updated_marginal, \
             predictive_joint, or predictive_marginal"
        ),
    };

    let assumptions = match &raw.assumptions {
        None => vec![
            BoundAssumption::Exact,
            BoundAssumption::BoundedPotentials,
            BoundAssumption::NormalizerRatio,
        ],
        Some(names) => names
            .iter()
            .map(|name| match name.as_str() {
                "exact" => Ok(BoundAssumption::Exact),
                "bounded_potentials" => Ok(BoundAssumption::BoundedPotentials),
                "normalizer_ratio" => Ok(BoundAssumption::NormalizerRatio),
                other => Err(anyhow!(
                    "unknown assumption {other:?}; expected exact, bounded_potentials, \
                     or normalizer_ratio"
                )),
            })
            .collect::<Result<_>>()?,
    };

    Ok(SmcConfig {
        algorithm,
        policy_label,
        zeta,
        n_list: raw.n_list.clone(),
        replications,
        target,
        assumptions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7

[experiment]
kind = "kl_vs_n"

[model]
id = "two-state"
initial = [0.6, 0.4]
horizon = 2
transition = [[0.7, 0.3], [0.2, 0.8]]
potentials = [[2.0, 1.0], [1.0, 3.0]]

[smc]
algorithm = "sir"
n_list = [1, 2, 3]
"#;

    #[test]
    fn minimal_config_parses() {
        let config = parse_config(MINIMAL).unwrap();
        assert_eq!(config.kind, ExperimentKind::KlVsN);
        assert_eq!(config.model_id, "two-state");
        assert_eq!(config.smc.n_list, vec![1, 2, 3]);
        assert_eq!(config.smc.replications, 1);
        assert!(matches!(config.model, ModelChoice::Single(_)));
        assert_eq!(config.seed, 7);
    }

    #[test]
    fn missing_model_block_names_the_field() {
        let text = MINIMAL.replace("[model]", "[another]");
        let err = format!("{:#}", parse_config(&text).unwrap_err());
        assert!(err.contains("model"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("algorithm = \"sir\"", "algorithm = \"sir\"\nfoo = 1");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn non_increasing_particle_lists_are_rejected() {
        let text = MINIMAL.replace("n_list = [1, 2, 3]", "n_list = [4, 2]");
        let err = format!("{:#}", parse_config(&text).unwrap_err());
        assert!(err.contains("increasing"), "{err}");
    }

    #[test]
    fn policy_on_plain_algorithms_is_rejected() {
        let text = MINIMAL.replace(
            "algorithm = \"sir\"",
            "algorithm = \"sir\"\npolicy = \"uniform\"",
        );
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn adaptive_policy_uses_the_ess_floor_as_threshold() {
        let text = MINIMAL.replace(
            "algorithm = \"sir\"",
            "algorithm = \"alpha\"\npolicy = \"adaptive\"\nzeta = 0.5",
        );
        let config = parse_config(&text).unwrap();
        match config.smc.algorithm {
            Algorithm::Alpha {
                policy:
                    AlphaPolicy::Adaptive {
                        ess_order,
                        threshold,
                    },
            } => {
                assert!(ess_order.is_infinite());
                assert_eq!(threshold, 0.5);
            }
            other => panic!("unexpected algorithm {other:?}"),
        }
    }

    #[test]
    fn grid_models_parse_for_pg_and_are_rejected_elsewhere() {
        let grid = r#"
seed = 3

[experiment]
kind = "pg_ergodicity"

[model]
id = "grid-pair"
initial = [0.5, 0.5]
horizon = 2
potentials = [[2.0, 1.0], [1.0, 3.0]]
prior = [0.5, 0.5]
grid_transitions = [
    [[0.3, 0.7], [0.7, 0.3]],
    [[0.7, 0.3], [0.3, 0.7]],
]

[smc]
algorithm = "sir"
n_list = [2]

[chain]
k_max = 100
chain_count = 2
"#;
        let config = parse_config(grid).unwrap();
        assert!(matches!(config.model, ModelChoice::Grid(_)));
        assert_eq!(config.chain.unwrap().chain_count, 2);

        let wrong_kind = grid.replace("pg_ergodicity", "kl_vs_n");
        assert!(parse_config(&wrong_kind).is_err());
    }

    #[test]
    fn single_step_models_need_no_transitions() {
        let text = r#"
seed = 1

[experiment]
kind = "kl_vs_n"

[model]
id = "one-step"
initial = [0.6, 0.4]
potentials = [[2.0, 1.0]]

[smc]
algorithm = "sis"
n_list = [1, 2]
"#;
        let config = parse_config(text).unwrap();
        match config.model {
            ModelChoice::Single(model) => assert_eq!(model.horizon(), 1),
            other => panic!("unexpected model {other:?}"),
        }
    }
}
