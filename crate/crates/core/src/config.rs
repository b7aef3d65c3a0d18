//! TOML experiment configuration.
//!
//! ```toml
//! [network]
//! filter_length = 2
//! [network.inline]            # or [network.geometric]
//! n_nodes = 3
//! edges = [[0, 1], [1, 2]]
//! clusters = [0, 0, 1]
//!
//! [model.linear]              # or [model.localization]
//! optima = [[0.5, -0.4], [0.6, -0.3]]
//! sigma2_x = 1.0              # scalar or one value per node
//! sigma2_z = [0.01, 0.02, 0.01]
//!
//! [algorithm]
//! variants = ["clustered"]
//! hyperparams = [[0.01, 0.1]] # (mu, tau) pairs
//! combination = "uniform"     # A: uniform | identity | explicit rows
//! measurement = "identity"    # C
//! regularization = "uniform"  # P: uniform | zero | explicit rows
//!
//! [experiment]
//! n_runs = 100
//! n_iters = 1000
//! seed = 1
//!
//! [output]
//! directory = "results/validation"
//! formats = ["csv", "gnuplot"]
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, DataModel, LinearModelSpec, LocalizationSpec};
use crate::engine::{EngineError, Hyperparams};
use crate::harness::{ExperimentConfig, MatrixRule, MatrixRules, Variant};
use crate::network::{random_geometric_network, GeometricParams, NetworkError, NetworkSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("model: {0}")]
    Data(#[from] DataError),
    #[error("algorithm: {0}")]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub network: NetworkSection,
    pub model: ModelSection,
    pub algorithm: AlgorithmSection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub filter_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<InlineTopology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometric: Option<GeometricTopology>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineTopology {
    pub n_nodes: usize,
    pub edges: Vec<[usize; 2]>,
    /// 0-based cluster index of every node.
    pub clusters: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricTopology {
    pub n_nodes: usize,
    #[serde(default)]
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
    pub radius: f64,
    pub n_clusters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization: Option<LocalizationSection>,
}

/// A scalar applied to every node, or one value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerNode {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerNode {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>, ConfigError> {
        match self {
            PerNode::Uniform(v) => Ok(vec![*v; n]),
            PerNode::Each(v) if v.len() == n => Ok(v.clone()),
            PerNode::Each(v) => Err(ConfigError::Schema(format!(
                "{what} has {} entries for {n} nodes",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSection {
    /// One optimum per cluster.
    pub optima: Vec<Vec<f64>>,
    pub sigma2_x: PerNode,
    pub sigma2_z: PerNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationSection {
    /// One target per cluster.
    pub targets: Vec<[f64; 2]>,
    pub sigma_alpha: PerNode,
    pub sigma_beta: PerNode,
    pub sigma_v: PerNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Uniform,
    Identity,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleSpec {
    Named(RuleName),
    /// Matrix given row by row.
    Explicit(Vec<Vec<f64>>),
}

impl RuleSpec {
    fn to_rule(&self, n: usize, what: &str) -> Result<MatrixRule, ConfigError> {
        Ok(match self {
            RuleSpec::Named(RuleName::Uniform) => MatrixRule::Uniform,
            RuleSpec::Named(RuleName::Identity) => MatrixRule::Identity,
            RuleSpec::Named(RuleName::Zero) => MatrixRule::Zero,
            RuleSpec::Explicit(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(ConfigError::Schema(format!("{what} must be {n}x{n}")));
                }
                MatrixRule::Explicit(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        })
    }
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Clustered]
}

fn uniform_rule() -> RuleSpec {
    RuleSpec::Named(RuleName::Uniform)
}

fn identity_rule() -> RuleSpec {
    RuleSpec::Named(RuleName::Identity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    /// `(μ, τ)` pairs.
    pub hyperparams: Vec<[f64; 2]>,
    #[serde(default = "uniform_rule")]
    pub combination: RuleSpec,
    #[serde(default = "identity_rule")]
    pub measurement: RuleSpec,
    #[serde(default = "uniform_rule")]
    pub regularization: RuleSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub n_runs: usize,
    pub n_iters: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Gnuplot,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    /// Also dump the sample stream of run 0.
    #[serde(default)]
    pub dump_stream: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
            dump_stream: false,
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ConfigFile = toml::from_str(text)?;
        cfg.check_schema()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn is_localization(&self) -> bool {
        self.model.localization.is_some()
    }

    fn check_schema(&self) -> Result<(), ConfigError> {
        let schema = |msg: &str| Err(ConfigError::Schema(msg.into()));
        if self.network.inline.is_some() == self.network.geometric.is_some() {
            return schema("[network] needs exactly one of [network.inline] or [network.geometric]");
        }
        if self.model.linear.is_some() == self.model.localization.is_some() {
            return schema("[model] needs exactly one of [model.linear] or [model.localization]");
        }
        if self.algorithm.hyperparams.is_empty() {
            return schema("algorithm.hyperparams must not be empty");
        }
        if self.algorithm.variants.is_empty() {
            return schema("algorithm.variants must not be empty");
        }
        if self.experiment.n_runs == 0 {
            return schema("experiment.n_runs must be at least 1");
        }
        Ok(())
    }

    pub fn build_network(&self) -> Result<NetworkSpec, ConfigError> {
        let l = self.network.filter_length;
        if let Some(inline) = &self.network.inline {
            let edges: Vec<(usize, usize)> = inline.edges.iter().map(|e| (e[0], e[1])).collect();
            let spec = NetworkSpec::new(inline.n_nodes, l, &edges, inline.clusters.clone())?;
            return Ok(match &inline.positions {
                Some(p) => spec.with_positions(p.clone())?,
                None => spec,
            });
        }
        let g = self
            .network
            .geometric
            .as_ref()
            .ok_or_else(|| ConfigError::Schema("missing network topology".into()))?;
        Ok(random_geometric_network(&GeometricParams {
            n_nodes: g.n_nodes,
            origin: g.origin,
            width: g.width,
            height: g.height,
            radius: g.radius,
            n_clusters: g.n_clusters,
            filter_len: l,
            seed: g.seed,
        })?)
    }

    pub fn build_model(&self, network: &NetworkSpec) -> Result<DataModel, ConfigError> {
        let n = network.n_nodes();
        if let Some(lin) = &self.model.linear {
            return Ok(DataModel::Linear(LinearModelSpec::new(
                network,
                lin.optima.clone(),
                lin.sigma2_x.expand(n, "sigma2_x")?,
                lin.sigma2_z.expand(n, "sigma2_z")?,
            )?));
        }
        let loc = self
            .model
            .localization
            .as_ref()
            .ok_or_else(|| ConfigError::Schema("missing model".into()))?;
        Ok(DataModel::Localization(LocalizationSpec::new(
            network,
            loc.targets.clone(),
            loc.sigma_alpha.expand(n, "sigma_alpha")?,
            loc.sigma_beta.expand(n, "sigma_beta")?,
            loc.sigma_v.expand(n, "sigma_v")?,
        )?))
    }

    pub fn hyperparams(&self) -> Result<Vec<Hyperparams>, ConfigError> {
        self.algorithm
            .hyperparams
            .iter()
            .map(|&[mu, tau]| Hyperparams::new(mu, tau).map_err(ConfigError::from))
            .collect()
    }

    pub fn rules(&self, n: usize) -> Result<MatrixRules, ConfigError> {
        let alg = &self.algorithm;
        let rules = MatrixRules {
            combination: alg.combination.to_rule(n, "combination")?,
            measurement: alg.measurement.to_rule(n, "measurement")?,
            regularization: alg.regularization.to_rule(n, "regularization")?,
        };
        let explicit = [&rules.combination, &rules.measurement, &rules.regularization]
            .iter()
            .any(|r| matches!(r, MatrixRule::Explicit(_)));
        if explicit && alg.variants.iter().any(|v| *v != Variant::Clustered) {
            return Err(ConfigError::Schema(
                "explicit matrices are only supported for the clustered variant".into(),
            ));
        }
        Ok(rules)
    }

    pub fn to_experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let network = self.build_network()?;
        let model = self.build_model(&network)?;
        Ok(ExperimentConfig {
            rules: self.rules(network.n_nodes())?,
            hyperparams: self.hyperparams()?,
            variants: self.algorithm.variants.clone(),
            n_runs: self.experiment.n_runs,
            n_iters: self.experiment.n_iters,
            seed: self.experiment.seed,
            workers: self.experiment.workers,
            network,
            model,
        })
    }
}

/// Configurations shipped with the crate.
pub mod bundled {
    use super::{ConfigError, ConfigFile};

    pub const MODEL_VALIDATION: &str = include_str!("../configs/model_validation.toml");
    pub const LOCALIZATION: &str = include_str!("../configs/localization.toml");
    pub const LOCALIZATION_DESK: &str = include_str!("../configs/localization_desk.toml");

    pub fn model_validation() -> Result<ConfigFile, ConfigError> {
        ConfigFile::parse(MODEL_VALIDATION)
    }

    pub fn localization() -> Result<ConfigFile, ConfigError> {
        ConfigFile::parse(LOCALIZATION)
    }

    pub fn localization_desk() -> Result<ConfigFile, ConfigError> {
        ConfigFile::parse(LOCALIZATION_DESK)
    }
}
