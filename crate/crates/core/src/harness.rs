//! Monte-Carlo ensembles with theory overlays.

use std::fmt;
use std::time::{Duration, Instant};

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{self, ConfigError};
use crate::data::{DataModel, StreamKey};
use crate::engine::{spatial_setup, EngineError, Hyperparams, Simulation, Trajectory};
use crate::network::{
    build_uniform_a, build_uniform_c, build_uniform_p, validate, CombinationMatrices, NetworkSpec,
    RegularizationWeights, Violation,
};
use crate::theory::{self, SecondOrderModel, TheoryError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("variant {variant}: {violation}")]
    Violation { variant: Variant, violation: Violation },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("all {runs} runs diverged for {variant} at mu={mu}, tau={tau}")]
    AllDiverged {
        variant: Variant,
        mu: f64,
        tau: f64,
        runs: usize,
    },
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

/// Algorithm variants compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Regularized ATC over the configured clusters.
    Clustered,
    /// Every node its own cluster; neighbours enter through the regularizer only.
    Spatial,
    /// Isolated LMS at each node.
    Noncooperative,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Clustered => "clustered",
            Variant::Spatial => "spatial",
            Variant::Noncooperative => "noncooperative",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How to construct `A`, `C` or `P`.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixRule {
    Uniform,
    Identity,
    Zero,
    Explicit(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRules {
    pub combination: MatrixRule,
    pub measurement: MatrixRule,
    pub regularization: MatrixRule,
}

impl Default for MatrixRules {
    fn default() -> Self {
        Self {
            combination: MatrixRule::Uniform,
            measurement: MatrixRule::Identity,
            regularization: MatrixRule::Uniform,
        }
    }
}

impl MatrixRules {
    fn build(&self, spec: &NetworkSpec) -> (CombinationMatrices, RegularizationWeights) {
        let n = spec.n_nodes();
        let make = |rule: &MatrixRule, uniform: fn(&NetworkSpec) -> DMatrix<f64>| match rule {
            MatrixRule::Uniform => uniform(spec),
            MatrixRule::Identity => DMatrix::identity(n, n),
            MatrixRule::Zero => DMatrix::zeros(n, n),
            MatrixRule::Explicit(m) => m.clone(),
        };
        (
            CombinationMatrices {
                a: make(&self.combination, build_uniform_a),
                c: make(&self.measurement, build_uniform_c),
            },
            RegularizationWeights {
                p: make(&self.regularization, build_uniform_p),
            },
        )
    }
}

/// Network and matrices a variant actually runs on.
#[derive(Debug, Clone)]
pub struct VariantSetup {
    pub network: NetworkSpec,
    pub mats: CombinationMatrices,
    pub reg: RegularizationWeights,
    /// Non-cooperative LMS ignores the configured `τ`.
    pub force_zero_tau: bool,
}

impl VariantSetup {
    pub fn new(variant: Variant, spec: &NetworkSpec, rules: &MatrixRules) -> Self {
        match variant {
            Variant::Clustered => {
                let (mats, reg) = rules.build(spec);
                Self {
                    network: spec.clone(),
                    mats,
                    reg,
                    force_zero_tau: false,
                }
            }
            Variant::Spatial => {
                let (network, mats, reg) = spatial_setup(spec);
                Self {
                    network,
                    mats,
                    reg,
                    force_zero_tau: false,
                }
            }
            Variant::Noncooperative => {
                let n = spec.n_nodes();
                Self {
                    network: spec.with_singleton_clusters(),
                    mats: CombinationMatrices::identity(n),
                    reg: RegularizationWeights::zeros(n),
                    force_zero_tau: true,
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), Violation> {
        validate(&self.network, &self.mats.a, &self.mats.c, &self.reg.p)
    }

    pub fn effective(&self, hyper: Hyperparams) -> Hyperparams {
        if self.force_zero_tau {
            Hyperparams::raw(hyper.mu, 0.0)
        } else {
            hyper
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    pub model: DataModel,
    pub hyperparams: Vec<Hyperparams>,
    pub variants: Vec<Variant>,
    pub rules: MatrixRules,
    pub n_runs: usize,
    pub n_iters: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
}

/// Pointwise ensemble average of the non-diverged runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCurve {
    /// Mean of `ζ̂(n)` in the linear domain.
    pub msd: Vec<f64>,
    pub runs_used: usize,
    pub runs_diverged: usize,
    /// Mean of `w(n_iters) − w*` over the runs used.
    pub final_error_mean: Vec<f64>,
    /// Unbiased per-entry variance of `w(n_iters) − w*`.
    pub final_error_var: Vec<f64>,
}

impl EnsembleCurve {
    pub fn msd_db(&self) -> Vec<f64> {
        self.msd.iter().map(|&v| to_db(v)).collect()
    }

    pub fn final_msd(&self) -> f64 {
        *self.msd.last().expect("ensemble curve is never empty")
    }

    /// Standard error of each entry of [`Self::final_error_mean`].
    pub fn final_error_std_err(&self) -> Vec<f64> {
        let n = self.runs_used as f64;
        self.final_error_var.iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Theoretical predictions for one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryOverlay {
    pub transient: Vec<f64>,
    pub transient_diverged: bool,
    /// `None` when `ρ(K) ≥ 1`.
    pub steady: Option<f64>,
    pub bias: Option<DVector<f64>>,
    pub step_bound: f64,
    pub rho_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveResult {
    pub variant: Variant,
    /// Hyperparameters actually used by the variant.
    pub hyper: Hyperparams,
    pub sim: EnsembleCurve,
    pub theory: Option<TheoryOverlay>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub curves: Vec<CurveResult>,
    /// Set when any run diverged and was excluded.
    pub flagged: bool,
    pub elapsed: Duration,
}

impl ExperimentResult {
    pub fn curve(&self, variant: Variant, mu: f64, tau: f64) -> Option<&CurveResult> {
        self.curves
            .iter()
            .find(|c| c.variant == variant && c.hyper.mu == mu && c.hyper.tau == tau)
    }
}

pub fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

/// Averages trajectories (linear domain), excluding diverged runs.
pub fn average_runs(runs: &[Trajectory], w_star: &[f64]) -> Option<EnsembleCurve> {
    let good: Vec<&Trajectory> = runs.iter().filter(|t| !t.diverged).collect();
    let first = good.first()?;
    let len = first.msd.len();
    let count = good.len() as f64;
    let mut msd = vec![0.0; len];
    for t in &good {
        for (acc, v) in msd.iter_mut().zip(&t.msd) {
            *acc += v;
        }
    }
    msd.iter_mut().for_each(|v| *v /= count);

    let errors: Vec<Vec<f64>> = good.iter().map(|t| t.final_error(w_star)).collect();
    let dim = w_star.len();
    let mut mean = vec![0.0; dim];
    for e in &errors {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= count);
    let mut var = vec![0.0; dim];
    if good.len() > 1 {
        for e in &errors {
            for ((s, v), m) in var.iter_mut().zip(e).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|v| *v /= count - 1.0);
    }
    Some(EnsembleCurve {
        msd,
        runs_used: good.len(),
        runs_diverged: runs.len() - good.len(),
        final_error_mean: mean,
        final_error_var: var,
    })
}

/// Theory overlay for a linear Gaussian model.
pub fn theory_overlay(
    setup: &VariantSetup,
    hyper: Hyperparams,
    model: &SecondOrderModel,
    n_iters: usize,
) -> Result<TheoryOverlay, TheoryError> {
    let m = theory::build_moments(&setup.network, &setup.mats, &setup.reg, hyper, model)?;
    let curve = theory::transient_msd(&m, &m.initial_error(), n_iters);
    let (steady, bias) = match theory::steady_state_msd(&m) {
        Ok(ss) => (Some(ss.msd), Some(ss.bias)),
        Err(TheoryError::NoSteadyState { .. }) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(TheoryOverlay {
        transient: curve.zeta,
        transient_diverged: curve.diverged,
        steady,
        bias,
        step_bound: theory::step_size_bound(&m),
        rho_b: m.spectral_radius_b(),
    })
}

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| HarnessError::Pool(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs `n_runs` trajectories for every variant and hyperparameter pair.
///
/// Run `i` of every curve uses the streams of `StreamKey::new(seed, i)`, so
/// all curves see the same data and the result does not depend on how runs
/// are scheduled over workers.
pub fn monte_carlo(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    if config.n_runs == 0 {
        return Err(HarnessError::Invalid("n_runs must be at least 1".into()));
    }
    if config.hyperparams.is_empty() || config.variants.is_empty() {
        return Err(HarnessError::Invalid(
            "need at least one variant and one hyperparameter pair".into(),
        ));
    }
    let started = Instant::now();
    let second_order = config.model.as_linear().map(SecondOrderModel::from_linear);
    let mut curves = Vec::new();
    let mut flagged = false;
    for &variant in &config.variants {
        let setup = VariantSetup::new(variant, &config.network, &config.rules);
        setup
            .validate()
            .map_err(|violation| HarnessError::Violation { variant, violation })?;
        let sim = Simulation::new(&setup.network, &setup.mats, &setup.reg, &config.model)?;
        for &requested in &config.hyperparams {
            let hyper = setup.effective(requested);
            let runs: Vec<Trajectory> = with_pool(config.workers, || {
                (0..config.n_runs)
                    .into_par_iter()
                    .map(|i| sim.run(hyper, config.n_iters, StreamKey::new(config.seed, i as u64)))
                    .collect()
            })?;
            let ensemble = average_runs(&runs, sim.w_star()).ok_or(HarnessError::AllDiverged {
                variant,
                mu: hyper.mu,
                tau: hyper.tau,
                runs: config.n_runs,
            })?;
            if ensemble.runs_diverged > 0 {
                flagged = true;
                warn!(
                    "{variant} mu={} tau={}: excluded {} diverged run(s) of {}",
                    hyper.mu, hyper.tau, ensemble.runs_diverged, config.n_runs
                );
            }
            let theory = match &second_order {
                Some(so) => Some(theory_overlay(&setup, hyper, so, config.n_iters)?),
                None => None,
            };
            curves.push(CurveResult {
                variant,
                hyper,
                sim: ensemble,
                theory,
            });
        }
    }
    Ok(ExperimentResult {
        curves,
        flagged,
        elapsed: started.elapsed(),
    })
}

/// Theory-only evaluation of one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub variant: Variant,
    pub hyper: Hyperparams,
    pub step_bound: f64,
    pub rho_b: f64,
    /// `None` when there is no steady state.
    pub bias_norm: Option<f64>,
    pub steady_msd: Option<f64>,
    pub transient: Vec<f64>,
}

/// Evaluates the performance models for every variant and hyperparameter
/// pair without simulating. Only linear models are supported.
pub fn evaluate_theory(config: &ExperimentConfig) -> Result<Vec<TheoryReport>, HarnessError> {
    let model = config.model.as_linear().ok_or_else(|| {
        HarnessError::Invalid(
            "the performance models assume i.i.d. Gaussian regressors; localization data does not satisfy this".into(),
        )
    })?;
    let so = SecondOrderModel::from_linear(model);
    let mut out = Vec::new();
    for &variant in &config.variants {
        let setup = VariantSetup::new(variant, &config.network, &config.rules);
        setup
            .validate()
            .map_err(|violation| HarnessError::Violation { variant, violation })?;
        for &requested in &config.hyperparams {
            let hyper = setup.effective(requested);
            let overlay = theory_overlay(&setup, hyper, &so, config.n_iters)?;
            out.push(TheoryReport {
                variant,
                hyper,
                step_bound: overlay.step_bound,
                rho_b: overlay.rho_b,
                bias_norm: overlay.bias.as_ref().map(|b| b.norm()),
                steady_msd: overlay.steady,
                transient: overlay.transient,
            });
        }
    }
    Ok(out)
}

/// Model-validation experiment on the bundled 15-node, 3-cluster network.
pub fn experiment_model_validation() -> Result<ExperimentResult, HarnessError> {
    let cfg = config::bundled::model_validation()?.to_experiment()?;
    monte_carlo(&cfg)
}

/// Multi-target localization on the bundled 120-node network, comparing the
/// clustered, spatially regularized and non-cooperative variants.
pub fn experiment_localization() -> Result<ExperimentResult, HarnessError> {
    let cfg = config::bundled::localization()?.to_experiment()?;
    monte_carlo(&cfg)
}
