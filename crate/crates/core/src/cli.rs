//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 validation failure,
//! 3 stability warning, 4 runtime failure.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::{bundled, ConfigError, ConfigFile};
use crate::harness::{self, to_db, HarnessError, VariantSetup};
use crate::output::{self, OutputError};
use crate::theory::{self, SecondOrderModel, TheoryError};

pub const OUT_DIR_ENV: &str = "MTDIFF_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Usage = 1,
    Validation = 2,
    Stability = 3,
    Runtime = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(name = "mtdiff", version, about = "Clustered multitask diffusion LMS experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `experiment.n_runs`.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Output directory; defaults to `output.directory` of the config.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Worker threads for the Monte-Carlo runs; does not change the results.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the configuration, matrices and stability conditions.
    Validate,
    /// Run the Monte-Carlo experiment and write the curves.
    Simulate,
    /// Evaluate the performance models only.
    Theory,
    /// Run the bundled multi-target localization experiment.
    Localization {
        /// Use the small 40-node, 2-target network.
        #[arg(long)]
        desk: bool,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("cannot write results: {0}")]
    Output(#[from] OutputError),
    #[error("cannot write report: {0}")]
    Report(#[from] std::io::Error),
}

fn config_status(e: &ConfigError) -> ExitStatus {
    match e {
        ConfigError::Io { .. } | ConfigError::Parse(_) | ConfigError::Schema(_) => ExitStatus::Usage,
        ConfigError::Network(_) | ConfigError::Data(_) | ConfigError::Engine(_) => ExitStatus::Validation,
    }
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Usage(_) => ExitStatus::Usage,
            CliError::Config(e) | CliError::Harness(HarnessError::Config(e)) => config_status(e),
            CliError::Validation(_) => ExitStatus::Validation,
            CliError::Harness(HarnessError::Violation { .. } | HarnessError::Invalid(_)) => ExitStatus::Validation,
            CliError::Harness(_) | CliError::Theory(_) | CliError::Output(_) | CliError::Report(_) => {
                ExitStatus::Runtime
            }
        }
    }
}

impl Cli {
    fn load(&self) -> Result<ConfigFile, CliError> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Usage("--config PATH is required for this command".into()))?;
        let cfg = ConfigFile::load(path)?;
        Ok(self.apply_overrides(cfg))
    }

    fn apply_overrides(&self, mut cfg: ConfigFile) -> ConfigFile {
        if let Some(seed) = self.seed {
            cfg.experiment.seed = seed;
        }
        if let Some(runs) = self.runs {
            cfg.experiment.n_runs = runs;
        }
        cfg
    }

    fn out_dir(&self, cfg: &ConfigFile) -> PathBuf {
        self.out.clone().unwrap_or_else(|| output::default_output_dir(cfg))
    }
}

/// Runs one command, writing the human-readable report to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    match &cli.command {
        Command::Validate => cmd_validate(cli, out),
        Command::Simulate => {
            let cfg = cli.load()?;
            cmd_simulate(cli, cfg, out)
        }
        Command::Theory => cmd_theory(cli, out),
        Command::Localization { desk } => {
            let cfg = match &cli.config {
                Some(_) => cli.load()?,
                None if *desk => cli.apply_overrides(bundled::localization_desk()?),
                None => cli.apply_overrides(bundled::localization()?),
            };
            if !cfg.is_localization() {
                return Err(CliError::Usage("the localization command needs a localization config".into()));
            }
            cmd_simulate(cli, cfg, out)
        }
    }
}

fn cmd_validate(cli: &Cli, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let cfg = cli.load()?;
    let exp = cfg.to_experiment()?;
    writeln!(
        out,
        "network: {} nodes, {} clusters, filter length {}",
        exp.network.n_nodes(),
        exp.network.n_clusters(),
        exp.network.filter_len()
    )?;
    let so = SecondOrderModel::from_model(&exp.model);
    if exp.model.as_linear().is_none() {
        writeln!(out, "localization model: only mean stability is checked")?;
    }
    let mut stable = true;
    for &variant in &exp.variants {
        let setup = VariantSetup::new(variant, &exp.network, &exp.rules);
        setup
            .validate()
            .map_err(|v| CliError::Validation(format!("{variant}: {v}")))?;
        writeln!(out, "{variant}: combination, measurement and regularization matrices ok")?;
        for &requested in &exp.hyperparams {
            let hyper = setup.effective(requested);
            let m = theory::build_moments(&setup.network, &setup.mats, &setup.reg, hyper, &so)?;
            let bound = theory::step_size_bound(&m);
            let rho_b = m.spectral_radius_b();
            let rho_k = theory::k_spectral_radius(&m.b, 1e-10, 500)
                .map(|r| format!("{r:.6}"))
                .unwrap_or_else(|e| format!("not converged ({e})"));
            let ok = hyper.mu < bound && rho_b < 1.0;
            stable &= ok;
            writeln!(
                out,
                "  mu={} tau={}: step-size bound {:.6}, rho(B) {:.6}, rho(K) {} -> {}",
                hyper.mu,
                hyper.tau,
                bound,
                rho_b,
                rho_k,
                if ok { "stable" } else { "WARNING: outside the stability region" }
            )?;
        }
    }
    Ok(if stable { ExitStatus::Success } else { ExitStatus::Stability })
}

fn cmd_simulate(cli: &Cli, cfg: ConfigFile, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let mut exp = cfg.to_experiment()?;
    if cli.workers.is_some() {
        exp.workers = cli.workers;
    }
    let result = harness::monte_carlo(&exp)?;
    let dir = cli.out_dir(&cfg);
    let manifest = output::write_experiment(&dir, &cfg, &exp, &result)?;
    for c in &result.curves {
        write!(
            out,
            "{} mu={} tau={}: final MSD {:.3} dB",
            c.variant,
            c.hyper.mu,
            c.hyper.tau,
            to_db(c.sim.final_msd())
        )?;
        if let Some(ss) = c.theory.as_ref().and_then(|t| t.steady) {
            write!(out, " (steady-state model {:.3} dB)", to_db(ss))?;
        }
        if c.sim.runs_diverged > 0 {
            write!(out, " [{} of {} runs diverged]", c.sim.runs_diverged, exp.n_runs)?;
        }
        writeln!(out)?;
    }
    writeln!(out, "wrote {} files to {}", manifest.files.len() + 1, dir.display())?;
    Ok(ExitStatus::Success)
}

fn cmd_theory(cli: &Cli, out: &mut dyn Write) -> Result<ExitStatus, CliError> {
    let cfg = cli.load()?;
    if cfg.is_localization() {
        return Err(CliError::Validation(
            "theory is not available for localization configs: the performance models assume \
             zero-mean i.i.d. Gaussian regressors, which the localization data does not satisfy"
                .into(),
        ));
    }
    let exp = cfg.to_experiment()?;
    let reports = harness::evaluate_theory(&exp)?;
    let dir = cli.out_dir(&cfg);
    output::write_theory(&dir, &cfg, &exp, &reports)?;
    let mut status = ExitStatus::Success;
    for r in &reports {
        write!(
            out,
            "{} mu={} tau={}: step-size bound {:.6}, rho(B) {:.6}, ",
            r.variant, r.hyper.mu, r.hyper.tau, r.step_bound, r.rho_b
        )?;
        match (r.bias_norm, r.steady_msd) {
            (Some(b), Some(ss)) => writeln!(out, "bias norm {:.6e}, steady-state MSD {:.3} dB", b, to_db(ss))?,
            _ => {
                status = ExitStatus::Stability;
                writeln!(out, "no steady state (rho(K) = {:.6} >= 1)", r.rho_b * r.rho_b)?;
            }
        }
    }
    writeln!(out, "wrote results to {}", dir.display())?;
    Ok(status)
}
