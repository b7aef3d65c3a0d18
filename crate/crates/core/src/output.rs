//! Result directories: CSV curves, summaries, manifest and plot script.
//!
//! Every curve file has the header `iteration,msd_linear,msd_db,flag`, where
//! `flag` is `sim` for Monte-Carlo averages and `theory` for model
//! predictions. Numbers use the shortest round-trip representation, so
//! reruns with the same seed produce byte-identical files.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigFile, OutputFormat};
use crate::data::{write_stream_csv, StreamKey};
use crate::engine::Hyperparams;
use crate::harness::{to_db, CurveResult, ExperimentConfig, ExperimentResult, TheoryReport, Variant};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Simulation,
    TheoryTransient,
    SteadyStateSummary,
    TheorySummary,
    Config,
    Network,
    Stream,
    Plot,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub kind: FileKind,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    fn push(&mut self, file: &str, curve: Option<(Variant, Hyperparams)>, kind: FileKind) {
        self.files.push(ManifestEntry {
            file: file.to_string(),
            variant: curve.map(|c| c.0),
            mu: curve.map(|c| c.1.mu),
            tau: curve.map(|c| c.1.tau),
            kind,
        });
    }

    pub fn of_kind(&self, kind: FileKind) -> impl Iterator<Item = &ManifestEntry> {
        self.files.iter().filter(move |e| e.kind == kind)
    }
}

/// File stem shared by the simulated and theoretical curve of one setting.
pub fn curve_stem(variant: Variant, hyper: Hyperparams) -> String {
    format!("{}_mu{}_tau{}", variant, hyper.mu, hyper.tau)
}

/// Writes one MSD curve, one row per iteration starting at 0.
pub fn write_curve_csv<W: Write>(out: W, msd: &[f64], flag: &str) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "msd_linear", "msd_db", "flag"])?;
    for (n, &v) in msd.iter().enumerate() {
        w.write_record([n.to_string(), v.to_string(), to_db(v).to_string(), flag.to_string()])?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: "<csv>".into(),
        source,
    })?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, OutputError> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(io_err(&path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_steady_summary<W: Write>(out: W, curves: &[CurveResult]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "variant",
        "mu",
        "tau",
        "runs_used",
        "runs_diverged",
        "sim_final_msd_db",
        "theory_final_msd_db",
        "theory_steady_msd_db",
        "step_bound",
        "rho_b",
    ])?;
    for c in curves {
        let th = c.theory.as_ref();
        w.write_record([
            c.variant.to_string(),
            c.hyper.mu.to_string(),
            c.hyper.tau.to_string(),
            c.sim.runs_used.to_string(),
            c.sim.runs_diverged.to_string(),
            to_db(c.sim.final_msd()).to_string(),
            opt(th.and_then(|t| t.transient.last()).map(|&v| to_db(v))),
            opt(th.and_then(|t| t.steady).map(to_db)),
            opt(th.map(|t| t.step_bound)),
            opt(th.map(|t| t.rho_b)),
        ])?;
    }
    w.flush().map_err(io_err(Path::new("steady_state.csv")))?;
    Ok(())
}

fn write_gnuplot<W: Write>(mut out: W, manifest: &Manifest) -> io::Result<()> {
    writeln!(out, "set datafile separator ','")?;
    writeln!(out, "set key autotitle columnhead")?;
    writeln!(out, "set xlabel 'iteration'")?;
    writeln!(out, "set ylabel 'MSD (dB)'")?;
    let curves: Vec<&ManifestEntry> = manifest
        .files
        .iter()
        .filter(|e| matches!(e.kind, FileKind::Simulation | FileKind::TheoryTransient))
        .collect();
    let parts: Vec<String> = curves
        .iter()
        .map(|e| {
            let style = if e.kind == FileKind::Simulation { "lines" } else { "lines dt 2" };
            format!("'{}' using 1:3 with {} title '{}'", e.file, style, e.file.trim_end_matches(".csv"))
        })
        .collect();
    if !parts.is_empty() {
        writeln!(out, "plot {}", parts.join(", \\\n     "))?;
    }
    Ok(())
}

fn write_common(dir: &Path, config: &ConfigFile, exp: &ExperimentConfig, manifest: &mut Manifest) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut f = create(dir, "config.toml")?;
    f.write_all(config.to_toml().as_bytes()).map_err(io_err(dir))?;
    manifest.push("config.toml", None, FileKind::Config);

    let mut f = create(dir, "network.edges")?;
    exp.network.write_edge_list(&mut f).map_err(io_err(dir))?;
    f.flush().map_err(io_err(dir))?;
    manifest.push("network.edges", None, FileKind::Network);
    Ok(())
}

fn finish(dir: &Path, config: &ConfigFile, mut manifest: Manifest) -> Result<Manifest, OutputError> {
    if config.output.formats.contains(&OutputFormat::Gnuplot) {
        let mut f = create(dir, "plot.gp")?;
        write_gnuplot(&mut f, &manifest).map_err(io_err(dir))?;
        f.flush().map_err(io_err(dir))?;
        manifest.push("plot.gp", None, FileKind::Plot);
    }
    let path = dir.join("manifest.json");
    let mut f = create(dir, "manifest.json")?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n").map_err(io_err(&path))?;
    f.flush().map_err(io_err(&path))?;
    Ok(manifest)
}

/// Writes a Monte-Carlo experiment into `dir`.
pub fn write_experiment(
    dir: &Path,
    config: &ConfigFile,
    exp: &ExperimentConfig,
    result: &ExperimentResult,
) -> Result<Manifest, OutputError> {
    let mut manifest = Manifest::default();
    write_common(dir, config, exp, &mut manifest)?;
    for c in &result.curves {
        let stem = curve_stem(c.variant, c.hyper);
        let name = format!("{stem}_sim.csv");
        write_curve_csv(create(dir, &name)?, &c.sim.msd, "sim")?;
        manifest.push(&name, Some((c.variant, c.hyper)), FileKind::Simulation);
        if let Some(th) = &c.theory {
            let name = format!("{stem}_theory.csv");
            write_curve_csv(create(dir, &name)?, &th.transient, "theory")?;
            manifest.push(&name, Some((c.variant, c.hyper)), FileKind::TheoryTransient);
        }
    }
    write_steady_summary(create(dir, "steady_state.csv")?, &result.curves)?;
    manifest.push("steady_state.csv", None, FileKind::SteadyStateSummary);

    if config.output.dump_stream {
        let name = "stream_run0.csv";
        let mut f = create(dir, name)?;
        write_stream_csv(&exp.model, StreamKey::new(exp.seed, 0), exp.n_iters, &mut f).map_err(io_err(dir))?;
        f.flush().map_err(io_err(dir))?;
        manifest.push(name, None, FileKind::Stream);
    }
    finish(dir, config, manifest)
}

/// Writes theory-only results into `dir`.
pub fn write_theory(
    dir: &Path,
    config: &ConfigFile,
    exp: &ExperimentConfig,
    reports: &[TheoryReport],
) -> Result<Manifest, OutputError> {
    let mut manifest = Manifest::default();
    write_common(dir, config, exp, &mut manifest)?;
    for r in reports {
        let name = format!("{}_theory.csv", curve_stem(r.variant, r.hyper));
        write_curve_csv(create(dir, &name)?, &r.transient, "theory")?;
        manifest.push(&name, Some((r.variant, r.hyper)), FileKind::TheoryTransient);
    }
    let mut w = csv::Writer::from_writer(create(dir, "theory.csv")?);
    w.write_record([
        "variant",
        "mu",
        "tau",
        "step_bound",
        "rho_b",
        "bias_norm",
        "steady_msd_linear",
        "steady_msd_db",
    ])?;
    for r in reports {
        w.write_record([
            r.variant.to_string(),
            r.hyper.mu.to_string(),
            r.hyper.tau.to_string(),
            r.step_bound.to_string(),
            r.rho_b.to_string(),
            opt(r.bias_norm),
            opt(r.steady_msd),
            opt(r.steady_msd.map(to_db)),
        ])?;
    }
    w.flush().map_err(io_err(dir))?;
    manifest.push("theory.csv", None, FileKind::TheorySummary);
    finish(dir, config, manifest)
}

/// Reads the `msd_linear` column back from a curve file.
pub fn read_curve_csv(path: &Path) -> Result<Vec<f64>, OutputError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| OutputError::Io {
            path: path.display().to_string(),
            source: io::Error::new(io::ErrorKind::InvalidData, "bad msd_linear value"),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn default_output_dir(config: &ConfigFile) -> PathBuf {
    PathBuf::from(config.output.directory.clone().unwrap_or_else(|| "results".into()))
}
