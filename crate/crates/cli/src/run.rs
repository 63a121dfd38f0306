//! Orchestration: dispatches panels across the worker pool, writes per-panel
//! artifacts and the run manifest.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use structured_tempo::{DisplacementField, Error, Trajectory};

use crate::config::{ConfigErrors, ExperimentConfig, Mode, PanelConfig, Preset};
use crate::output::{metadata, write_atomic, VERSION};
use crate::pipeline::{self, FieldSummary, RcSummary, TempoSummary};
use crate::preset;
use crate::sweep::{self, SweepSummary};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config:\n{0}")]
    Config(ConfigErrors),
    #[error("panel {panel}: {source}")]
    Run { panel: String, source: Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    /// 2 config, 3 numerical accuracy, 4 resource limit, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run { source, .. } => match source {
                Error::Resource { .. } => 4,
                Error::Domain(_) | Error::Validation(_) => 2,
                _ => 3,
            },
            CliError::Io { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PanelReport {
    pub name: String,
    pub wall_seconds: f64,
    pub files: BTreeMap<String, PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tempo: Option<TempoSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rc: Option<RcSummary>,
    /// `sup |⟨σz⟩_TEMPO − ⟨σz⟩_RC|` in compare mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_diff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<String>,
    pub output_dir: PathBuf,
    /// Resolved config; `stempo run` on this text reproduces the run.
    pub config: String,
    pub wall_seconds: f64,
    /// `max |Φ|` over all panels; field CSVs record it for cross-panel
    /// normalization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_global_max: Option<f64>,
    pub panels: Vec<PanelReport>,
}

struct PanelOutput {
    report: PanelReport,
    field: Option<DisplacementField>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_trajectory(path: &Path, traj: &Trajectory, meta: &[(String, String)]) -> Result<(), CliError> {
    write_atomic(path, |w| traj.write_csv(w, meta)).map_err(io_err(path))
}

/// Runs every panel of `cfg` into `out_dir` and writes the manifest.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let outputs: Vec<PanelOutput> = cfg
        .panels
        .par_iter()
        .map(|p| run_panel(cfg, p, &out_dir.join(&p.name)))
        .collect::<Result<_, _>>()?;

    let global = outputs
        .iter()
        .filter_map(|o| o.field.as_ref().map(|f| f.normalization))
        .reduce(f64::max);
    let mut panels = Vec::with_capacity(outputs.len());
    for (o, p) in outputs.into_iter().zip(&cfg.panels) {
        let mut report = o.report;
        if let (Some(field), Some(g)) = (o.field, global) {
            let path = out_dir.join(&p.name).join("field.csv");
            let meta = metadata(p, &[("global_max", g.to_string())]);
            write_atomic(&path, |w| field.write_csv(w, &meta)).map_err(io_err(&path))?;
            report.files.insert("field".into(), path);
        }
        panels.push(report);
    }

    let manifest = RunManifest {
        version: VERSION.to_string(),
        mode: cfg.mode,
        preset: cfg.preset,
        layout: (cfg.preset == Some(Preset::Fig4)).then(|| preset::FIG4_LAYOUT.to_string()),
        output_dir: out_dir.to_path_buf(),
        config: cfg.to_toml(),
        wall_seconds: start.elapsed().as_secs_f64(),
        field_global_max: global,
        panels,
    };
    let path = out_dir.join(MANIFEST);
    write_atomic(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest).map_err(io::Error::other)?;
        writeln!(w)
    })
    .map_err(io_err(&path))?;
    Ok(manifest)
}

fn run_panel(cfg: &ExperimentConfig, p: &PanelConfig, dir: &Path) -> Result<PanelOutput, CliError> {
    let start = Instant::now();
    let ctx = |source: Error| CliError::Run {
        panel: p.name.clone(),
        source,
    };
    let strict = cfg.strict;
    let mut report = PanelReport {
        name: p.name.clone(),
        wall_seconds: 0.0,
        files: BTreeMap::new(),
        tempo: None,
        rc: None,
        sup_diff: None,
        field: None,
        sweep: None,
    };
    let mut field = None;
    let meta = metadata(p, &[]);

    let needs_tempo = matches!(cfg.mode, Mode::Tempo | Mode::Compare | Mode::BathField);
    let tempo_traj = if needs_tempo {
        let run = pipeline::run_tempo(p).map_err(ctx)?;
        pipeline::check_invariants(&run.trajectory, &format!("{} TEMPO", p.name), strict).map_err(ctx)?;
        let path = dir.join("tempo.csv");
        write_trajectory(&path, &run.trajectory, &meta)?;
        report.files.insert("tempo".into(), path);
        if p.tempo.dump_eta {
            let path = dir.join("eta.csv");
            write_atomic(&path, |w| run.eta.write_csv(w)).map_err(io_err(&path))?;
            report.files.insert("eta".into(), path);
        }
        report.tempo = Some(run.summary);
        Some(run.trajectory)
    } else {
        None
    };

    if matches!(cfg.mode, Mode::Rc | Mode::Compare) {
        let (conv, summary) = pipeline::run_rc(p, strict).map_err(ctx)?;
        let traj = conv.run.trajectory;
        pipeline::check_invariants(&traj, &format!("{} RC", p.name), strict).map_err(ctx)?;
        let path = dir.join("rc.csv");
        write_trajectory(&path, &traj, &metadata(p, &[("rc_n_trunc", summary.n_trunc.to_string())]))?;
        report.files.insert("rc".into(), path);
        report.rc = Some(summary);
        if let Some(t) = &tempo_traj {
            let (rows, sup) = pipeline::sigma_z_difference(t, &traj).map_err(ctx)?;
            let path = dir.join("compare.csv");
            let meta = metadata(p, &[("sup_norm", sup.to_string())]);
            write_atomic(&path, |w| {
                for (k, v) in &meta {
                    writeln!(w, "# {k}={v}")?;
                }
                writeln!(w, "t,sz_tempo,sz_rc,abs_diff")?;
                for (t, a, b) in &rows {
                    writeln!(w, "{t},{a},{b},{}", (a - b).abs())?;
                }
                Ok(())
            })
            .map_err(io_err(&path))?;
            report.files.insert("compare".into(), path);
            report.sup_diff = Some(sup);
        }
    }

    if cfg.mode == Mode::BathField {
        let traj = tempo_traj.as_ref().expect("bath_field runs TEMPO");
        let (f, summary) = pipeline::run_field(p, traj).map_err(ctx)?;
        report.field = Some(summary);
        field = Some(f);
    }

    if cfg.mode == Mode::Sweep {
        let s = cfg.sweep.as_ref().expect("validated");
        let (trajs, summary) = sweep::run_sweep(p, s, strict).map_err(ctx)?;
        for (i, t) in trajs.iter().enumerate() {
            let path = dir.join(format!("sweep_{i}.csv"));
            let q = sweep::apply(p, &s.param, s.values[i]);
            write_trajectory(&path, t, &metadata(&q, &[]))?;
            report.files.insert(format!("sweep_{i}"), path);
        }
        let path = dir.join("sweep.csv");
        sweep::write_table(&path, &summary, &meta).map_err(io_err(&path))?;
        report.files.insert("sweep".into(), path);
        report.sweep = Some(summary);
    }

    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(PanelOutput { report, field })
}
