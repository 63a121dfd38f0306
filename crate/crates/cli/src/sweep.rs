//! Convergence sweeps: rerun TEMPO over a list of values of one parameter
//! and tabulate successive sup-norm differences of `⟨σz⟩`.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use structured_tempo::{Result, Trajectory};

use crate::config::{PanelConfig, SweepSection};
use crate::pipeline::{self, TempoSummary};

pub const SWEEPABLE: [&str; 5] = ["tempo.dt", "tempo.chi", "system.omega", "system.eps", "bath.temperature"];

/// `panel` with `param` set to `value`. Sweeping `tempo.dt` keeps the
/// horizon `n_steps·dt` fixed.
pub fn apply(panel: &PanelConfig, param: &str, value: f64) -> PanelConfig {
    let mut p = panel.clone();
    match param {
        "tempo.dt" => {
            let horizon = p.tempo.t_end();
            p.tempo.dt = value;
            p.tempo.n_steps = (horizon / value).round().max(1.0) as usize;
        }
        "tempo.chi" => p.tempo.chi = value,
        "system.omega" => p.system.omega = value,
        "system.eps" => p.system.eps = value,
        "bath.temperature" => p.bath.temperature = value,
        _ => unreachable!("sweep parameters are validated"),
    }
    p
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub param: String,
    pub values: Vec<f64>,
    /// `diffs[i]`: sup-norm between runs `i` and `i + 1` on shared times.
    pub diffs: Vec<f64>,
    /// Successive differences strictly decrease.
    pub monotone: bool,
    pub runs: Vec<TempoSummary>,
}

/// Strictly decreasing.
pub fn is_monotone(diffs: &[f64]) -> bool {
    diffs.windows(2).all(|w| w[1] < w[0])
}

pub fn run_sweep(panel: &PanelConfig, sweep: &SweepSection, strict: bool) -> Result<(Vec<Trajectory>, SweepSummary)> {
    let runs: Vec<_> = sweep
        .values
        .par_iter()
        .map(|&v| {
            let p = apply(panel, &sweep.param, v);
            let run = pipeline::run_tempo(&p)?;
            pipeline::check_invariants(&run.trajectory, &format!("{} {}={v}", panel.name, sweep.param), strict)?;
            Ok(run)
        })
        .collect::<Result<Vec<_>>>()?;
    let diffs: Vec<f64> = runs
        .windows(2)
        .map(|w| w[0].trajectory.sigma_z_sup_distance(&w[1].trajectory).unwrap_or(f64::NAN))
        .collect();
    let summary = SweepSummary {
        param: sweep.param.clone(),
        values: sweep.values.clone(),
        monotone: is_monotone(&diffs),
        diffs,
        runs: runs.iter().map(|r| r.summary.clone()).collect(),
    };
    Ok((runs.into_iter().map(|r| r.trajectory).collect(), summary))
}

pub fn write_table(path: &Path, s: &SweepSummary, meta: &[(String, String)]) -> std::io::Result<()> {
    crate::output::write_atomic(path, |w| {
        for (k, v) in meta {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "# monotone={}", s.monotone)?;
        writeln!(w, "index,value,max_bond,sup_diff_previous")?;
        for (i, v) in s.values.iter().enumerate() {
            let d = if i == 0 { String::new() } else { s.diffs[i - 1].to_string() };
            writeln!(w, "{i},{v},{},{d}", s.runs[i].max_bond)?;
        }
        Ok(())
    })
}
