//! Single-panel pipelines: TEMPO, reaction coordinate, comparison and bath
//! field reconstruction.

use std::time::Instant;

use serde::Serialize;
use structured_tempo::bath::{displacement_field, linspace};
use structured_tempo::model::{initial_state, InitialState};
use structured_tempo::rc::{self, OdeOptions, RCModel, RcConvergence};
use structured_tempo::spectral::influence_coefficients;
use structured_tempo::tempo::{self, TempoConfig};
use structured_tempo::tensor::SvdTruncation;
use structured_tempo::{
    BathSpec, DisplacementField, Error, InfluenceCoefficients, QuadratureOptions, Result, SpectralDensity,
    SpinBosonParams, SystemState, Trajectory, UnderdampedParams,
};

use crate::config::{DensitySpec, Initial, PanelConfig};

/// Trace and hermiticity bound on every emitted state.
pub const INVARIANT_TOLERANCE: f64 = 1e-8;

pub fn density(d: &DensitySpec) -> Result<SpectralDensity> {
    match d {
        DensitySpec::Underdamped {
            alpha,
            omega0,
            gamma,
            cutoff,
        } => {
            let j = SpectralDensity::underdamped(UnderdampedParams::new(*alpha, *omega0, *gamma)?)?;
            Ok(match cutoff {
                Some(c) => j.with_cutoff(*c),
                None => j,
            })
        }
        DensitySpec::CommonEnvironment { r, base } => SpectralDensity::common_environment(density(base)?, *r),
        DensitySpec::Scaled { factor, base } => SpectralDensity::scaled(density(base)?, *factor),
    }
}

pub fn bath(p: &PanelConfig) -> Result<BathSpec> {
    BathSpec::new(density(&p.bath.density)?, p.bath.temperature)
}

pub fn system(p: &PanelConfig) -> SpinBosonParams {
    let mut s = SpinBosonParams::new(p.system.omega, p.system.eps);
    if let DensitySpec::CommonEnvironment { r, .. } = p.bath.density {
        s.separation = Some(r);
    }
    s
}

pub fn initial(p: &PanelConfig) -> Result<SystemState> {
    initial_state(&match p.system.initial_state {
        Initial::Up => InitialState::Up,
        Initial::Down => InitialState::Down,
        Initial::Plus => InitialState::Plus,
    })
}

pub fn tempo_config(p: &PanelConfig) -> Result<TempoConfig> {
    let t = &p.tempo;
    let mut cfg = TempoConfig::new(t.dt, t.n_steps, t.chi)?;
    cfg.truncation = SvdTruncation::new(t.chi, t.max_bond)?;
    cfg.memory_cutoff = t.memory_cutoff;
    cfg.bond_budget = t.bond_budget;
    cfg.quadrature = QuadratureOptions::default().with_tolerance(t.quad_tol);
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct TempoSummary {
    pub max_bond: usize,
    pub discarded_weight: f64,
    pub eta_error: f64,
    pub max_trace_defect: f64,
    pub max_hermiticity_defect: f64,
    pub wall_seconds: f64,
}

pub struct TempoRun {
    pub trajectory: Trajectory,
    pub eta: InfluenceCoefficients,
    pub summary: TempoSummary,
}

pub fn run_tempo(p: &PanelConfig) -> Result<TempoRun> {
    let start = Instant::now();
    let cfg = tempo_config(p)?;
    let sys = system(p);
    sys.validate()?;
    let eta = influence_coefficients(&bath(p)?, cfg.dt, cfg.n_steps, cfg.memory_cutoff, &cfg.quadrature)?;
    let gates = tempo::build_gates(&eta, &sys)?;
    let trajectory = tempo::run_with_gates(&gates, &cfg, &initial(p)?)?;
    let summary = TempoSummary {
        max_bond: trajectory.max_bond.iter().copied().max().unwrap_or(1),
        discarded_weight: trajectory.discarded_weight.last().copied().unwrap_or(0.0),
        eta_error: eta.error,
        max_trace_defect: trajectory.max_trace_defect(),
        max_hermiticity_defect: trajectory.max_hermiticity_defect(),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    log::info!(
        "{}: TEMPO done, max bond {}, {:.1} s",
        p.name,
        summary.max_bond,
        summary.wall_seconds
    );
    Ok(TempoRun {
        trajectory,
        eta,
        summary,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RcSummary {
    pub n_trunc: usize,
    pub last_change: f64,
    pub top_population: f64,
    pub min_eigenvalue: f64,
    pub max_trace_defect: f64,
    pub max_hermiticity_defect: f64,
    pub wall_seconds: f64,
}

pub fn rc_model(p: &PanelConfig) -> Result<RCModel> {
    let DensitySpec::Underdamped {
        alpha, omega0, gamma, ..
    } = p.bath.density
    else {
        return Err(Error::Validation("the reaction-coordinate mapping needs an underdamped density".into()));
    };
    let u = UnderdampedParams::new(alpha, omega0, gamma)?;
    let (_, omega_rc, _) = rc::rc_map(&u);
    let n = p.rc.n_trunc.unwrap_or_else(|| {
        rc::thermal_truncation_estimate(omega_rc, p.bath.temperature, rc::TRUNCATION_POPULATION, 4)
    });
    RCModel::from_underdamped(&u, system(p), p.bath.temperature, n)
}

pub fn run_rc(p: &PanelConfig, strict: bool) -> Result<(RcConvergence, RcSummary)> {
    let start = Instant::now();
    let m = rc_model(p)?;
    let opts = OdeOptions {
        rtol: p.rc.ode_tol,
        atol: 1e-3 * p.rc.ode_tol,
        strict: strict || p.rc.strict,
        ..OdeOptions::default()
    };
    let conv = rc::converge_truncation(
        &m,
        &initial(p)?,
        p.tempo.t_end(),
        p.tempo.dt,
        &opts,
        p.rc.n_step,
        p.rc.conv_tol,
        p.rc.n_max,
    )?;
    let traj = &conv.run.trajectory;
    let summary = RcSummary {
        n_trunc: conv.n_trunc,
        last_change: conv.last_change,
        top_population: conv.run.top_population,
        min_eigenvalue: conv.run.min_eigenvalue,
        max_trace_defect: traj.max_trace_defect(),
        max_hermiticity_defect: traj.max_hermiticity_defect(),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    log::info!("{}: RC done, n = {}, {:.1} s", p.name, summary.n_trunc, summary.wall_seconds);
    Ok((conv, summary))
}

/// Rejects (strict) or logs a trajectory violating the trace or
/// hermiticity bound.
pub fn check_invariants(traj: &Trajectory, what: &str, strict: bool) -> Result<()> {
    let defect = traj.max_trace_defect().max(traj.max_hermiticity_defect());
    if defect > INVARIANT_TOLERANCE {
        if strict {
            return Err(Error::NumericalAccuracy {
                context: format!("{what} trace/hermiticity"),
                achieved: defect,
                requested: INVARIANT_TOLERANCE,
            });
        }
        log::warn!("{what}: trace/hermiticity defect {defect:e} exceeds {INVARIANT_TOLERANCE:e}");
    }
    Ok(())
}

/// `(t, σz_a, σz_b)` on a shared grid and the sup-norm of the difference.
pub fn sigma_z_difference(a: &Trajectory, b: &Trajectory) -> Result<(Vec<(f64, f64, f64)>, f64)> {
    let n = a.len().min(b.len());
    let (za, zb) = (a.sigma_z(), b.sigma_z());
    let mut rows = Vec::with_capacity(n);
    let mut sup = 0.0f64;
    for i in 0..n {
        let scale = a.times.get(1).copied().unwrap_or(1.0);
        if (a.times[i] - b.times[i]).abs() > 1e-9 * scale {
            return Err(Error::Consistency(format!(
                "time grids differ at sample {i}: {} vs {}",
                a.times[i], b.times[i]
            )));
        }
        sup = sup.max((za[i] - zb[i]).abs());
        rows.push((a.times[i], za[i], zb[i]));
    }
    Ok((rows, sup))
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldSummary {
    pub max_abs: f64,
    pub antisymmetry_defect: f64,
    pub origin_value: Option<f64>,
    pub quadrature_error: f64,
    pub wall_seconds: f64,
}

pub fn run_field(p: &PanelConfig, traj: &Trajectory) -> Result<(DisplacementField, FieldSummary)> {
    let start = Instant::now();
    let DensitySpec::CommonEnvironment { r, base } = &p.bath.density else {
        return Err(Error::Validation("the displacement field needs a common_environment density".into()));
    };
    let base = density(base)?;
    let f = &p.field;
    let xs = linspace(f.x_min.unwrap_or(-3.0 * r), f.x_max.unwrap_or(3.0 * r), f.nx);
    let ts = linspace(0.0, p.tempo.t_end(), f.nt);
    let opts = QuadratureOptions::default().with_tolerance(f.quad_tol);
    let field = displacement_field(&traj.sigma_z_history()?, &base, *r, &xs, &ts, &opts)?;
    let summary = FieldSummary {
        max_abs: field.normalization,
        antisymmetry_defect: field.antisymmetry_defect(),
        origin_value: field.origin_value(),
        quadrature_error: field.error,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((field, summary))
}
