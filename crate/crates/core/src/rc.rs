//! Reaction-coordinate benchmark solver.
//!
//! The underdamped bath is replaced by one explicit harmonic mode (the
//! reaction coordinate, RC) coupled to the TLS plus an ohmic residual bath
//! `J_RC(ω) = γω`. The TLS⊗RC density matrix obeys the time-local master
//! equation
//!
//! ```text
//! ∂ρ/∂t = −i[H_S, ρ] − [C, [χ, ρ]] + [C, {Ξ, ρ}],    C = c + c†,
//! ```
//!
//! with rate operators built in the eigenbasis `{|φ_j⟩}` of `H_S`:
//!
//! ```text
//! χ = (π/2) Σ_jk J_RC(ξ_jk) coth(ξ_jk/2T) C_jk |φ_j⟩⟨φ_k|
//! Ξ = (π/2) Σ_jk J_RC(ξ_jk) C_jk |φ_j⟩⟨φ_k|,        ξ_jk = φ_j − φ_k.
//! ```
//!
//! `H_S = (Ω/2)σx + (ε/2)σz + λσz(c + c†) + Ω_RC c†c`. The product basis
//! index is `2`-level TLS major: `i = a·n + f` with `a = 0` for ↑ and `f` the
//! Fock number.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, ShapeBuilder, Zip};
use ndarray_linalg::{Eigh, UPLO};

use crate::model::{Mat2, SpinBosonParams, SystemState};
use crate::spectral::UnderdampedParams;
use crate::trajectory::Trajectory;
use crate::{Error, Real, Result, C64};

/// Fock populations of the two top levels above which the truncation is
/// considered insufficient.
pub const TRUNCATION_POPULATION: f64 = 1e-6;

/// System eigenvalues below this are logged as transient negativity.
pub const NEGATIVITY_WARNING: f64 = -1e-4;

/// `(λ, Ω_RC, γ)` for an underdamped density:
/// `λ = √(παω₀/2)`, `Ω_RC = ω₀`, `γ = Γ/(2πω₀)`.
pub fn rc_map<T: Real>(u: &UnderdampedParams<T>) -> (T, T, T) {
    let pi = T::PI();
    let lambda = (pi * u.alpha * u.omega0 / T::lit(2.0)).sqrt();
    (lambda, u.omega0, u.gamma / (T::lit(2.0) * pi * u.omega0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RCModel {
    pub lambda: f64,
    pub omega_rc: f64,
    pub gamma_res: f64,
    pub n_trunc: usize,
    pub system: SpinBosonParams<f64>,
    pub temperature: f64,
}

impl RCModel {
    pub fn from_underdamped(
        u: &UnderdampedParams<f64>,
        system: SpinBosonParams<f64>,
        temperature: f64,
        n_trunc: usize,
    ) -> Result<Self> {
        u.validate()?;
        let (lambda, omega_rc, gamma_res) = rc_map(u);
        let m = Self {
            lambda,
            omega_rc,
            gamma_res,
            n_trunc,
            system,
            temperature,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_n_trunc(mut self, n_trunc: usize) -> Self {
        self.n_trunc = n_trunc;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trunc < 2 {
            return Err(Error::Validation(format!("n_trunc must be ≥ 2, got {}", self.n_trunc)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Validation(format!("λ must be ≥ 0, got {}", self.lambda)));
        }
        if !(self.omega_rc.is_finite() && self.omega_rc > 0.0) {
            return Err(Error::Validation(format!("Ω_RC must be > 0, got {}", self.omega_rc)));
        }
        if !(self.gamma_res.is_finite() && self.gamma_res >= 0.0) {
            return Err(Error::Validation(format!("γ must be ≥ 0, got {}", self.gamma_res)));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Validation(format!("temperature must be ≥ 0, got {}", self.temperature)));
        }
        self.system.validate()
    }

    pub fn dim(&self) -> usize {
        2 * self.n_trunc
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            out.slice_mut(s![i * rb..(i + 1) * rb, j * cb..(j + 1) * cb])
                .zip_mut_with(b, |o, &bv| *o = aij * bv);
        }
    }
    out
}

/// `c + c†` on `n` Fock levels.
fn position_ladder(n: usize) -> Array2<C64> {
    let mut x = Array2::zeros((n, n));
    for f in 1..n {
        let v = c((f as f64).sqrt());
        x[[f - 1, f]] = v;
        x[[f, f - 1]] = v;
    }
    x
}

/// `C = 1_TLS ⊗ (c + c†)`.
pub fn coupling_operator(n_trunc: usize) -> Array2<C64> {
    kron(&Array2::eye(2), &position_ladder(n_trunc))
}

pub fn build_rc_hamiltonian(m: &RCModel) -> Array2<C64> {
    let n = m.n_trunc;
    let sys = crate::model::hamiltonian(&m.system);
    let sys = Array2::from_shape_fn((2, 2), |(a, b)| sys[a][b]);
    let sz = Array2::from_shape_fn((2, 2), |(a, b)| match (a, b) {
        (0, 0) => c(1.0),
        (1, 1) => c(-1.0),
        _ => c(0.0),
    });
    let number = Array2::from_shape_fn((n, n), |(i, j)| if i == j { c(i as f64) } else { c(0.0) });
    let mut h = kron(&sys, &Array2::eye(n));
    h = h + kron(&sz, &position_ladder(n)).mapv(|v| v * m.lambda);
    h + kron(&Array2::eye(2), &number).mapv(|v| v * m.omega_rc)
}

/// `J_RC(ξ) coth(ξ/2T)` continued through ξ = 0 (`2γT`) and to T = 0
/// (`γ|ξ|`).
pub fn thermal_rate(gamma: f64, temperature: f64, xi: f64) -> f64 {
    if temperature == 0.0 {
        return gamma * xi.abs();
    }
    let x = xi / (2.0 * temperature);
    let x_coth_x = if x.abs() < 1e-4 {
        1.0 + x * x / 3.0 - x.powi(4) / 45.0
    } else {
        x / x.tanh()
    };
    2.0 * gamma * temperature * x_coth_x
}

/// χ and Ξ in the product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct RateOperators {
    pub chi_op: Array2<C64>,
    pub xi_op: Array2<C64>,
}

/// Eigenpairs of a Hermitian matrix, ascending.
///
/// `Eigh` on a complex row-major matrix returns eigenvectors of its
/// transpose, so the factorization runs on a column-major copy.
fn hermitian_eigen(h: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let mut col_major = Array2::zeros(h.dim().f());
    col_major.assign(h);
    Ok(col_major.eigh(UPLO::Lower)?)
}

/// Rate operators and `C` written in the eigenbasis of `H_S`.
#[derive(Debug, Clone)]
struct EigenFrame {
    energies: Array1<f64>,
    vectors: Array2<C64>,
    coupling: Array2<C64>,
    chi: Array2<C64>,
    xi: Array2<C64>,
}

impl EigenFrame {
    fn new(h: &Array2<C64>, coupling_product: &Array2<C64>, gamma: f64, temperature: f64) -> Result<Self> {
        let (energies, vectors) = hermitian_eigen(h)?;
        let vd = vectors.t().mapv(|v| v.conj());
        let coupling = vd.dot(coupling_product).dot(&vectors);
        let d = energies.len();
        let half_pi = 0.5 * PI;
        let mut chi = Array2::zeros((d, d));
        let mut xi = Array2::zeros((d, d));
        for j in 0..d {
            for k in 0..d {
                let w = energies[j] - energies[k];
                let cjk = coupling[[j, k]];
                chi[[j, k]] = cjk * (half_pi * thermal_rate(gamma, temperature, w));
                xi[[j, k]] = cjk * (half_pi * gamma * w);
            }
        }
        Ok(Self {
            energies,
            vectors,
            coupling,
            chi,
            xi,
        })
    }

    fn to_product(&self, a: &Array2<C64>) -> Array2<C64> {
        let vd = self.vectors.t().mapv(|v| v.conj());
        self.vectors.dot(a).dot(&vd)
    }

    fn from_product(&self, a: &Array2<C64>) -> Array2<C64> {
        let vd = self.vectors.t().mapv(|v| v.conj());
        vd.dot(a).dot(&self.vectors)
    }
}

/// Diagonalizes `h` and builds χ, Ξ for the residual bath of `m`.
pub fn build_rate_operators(h: &Array2<C64>, m: &RCModel) -> Result<RateOperators> {
    check_square(h, m.dim())?;
    let frame = EigenFrame::new(h, &coupling_operator(m.n_trunc), m.gamma_res, m.temperature)?;
    Ok(RateOperators {
        chi_op: frame.to_product(&frame.chi),
        xi_op: frame.to_product(&frame.xi),
    })
}

fn check_square(h: &Array2<C64>, dim: usize) -> Result<()> {
    if h.dim() != (dim, dim) {
        return Err(Error::Shape(format!("expected {dim}×{dim} matrix, got {:?}", h.dim())));
    }
    Ok(())
}

/// Truncated thermal state of the RC at temperature `T`.
pub fn thermal_rc_state(omega_rc: f64, temperature: f64, n_trunc: usize) -> Array2<C64> {
    let mut rho = Array2::zeros((n_trunc, n_trunc));
    if temperature == 0.0 {
        rho[[0, 0]] = c(1.0);
        return rho;
    }
    let weights: Vec<f64> = (0..n_trunc)
        .map(|f| (-(f as f64) * omega_rc / temperature).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    for (f, w) in weights.iter().enumerate() {
        rho[[f, f]] = c(w / z);
    }
    rho
}

/// Dissipative and coherent parts of the generator in the eigenframe,
/// with the sandwich operators precombined.
struct Generator {
    /// `ξ_jk` for the coherent part `−iξ_jk ρ_jk`.
    gaps: Array2<f64>,
    left: Array2<C64>,
    right: Array2<C64>,
    coupling: Array2<C64>,
    chi_plus_xi: Array2<C64>,
    chi_minus_xi: Array2<C64>,
}

impl Generator {
    fn new(frame: &EigenFrame) -> Self {
        let c = &frame.coupling;
        let plus = &frame.chi + &frame.xi;
        let minus = &frame.chi - &frame.xi;
        let d = frame.energies.len();
        let gaps = Array2::from_shape_fn((d, d), |(j, k)| frame.energies[j] - frame.energies[k]);
        Self {
            gaps,
            left: c.dot(&frame.xi) - c.dot(&frame.chi),
            right: -plus.dot(c),
            coupling: c.clone(),
            chi_plus_xi: plus,
            chi_minus_xi: minus,
        }
    }

    /// `Aρ + ρB + Cρ(χ+Ξ) + (χ−Ξ)ρC`.
    fn dissipator(&self, rho: &Array2<C64>) -> Array2<C64> {
        let mut out = self.left.dot(rho);
        out += &rho.dot(&self.right);
        out += &self.coupling.dot(rho).dot(&self.chi_plus_xi);
        out += &self.chi_minus_xi.dot(rho).dot(&self.coupling);
        out
    }

    /// Phases `e^{iξ_jk t}` taking eigenframe states to the interaction
    /// picture.
    fn phases(&self, energies: &Array1<f64>, t: f64) -> Array2<C64> {
        let u: Vec<C64> = energies.iter().map(|&e| C64::from_polar(1.0, e * t)).collect();
        Array2::from_shape_fn(self.gaps.dim(), |(j, k)| u[j] * u[k].conj())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Elevates the truncation warning to an error.
    pub strict: bool,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            strict: false,
            max_steps: 10_000_000,
        }
    }
}

/// Result of one master-equation integration.
#[derive(Debug, Clone)]
pub struct RcRun {
    pub trajectory: Trajectory,
    /// Largest population of the two top Fock levels over the run.
    pub top_population: f64,
    /// Smallest eigenvalue of the reduced TLS state over the run.
    pub min_eigenvalue: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl RcRun {
    pub fn truncation_ok(&self) -> bool {
        self.top_population <= TRUNCATION_POPULATION
    }
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

fn combo(y: &Array2<C64>, h: f64, terms: &[(f64, &Array2<C64>)]) -> Array2<C64> {
    let mut out = y.clone();
    for &(w, k) in terms {
        if w != 0.0 {
            out.scaled_add(C64::new(h * w, 0.0), k);
        }
    }
    out
}

fn error_norm(err: &Array2<C64>, y0: &Array2<C64>, y1: &Array2<C64>, rtol: f64, atol: f64) -> f64 {
    let mut acc = 0.0;
    Zip::from(err).and(y0).and(y1).for_each(|e, a, b| {
        let sc = atol + rtol * a.norm().max(b.norm());
        acc += (e.norm() / sc).powi(2);
    });
    (acc / err.len() as f64).sqrt()
}

fn reduce_to_tls(rho: &Array2<C64>, n: usize) -> Mat2<f64> {
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = C64::new(0.0, 0.0);
            for f in 0..n {
                acc += rho[[a * n + f, b * n + f]];
            }
            out[a][b] = acc;
        }
    }
    out
}

fn top_fock_population(rho: &Array2<C64>, n: usize) -> f64 {
    let mut p = 0.0;
    for a in 0..2 {
        for f in n - 2..n {
            p += rho[[a * n + f, a * n + f]].re;
        }
    }
    p
}

/// Integrates the master equation from `ρ_sys ⊗ ρ_RC(T)` and samples the
/// reduced TLS state at `0, dt_out, 2dt_out, …` up to `t_end`.
///
/// The integration runs in the interaction picture of `H_S` so that step
/// sizes are set by the dissipative dynamics; steps are clipped to land on
/// every output time.
pub fn evolve_master_equation(
    m: &RCModel,
    rho0_sys: &SystemState<f64>,
    t_end: f64,
    dt_out: f64,
    opts: &OdeOptions,
) -> Result<RcRun> {
    m.validate()?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::Domain(format!("t_end must be > 0, got {t_end}")));
    }
    if !(dt_out.is_finite() && dt_out > 0.0) {
        return Err(Error::Domain(format!("dt_out must be > 0, got {dt_out}")));
    }
    let n = m.n_trunc;
    let h = build_rc_hamiltonian(m);
    let frame = EigenFrame::new(&h, &coupling_operator(n), m.gamma_res, m.temperature)?;
    let gen = Generator::new(&frame);

    let sys = Array2::from_shape_fn((2, 2), |(a, b)| rho0_sys.rho[a][b]);
    let rho0 = kron(&sys, &thermal_rc_state(m.omega_rc, m.temperature, n));
    let mut y = frame.from_product(&rho0);

    // Interaction picture: y(t) = e^{iξt}∘ρ̃(t).
    let rhs = |t: f64, y: &Array2<C64>| -> Array2<C64> {
        let ph = gen.phases(&frame.energies, t);
        let rho = &*y * &ph.mapv(|p| p.conj());
        gen.dissipator(&rho) * &ph
    };

    let n_out = (t_end / dt_out + 1e-9).floor() as usize;
    let mut run = RcRun {
        trajectory: Trajectory::default(),
        top_population: 0.0,
        min_eigenvalue: f64::INFINITY,
        steps_accepted: 0,
        steps_rejected: 0,
    };
    let record = |t: f64, y: &Array2<C64>, run: &mut RcRun| -> Result<()> {
        let ph = gen.phases(&frame.energies, t);
        let rho_eig = &*y * &ph.mapv(|p| p.conj());
        let rho = frame.to_product(&rho_eig);
        let state = SystemState::unchecked(reduce_to_tls(&rho, n));
        let top = top_fock_population(&rho, n);
        run.top_population = run.top_population.max(top);
        if top > TRUNCATION_POPULATION {
            if opts.strict {
                return Err(Error::Truncation {
                    n_trunc: n,
                    time: t,
                    population: top,
                });
            }
            if run.top_population == top {
                log::warn!("RC truncation n = {n}: top Fock population {top:.3e} at t = {t}");
            }
        }
        let (lo, _) = state.eigenvalues();
        if lo < NEGATIVITY_WARNING && lo < run.min_eigenvalue {
            log::warn!("RC reduced state eigenvalue {lo:.3e} at t = {t}");
        }
        run.min_eigenvalue = run.min_eigenvalue.min(lo);
        run.trajectory.push(t, state, 0, 0.0);
        Ok(())
    };
    record(0.0, &y, &mut run)?;

    let mut t = 0.0;
    let rate_scale = gen.left.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-3);
    let mut step = (0.1 / rate_scale).min(dt_out);
    let mut k1 = rhs(t, &y);
    let mut steps = 0usize;
    for i in 1..=n_out {
        let t_target = i as f64 * dt_out;
        while t < t_target - 1e-12 * t_target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Resource {
                    step: run.steps_accepted,
                    extent: steps,
                    budget: opts.max_steps,
                });
            }
            let clipped = t + step >= t_target - 1e-12 * t_target;
            let hh = if clipped { t_target - t } else { step };
            let k2 = rhs(t + C2 * hh, &combo(&y, hh, &[(A21, &k1)]));
            let k3 = rhs(t + C3 * hh, &combo(&y, hh, &[(A31, &k1), (A32, &k2)]));
            let k4 = rhs(t + C4 * hh, &combo(&y, hh, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = rhs(
                t + C5 * hh,
                &combo(&y, hh, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = rhs(
                t + hh,
                &combo(&y, hh, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = combo(&y, hh, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = rhs(t + hh, &y_new);
            let mut err = Array2::zeros(y.dim());
            for &(w, k) in &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)] {
                err.scaled_add(C64::new(hh * w, 0.0), k);
            }
            let en = error_norm(&err, &y, &y_new, opts.rtol, opts.atol);
            if !en.is_finite() {
                return Err(Error::NumericalAccuracy {
                    context: format!("RC integration diverged at t = {t}"),
                    achieved: en,
                    requested: 1.0,
                });
            }
            let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            if en <= 1.0 {
                t = if clipped { t_target } else { t + hh };
                y = y_new;
                k1 = k7;
                run.steps_accepted += 1;
                if !clipped || factor < 1.0 {
                    step = hh * factor;
                }
            } else {
                run.steps_rejected += 1;
                step = hh * factor.min(1.0);
                if step < 1e-14 * t_end.max(1.0) {
                    return Err(Error::NumericalAccuracy {
                        context: format!("RC step size underflow at t = {t}"),
                        achieved: en,
                        requested: 1.0,
                    });
                }
            }
        }
        record(t, &y, &mut run)?;
    }
    Ok(run)
}

/// Outcome of a truncation convergence search.
#[derive(Debug, Clone)]
pub struct RcConvergence {
    pub n_trunc: usize,
    pub run: RcRun,
    /// `sup_t |⟨σz⟩_n − ⟨σz⟩_{n_prev}|` for the final increase.
    pub last_change: f64,
}

/// Increases `n_trunc` from `m.n_trunc` by `step` until the top Fock
/// population stays below [`TRUNCATION_POPULATION`] and the σz trajectory
/// changes by less than `tol`.
pub fn converge_truncation(
    m: &RCModel,
    rho0_sys: &SystemState<f64>,
    t_end: f64,
    dt_out: f64,
    opts: &OdeOptions,
    step: usize,
    tol: f64,
    n_max: usize,
) -> Result<RcConvergence> {
    let lenient = OdeOptions { strict: false, ..*opts };
    let mut n = m.n_trunc;
    let mut prev = evolve_master_equation(m, rho0_sys, t_end, dt_out, &lenient)?;
    loop {
        let n_next = n + step.max(1);
        if n_next > n_max {
            return Err(Error::Truncation {
                n_trunc: n,
                time: t_end,
                population: prev.top_population,
            });
        }
        let next = evolve_master_equation(&m.with_n_trunc(n_next), rho0_sys, t_end, dt_out, &lenient)?;
        let change = prev
            .trajectory
            .sigma_z_sup_distance(&next.trajectory)
            .unwrap_or(f64::INFINITY);
        log::info!(
            "RC n = {n_next}: change {change:.3e}, top population {:.3e}",
            next.top_population
        );
        if change < tol && prev.truncation_ok() {
            return Ok(RcConvergence {
                n_trunc: n,
                run: prev,
                last_change: change,
            });
        }
        n = n_next;
        prev = next;
    }
}

/// `n` such that a thermal oscillator at `T` holds less than `pop` in
/// levels `≥ n − 2`, plus `margin` levels for the coupling displacement.
pub fn thermal_truncation_estimate(omega_rc: f64, temperature: f64, pop: f64, margin: usize) -> usize {
    if temperature == 0.0 {
        return 2 + margin;
    }
    let q = (-omega_rc / temperature).exp();
    // Population of levels ≥ k is q^k.
    let k = (pop.ln() / q.ln()).ceil().max(0.0) as usize;
    (k + 2 + margin).max(2)
}
