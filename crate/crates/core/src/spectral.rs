//! Spectral densities, thermal bath correlation functions and the discretized
//! influence-functional coefficients.
//!
//! The bath couples to the system through `σz ⊗ Σ_k (g_k a_k + g_k* a_k†)` and
//! is characterized by `J(ω) = Σ_k |g_k|² δ(ω − ω_k)`. Its equilibrium
//! autocorrelation is
//!
//! ```text
//! C(t) = ∫_0^∞ dω J(ω) [coth(ω/2T) cos(ωt) − i sin(ωt)].
//! ```

use std::io::{self, Write};

use num_complex::Complex;
use rayon::prelude::*;

use crate::quadrature::{self, oscillatory_panel_width, Estimate, QuadratureOptions};
use crate::{Error, Real, Result};

/// Ratio to the peak value below which the default cutoff treats `J` as zero.
pub const CUTOFF_RATIO: f64 = 1e-8;

/// Below `SMALL_OMEGA_RATIO · ω_ref` the thermal factor uses its series.
pub const SMALL_OMEGA_RATIO: f64 = 1e-6;

/// Parameters of the underdamped (Brownian-oscillator) density
/// `J₀(ω) = αΓω₀²ω / [(ω₀² − ω²)² + Γ²ω²]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnderdampedParams<T> {
    pub alpha: T,
    pub omega0: T,
    pub gamma: T,
}

impl<T: Real> UnderdampedParams<T> {
    pub fn new(alpha: T, omega0: T, gamma: T) -> Result<Self> {
        let p = Self {
            alpha,
            omega0,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: T| x.is_finite() && x > T::zero();
        if !ok(self.alpha) {
            return Err(Error::Validation(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !ok(self.omega0) {
            return Err(Error::Validation(format!("omega0 must be > 0, got {}", self.omega0)));
        }
        if !ok(self.gamma) {
            return Err(Error::Validation(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }

    fn denominator(&self, omega: T) -> T {
        let w2 = self.omega0 * self.omega0 - omega * omega;
        w2 * w2 + self.gamma * self.gamma * omega * omega
    }

    /// `J₀(ω)/ω`, finite at ω = 0.
    pub fn over_omega(&self, omega: T) -> T {
        self.alpha * self.gamma * self.omega0 * self.omega0 / self.denominator(omega)
    }

    pub fn eval(&self, omega: T) -> T {
        omega * self.over_omega(omega)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralKind<T> {
    Underdamped(UnderdampedParams<T>),
    /// Two sites at separation `separation` sharing one 1-D bath:
    /// `J(ω) = 2 J_base(ω) (1 − cos ωR)`.
    CommonEnvironment {
        base: Box<SpectralDensity<T>>,
        separation: T,
    },
    Scaled {
        base: Box<SpectralDensity<T>>,
        factor: T,
    },
}

/// A spectral density with an explicit frequency cutoff beyond which it is
/// treated as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity<T> {
    pub kind: SpectralKind<T>,
    pub cutoff: T,
}

impl<T: Real> SpectralDensity<T> {
    /// Underdamped density with the default cutoff: the frequency above the
    /// peak where `J` first drops below [`CUTOFF_RATIO`] of its peak value.
    pub fn underdamped(params: UnderdampedParams<T>) -> Result<Self> {
        params.validate()?;
        let cutoff = default_cutoff(&params);
        Ok(Self {
            kind: SpectralKind::Underdamped(params),
            cutoff,
        })
    }

    pub fn common_environment(base: SpectralDensity<T>, separation: T) -> Result<Self> {
        if !(separation.is_finite() && separation > T::zero()) {
            return Err(Error::Validation(format!(
                "separation R must be > 0, got {separation}"
            )));
        }
        let cutoff = base.cutoff;
        Ok(Self {
            kind: SpectralKind::CommonEnvironment {
                base: Box::new(base),
                separation,
            },
            cutoff,
        })
    }

    pub fn scaled(base: SpectralDensity<T>, factor: T) -> Result<Self> {
        if !(factor.is_finite() && factor >= T::zero()) {
            return Err(Error::Validation(format!("scale factor must be ≥ 0, got {factor}")));
        }
        let cutoff = base.cutoff;
        Ok(Self {
            kind: SpectralKind::Scaled {
                base: Box::new(base),
                factor,
            },
            cutoff,
        })
    }

    pub fn with_cutoff(mut self, cutoff: T) -> Self {
        self.cutoff = cutoff;
        self
    }

    /// Evaluates `J(ω)`; zero beyond the cutoff.
    pub fn eval(&self, omega: T) -> Result<T> {
        if !(omega >= T::zero()) {
            return Err(Error::Domain(format!(
                "spectral density evaluated at negative frequency {omega}"
            )));
        }
        Ok(self.eval_unchecked(omega))
    }

    pub(crate) fn eval_unchecked(&self, omega: T) -> T {
        if omega > self.cutoff {
            return T::zero();
        }
        omega * self.shape_over_omega(omega)
    }

    /// `J(ω)/ω` with the removable singularity at ω = 0 resolved.
    pub fn over_omega(&self, omega: T) -> T {
        if omega > self.cutoff {
            return T::zero();
        }
        self.shape_over_omega(omega)
    }

    fn shape_over_omega(&self, omega: T) -> T {
        match &self.kind {
            SpectralKind::Underdamped(p) => p.over_omega(omega),
            SpectralKind::CommonEnvironment { base, separation } => {
                let half = T::lit(0.5) * omega * *separation;
                let s = half.sin();
                // 2 (1 − cos ωR) = 4 sin²(ωR/2)
                T::lit(4.0) * s * s * base.shape_over_omega(omega)
            }
            SpectralKind::Scaled { base, factor } => *factor * base.shape_over_omega(omega),
        }
    }

    /// Characteristic frequency of the innermost underdamped density.
    pub fn reference_frequency(&self) -> T {
        match &self.kind {
            SpectralKind::Underdamped(p) => p.omega0,
            SpectralKind::CommonEnvironment { base, .. } | SpectralKind::Scaled { base, .. } => {
                base.reference_frequency()
            }
        }
    }

    /// Largest spatial separation appearing in the density (0 if none).
    pub fn oscillation_length(&self) -> T {
        match &self.kind {
            SpectralKind::Underdamped(_) => T::zero(),
            SpectralKind::CommonEnvironment { base, separation } => {
                separation.max(base.oscillation_length())
            }
            SpectralKind::Scaled { base, .. } => base.oscillation_length(),
        }
    }

    /// The innermost underdamped parameters, if the density is built on one.
    pub fn underdamped_params(&self) -> Option<&UnderdampedParams<T>> {
        match &self.kind {
            SpectralKind::Underdamped(p) => Some(p),
            SpectralKind::CommonEnvironment { base, .. } | SpectralKind::Scaled { base, .. } => {
                base.underdamped_params()
            }
        }
    }

    /// Maximum of `J` on a uniform grid of `samples` points over `[0, cutoff]`.
    pub fn sampled_max(&self, samples: usize) -> T {
        let n = samples.max(2);
        (0..=n)
            .map(|i| self.eval_unchecked(self.cutoff * T::from_usize(i) / T::from_usize(n)))
            .fold(T::zero(), T::max)
    }
}

fn default_cutoff<T: Real>(p: &UnderdampedParams<T>) -> T {
    // locate the peak on a fine grid around ω₀
    let grid = 4000;
    let mut peak_w = p.omega0;
    let mut peak = p.eval(p.omega0);
    for i in 1..=grid {
        let w = p.omega0 * T::lit(2.0) * T::from_usize(i) / T::from_usize(grid);
        let v = p.eval(w);
        if v > peak {
            peak = v;
            peak_w = w;
        }
    }
    let target = peak * T::lit(CUTOFF_RATIO);
    let step = T::lit(1.01);
    let mut lo = peak_w;
    let mut hi = peak_w * step;
    while p.eval(hi) >= target {
        lo = hi;
        hi = hi * step;
    }
    for _ in 0..60 {
        let mid = T::lit(0.5) * (lo + hi);
        if p.eval(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// A spectral density at a temperature (`k_B = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec<T> {
    pub density: SpectralDensity<T>,
    pub temperature: T,
}

impl<T: Real> BathSpec<T> {
    pub fn new(density: SpectralDensity<T>, temperature: T) -> Result<Self> {
        if !(temperature.is_finite() && temperature >= T::zero()) {
            return Err(Error::Validation(format!(
                "temperature must be ≥ 0, got {temperature}"
            )));
        }
        Ok(Self {
            density,
            temperature,
        })
    }

    /// `J(ω) coth(ω/2T)`, or `J(ω)` at zero temperature.
    pub fn thermal_weight(&self, omega: T) -> T {
        let t = self.temperature;
        if t == T::zero() {
            return self.density.eval_unchecked(omega);
        }
        let small = T::lit(SMALL_OMEGA_RATIO) * self.density.reference_frequency();
        if omega < small {
            // coth(x) ≈ 1/x + x/3 with x = ω/2T
            let jw = self.density.over_omega(omega);
            return jw * (T::lit(2.0) * t + omega * omega / (T::lit(6.0) * t));
        }
        self.density.eval_unchecked(omega) / (omega / (T::lit(2.0) * t)).tanh()
    }

    fn panel_width(&self, time_scale: T) -> T {
        let scale = time_scale.max(self.density.oscillation_length());
        if scale > T::zero() {
            oscillatory_panel_width(scale)
        } else {
            T::infinity()
        }
    }
}

/// Evaluates the bath autocorrelation `C(t)` by panelled quadrature.
pub fn correlation<T: Real>(
    bath: &BathSpec<T>,
    t: T,
    opts: &QuadratureOptions<T>,
) -> Result<Estimate<Complex<T>, T>> {
    if !(t >= T::zero()) {
        return Err(Error::Domain(format!("correlation time must be ≥ 0, got {t}")));
    }
    quadrature::integrate_panels(
        |w: T| {
            let (s, c) = (w * t).sin_cos();
            Complex::new(bath.thermal_weight(w) * c, -bath.density.eval_unchecked(w) * s)
        },
        T::zero(),
        bath.density.cutoff,
        bath.panel_width(t),
        opts,
    )
}

/// Discretized influence-functional coefficients for a stationary bath.
///
/// `eta_diag` integrates `C(t′ − t″)` over the triangle
/// `t_{k−1} ≤ t″ ≤ t′ ≤ t_k`; `eta_offdiag[m − 1]` integrates it over the
/// square `[t_{k−1}, t_k] × [t_{k−m−1}, t_{k−m}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceCoefficients<T> {
    pub eta_diag: Complex<T>,
    pub eta_offdiag: Vec<Complex<T>>,
    pub dt: T,
    /// Number of retained lags (`eta_offdiag.len()`).
    pub k_max: usize,
    /// Largest quadrature error estimate over all entries.
    pub error: T,
}

impl<T: Real> InfluenceCoefficients<T> {
    /// Coefficient at lag `m` (0 is the self-interaction). Zero beyond `k_max`.
    pub fn eta(&self, lag: usize) -> Complex<T> {
        if lag == 0 {
            self.eta_diag
        } else {
            self.eta_offdiag
                .get(lag - 1)
                .copied()
                .unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
        }
    }

    /// Writes `index,re,im` rows; index 0 is the self-interaction.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# dt={}", self.dt)?;
        writeln!(w, "index,re,im")?;
        for lag in 0..=self.k_max {
            let e = self.eta(lag);
            writeln!(w, "{lag},{},{}", e.re, e.im)?;
        }
        Ok(())
    }
}

fn lag_count(n_steps: usize, k_max: Option<usize>) -> Result<usize> {
    if n_steps == 0 {
        return Err(Error::Domain("step count must be ≥ 1".into()));
    }
    let full = n_steps - 1;
    match k_max {
        None => Ok(full),
        Some(0) => Err(Error::Domain("memory length must be ≥ 1".into())),
        Some(k) => Ok(k.min(full)),
    }
}

// (1 − cos x)/x² and (x − sin x)/x², with series near x = 0
fn one_minus_cos_over_sq<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-3) {
        let x2 = x * x;
        T::lit(0.5) - x2 / T::lit(24.0) + x2 * x2 / T::lit(720.0)
    } else {
        let s = (T::lit(0.5) * x).sin();
        T::lit(2.0) * s * s / (x * x)
    }
}

fn x_minus_sin_over_sq<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-3) {
        let x2 = x * x;
        x / T::lit(6.0) - x * x2 / T::lit(120.0) + x * x2 * x2 / T::lit(5040.0)
    } else {
        (x - x.sin()) / (x * x)
    }
}

/// Computes the influence coefficients for time step `dt` over `n_steps`
/// steps, retaining `k_max` lags (`None` keeps the full history `n_steps − 1`).
///
/// The time windows are integrated analytically against the spectral
/// representation of `C`, leaving one frequency integral per lag. The
/// quadrature tolerance applies to `η/Δt²`.
pub fn influence_coefficients<T: Real>(
    bath: &BathSpec<T>,
    dt: T,
    n_steps: usize,
    k_max: Option<usize>,
    opts: &QuadratureOptions<T>,
) -> Result<InfluenceCoefficients<T>> {
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(Error::Domain(format!("time step must be > 0, got {dt}")));
    }
    let lags = lag_count(n_steps, k_max)?;
    let cutoff = bath.density.cutoff;
    let dt2 = dt * dt;

    let diag = quadrature::integrate_panels(
        |w: T| {
            let x = w * dt;
            Complex::new(
                bath.thermal_weight(w) * one_minus_cos_over_sq(x),
                -bath.density.eval_unchecked(w) * x_minus_sin_over_sq(x),
            )
        },
        T::zero(),
        cutoff,
        bath.panel_width(dt),
        opts,
    )?;

    let offdiag: Vec<Estimate<Complex<T>, T>> = (1..=lags)
        .into_par_iter()
        .map(|m| {
            let lag_time = dt * T::from_usize(m);
            quadrature::integrate_panels(
                |w: T| {
                    let x = w * dt;
                    let window = T::lit(2.0) * one_minus_cos_over_sq(x);
                    let (s, c) = (w * lag_time).sin_cos();
                    Complex::new(
                        bath.thermal_weight(w) * window * c,
                        -bath.density.eval_unchecked(w) * window * s,
                    )
                },
                T::zero(),
                cutoff,
                bath.panel_width(lag_time + dt),
                opts,
            )
        })
        .collect::<Result<_>>()?;

    let mut error = diag.error;
    let eta_offdiag = offdiag
        .into_iter()
        .map(|e| {
            error = error.max(e.error);
            e.value * dt2
        })
        .collect();
    Ok(InfluenceCoefficients {
        eta_diag: diag.value * dt2,
        eta_offdiag,
        dt,
        k_max: lags,
        error: error * dt2,
    })
}

/// Influence coefficients from an arbitrary stationary correlation function,
/// using the reduction of each window integral to
/// `∫_{−Δt}^{Δt} (Δt − |s|) C(mΔt + s) ds` (and `∫_0^{Δt} (Δt − s) C(s) ds`
/// for the self-interaction).
pub fn influence_coefficients_from_correlation<T, F>(
    corr: F,
    dt: T,
    n_steps: usize,
    k_max: Option<usize>,
    opts: &QuadratureOptions<T>,
) -> Result<InfluenceCoefficients<T>>
where
    T: Real,
    F: Fn(T) -> Complex<T> + Sync,
{
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(Error::Domain(format!("time step must be > 0, got {dt}")));
    }
    let lags = lag_count(n_steps, k_max)?;
    let diag = quadrature::integrate(|s: T| corr(s) * (dt - s), T::zero(), dt, opts)?;
    let mut error = diag.error;
    let mut eta_offdiag = Vec::with_capacity(lags);
    for m in 1..=lags {
        let centre = dt * T::from_usize(m);
        let e = quadrature::integrate(
            |s: T| corr(centre + s) * (dt - s.abs()),
            -dt,
            dt,
            opts,
        )?;
        error = error.max(e.error);
        eta_offdiag.push(e.value);
    }
    Ok(InfluenceCoefficients {
        eta_diag: diag.value,
        eta_offdiag,
        dt,
        k_max: lags,
        error,
    })
}

/// Writes `t,re,im` rows of `C(t)` at the given times.
pub fn write_correlation_csv<T: Real, W: Write>(
    mut w: W,
    bath: &BathSpec<T>,
    times: &[T],
    opts: &QuadratureOptions<T>,
) -> Result<()> {
    let io = |e: io::Error| Error::Validation(format!("write failed: {e}"));
    writeln!(w, "t,re,im").map_err(io)?;
    for &t in times {
        let c = correlation(bath, t, opts)?.value;
        writeln!(w, "{t},{},{}", c.re, c.im).map_err(io)?;
    }
    Ok(())
}
