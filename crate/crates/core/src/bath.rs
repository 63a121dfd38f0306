//! Bath observables reconstructed from the system trajectory.
//!
//! For a linear coupling `σz Σ_k (g_k a_k + h.c.)` the Heisenberg equations
//! give every mode amplitude as a functional of `⟨σz(t)⟩` alone:
//!
//! ```text
//! ⟨a_k(t)⟩ = −i g_k e^{−iω_k t} ∫_0^t dt′ e^{iω_k t′} ⟨σz(t′)⟩
//! ```
//!
//! and the real-space displacement of the shared 1-D field follows by
//! summing modes weighted by the unmapped density `J₀`. `⟨σz⟩` is linearly
//! interpolated between samples and integrated exactly against the
//! trigonometric kernels.

use std::io::{self, Write};

use num_complex::Complex;

use crate::quadrature::{self, oscillatory_panel_width, QuadratureOptions};
use crate::spectral::SpectralDensity;
use crate::{Error, Real, Result};

/// `⟨σz(t_n)⟩` on the uniform grid `t_n = n·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaZHistory<T> {
    dt: T,
    values: Vec<T>,
}

impl<T: Real> SigmaZHistory<T> {
    pub fn new(dt: T, values: Vec<T>) -> Result<Self> {
        if !(dt.is_finite() && dt > T::zero()) {
            return Err(Error::Validation(format!("history spacing must be > 0, got {dt}")));
        }
        if values.is_empty() {
            return Err(Error::Validation("history is empty".into()));
        }
        let bound = T::one() + T::lit(1e-6);
        if let Some(v) = values.iter().find(|v| !(v.abs() <= bound)) {
            return Err(Error::Validation(format!("|⟨σz⟩| = {v} exceeds 1")));
        }
        Ok(Self { dt, values })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn last_time(&self) -> T {
        self.dt * T::from_usize(self.values.len() - 1)
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.values.len()).map(|n| self.dt * T::from_usize(n)).collect()
    }

    fn check_time(&self, t: T) -> Result<()> {
        let slack = self.dt * T::lit(1e-9);
        if !(t >= T::zero() && t <= self.last_time() + slack) {
            return Err(Error::Domain(format!(
                "time {t} outside history [0, {}]",
                self.last_time()
            )));
        }
        Ok(())
    }

    /// `∫_0^t e^{iωt′} ⟨σz(t′)⟩ dt′` for each `t` in ascending `times`.
    fn phase_integrals(&self, omega: T, times: &[T]) -> Vec<Complex<T>> {
        let mut out = Vec::with_capacity(times.len());
        let mut acc = Complex::new(T::zero(), T::zero());
        let mut seg = 0usize;
        let last = self.values.len() - 1;
        for &t in times {
            while seg < last && self.dt * T::from_usize(seg + 1) <= t {
                acc = acc
                    + linear_segment(
                        omega,
                        self.dt * T::from_usize(seg),
                        self.dt,
                        self.values[seg],
                        self.values[seg + 1],
                    );
                seg += 1;
            }
            let start = self.dt * T::from_usize(seg);
            let tail = t - start;
            if seg < last && tail > T::zero() {
                let frac = tail / self.dt;
                let end = self.values[seg] + (self.values[seg + 1] - self.values[seg]) * frac;
                out.push(acc + linear_segment(omega, start, tail, self.values[seg], end));
            } else {
                out.push(acc);
            }
        }
        out
    }
}

/// `∫_a^{a+len} e^{iωt} s(t) dt` for `s` linear from `sa` to `sb`.
fn linear_segment<T: Real>(omega: T, a: T, len: T, sa: T, sb: T) -> Complex<T> {
    let z = Complex::new(T::zero(), omega * len);
    let (p1, p2) = phi_functions(z);
    let (s, c) = (omega * a).sin_cos();
    Complex::new(c, s) * (p1 * sa + p2 * (sb - sa)) * len
}

/// `((e^z − 1)/z, (z e^z − e^z + 1)/z²)`, i.e. `∫_0^1 e^{zv} dv` and
/// `∫_0^1 v e^{zv} dv`.
fn phi_functions<T: Real>(z: Complex<T>) -> (Complex<T>, Complex<T>) {
    if z.norm() < T::lit(0.5) {
        let mut p1 = Complex::new(T::zero(), T::zero());
        let mut p2 = Complex::new(T::zero(), T::zero());
        let mut term = Complex::new(T::one(), T::zero()); // z^k / k!
        for k in 0..24 {
            let kf = T::from_usize(k);
            p1 = p1 + term / (kf + T::one());
            p2 = p2 + term / (kf + T::lit(2.0));
            term = term * z / (kf + T::one());
        }
        (p1, p2)
    } else {
        let ez = z.exp();
        let one = Complex::new(T::one(), T::zero());
        ((ez - one) / z, (z * ez - ez + one) / (z * z))
    }
}

/// `⟨a_k(t)⟩` for a mode of coupling `g_k` and frequency `ω_k`.
pub fn mode_expectation<T: Real>(h: &SigmaZHistory<T>, g_k: Complex<T>, omega_k: T, t: T) -> Result<Complex<T>> {
    if !(omega_k > T::zero()) {
        return Err(Error::Domain(format!("mode frequency must be > 0, got {omega_k}")));
    }
    h.check_time(t)?;
    let integral = h.phase_integrals(omega_k, &[t])[0];
    let (s, c) = (omega_k * t).sin_cos();
    let minus_i = Complex::new(T::zero(), -T::one());
    Ok(minus_i * g_k * Complex::new(c, -s) * integral)
}

/// `∫_0^t sin(ω(t − t′)) ⟨σz(t′)⟩ dt′` for each `t` in ascending `times`.
pub fn sine_response<T: Real>(h: &SigmaZHistory<T>, omega: T, times: &[T]) -> Vec<T> {
    h.phase_integrals(omega, times)
        .into_iter()
        .zip(times)
        .map(|(i, &t)| {
            let (s, c) = (omega * t).sin_cos();
            (Complex::new(c, s) * i.conj()).im
        })
        .collect()
}

/// `Φ(x, t)` on a grid; `values[it][ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField<T> {
    pub x_grid: Vec<T>,
    pub t_grid: Vec<T>,
    pub values: Vec<Vec<T>>,
    /// `max |Φ|` over the grid.
    pub normalization: T,
    pub error: T,
}

impl<T: Real> DisplacementField<T> {
    /// `max |Φ(x, t) + Φ(−x, t)|` over grid pairs `x, −x` (0 if none).
    pub fn antisymmetry_defect(&self) -> T {
        let mut worst = T::zero();
        for (i, &x) in self.x_grid.iter().enumerate() {
            let tol = T::lit(1e-12) * x.abs().max(T::one());
            if let Some(k) = self.x_grid.iter().position(|&y| (y + x).abs() <= tol) {
                for row in &self.values {
                    worst = worst.max((row[i] + row[k]).abs());
                }
            }
        }
        worst
    }

    /// `max |Φ(0, t)|` if the grid contains `x = 0`.
    pub fn origin_value(&self) -> Option<T> {
        let i = self.x_grid.iter().position(|&x| x == T::zero())?;
        Some(self.values.iter().map(|r| r[i].abs()).fold(T::zero(), T::max))
    }

    /// Writes `x,t,phi` rows after a `#` preamble recording the
    /// normalization and the given parameters.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[(String, String)]) -> io::Result<()> {
        writeln!(w, "# normalization={}", self.normalization)?;
        for (k, v) in metadata {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "x,t,phi")?;
        for (it, t) in self.t_grid.iter().enumerate() {
            for (ix, x) in self.x_grid.iter().enumerate() {
                writeln!(w, "{x},{t},{}", self.values[it][ix])?;
            }
        }
        Ok(())
    }
}

/// Reconstructs the displacement of the shared field,
///
/// ```text
/// Φ(x,t) = 8 ∫_0^∞ dω √(J₀(ω)/ω) sin(ωR/2) sin(ωx) ∫_0^t dt′ sin(ω(t−t′)) ⟨σz(t′)⟩,
/// ```
///
/// where `base` is the unmapped density `J₀` and the origin sits midway
/// between the sites.
pub fn displacement_field<T: Real>(
    h: &SigmaZHistory<T>,
    base: &SpectralDensity<T>,
    separation: T,
    x_grid: &[T],
    t_grid: &[T],
    opts: &QuadratureOptions<T>,
) -> Result<DisplacementField<T>> {
    if !(separation.is_finite() && separation > T::zero()) {
        return Err(Error::Domain(format!("separation must be > 0, got {separation}")));
    }
    if x_grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("x grid must be finite".into()));
    }
    for &t in t_grid {
        h.check_time(t)?;
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("t grid must be ascending".into()));
    }
    let nx = x_grid.len();
    let nt = t_grid.len();
    if nx == 0 || nt == 0 {
        return Ok(DisplacementField {
            x_grid: x_grid.to_vec(),
            t_grid: t_grid.to_vec(),
            values: vec![vec![T::zero(); nx]; nt],
            normalization: T::zero(),
            error: T::zero(),
        });
    }

    let t_max = t_grid.iter().copied().fold(T::zero(), T::max);
    let x_max = x_grid.iter().map(|x| x.abs()).fold(T::zero(), T::max);
    let scale = t_max.max(x_max).max(separation);
    let eight = T::lit(8.0);
    let half_r = T::lit(0.5) * separation;

    let integrand = |w: T| -> Vec<T> {
        let mut out = vec![T::zero(); nt * nx];
        let amp = eight * base.over_omega(w).max(T::zero()).sqrt() * (w * half_r).sin();
        if amp == T::zero() {
            return out;
        }
        let resp = sine_response(h, w, t_grid);
        let sx: Vec<T> = x_grid.iter().map(|&x| (w * x).sin()).collect();
        for (it, r) in resp.iter().enumerate() {
            let a = amp * *r;
            for (ix, s) in sx.iter().enumerate() {
                out[it * nx + ix] = a * *s;
            }
        }
        out
    };
    let est = quadrature::integrate_panels(
        integrand,
        T::zero(),
        base.cutoff,
        oscillatory_panel_width(scale),
        opts,
    )?;

    let values: Vec<Vec<T>> = est.value.chunks(nx).map(<[T]>::to_vec).collect();
    let normalization = est.value.iter().map(|v| v.abs()).fold(T::zero(), T::max);
    Ok(DisplacementField {
        x_grid: x_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        values,
        normalization,
        error: est.error,
    })
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * T::from_usize(i) / T::from_usize(n - 1))
            .collect(),
    }
}
