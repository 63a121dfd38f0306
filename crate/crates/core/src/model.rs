//! System models: the two-site dimer, its exact single-excitation mapping to
//! a spin-boson problem, free propagators and initial states.
//!
//! Density matrices are written in the σz eigenbasis `{↑, ↓}` (index 0 is
//! ↑). Superoperators act on the row-major vectorization `j = 2a + b` of
//! `ρ_ab`, so the forward and backward path variables of `j` are the σz
//! eigenvalues of `a` and `b`.

use num_complex::Complex;

use crate::spectral::SpectralDensity;
use crate::{Error, Real, Result};

pub type Mat2<T> = [[Complex<T>; 2]; 2];
pub type Superop<T> = [[Complex<T>; 4]; 4];

/// σz eigenvalue of basis index 0 (↑) and 1 (↓).
pub fn sigma_z_eigenvalue(index: usize) -> i32 {
    if index == 0 {
        1
    } else {
        -1
    }
}

/// Forward and backward path variables `(s⁺, s⁻)` of vectorized index `j`.
pub fn path_variables(j: usize) -> (i32, i32) {
    (sigma_z_eigenvalue(j / 2), sigma_z_eigenvalue(j % 2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimerParams<T> {
    pub eps1: T,
    pub eps2: T,
    pub omega: T,
    pub r1: T,
    pub r2: T,
}

/// Parameters of `H_S = (Ω/2) σx + (ε/2) σz` and, for a common environment,
/// the site separation `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinBosonParams<T> {
    pub omega: T,
    pub eps: T,
    pub separation: Option<T>,
}

impl<T: Real> SpinBosonParams<T> {
    pub fn new(omega: T, eps: T) -> Self {
        Self {
            omega,
            eps,
            separation: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.eps.is_finite()) {
            return Err(Error::Validation("system parameters must be finite".into()));
        }
        if let Some(r) = self.separation {
            if !(r.is_finite() && r > T::zero()) {
                return Err(Error::Validation(format!("separation must be > 0, got {r}")));
            }
        }
        Ok(())
    }
}

/// Reduces the dimer in its single-excitation sector to a spin:
/// `ε = ε₂ − ε₁`, `R = |r₁ − r₂|`, tunneling unchanged. `σz = +1` is the
/// excitation on site 2.
pub fn map_dimer_to_spin<T: Real>(d: &DimerParams<T>) -> SpinBosonParams<T> {
    SpinBosonParams {
        omega: d.omega,
        eps: d.eps2 - d.eps1,
        separation: Some((d.r1 - d.r2).abs()),
    }
}

/// The spectral density seen by the mapped spin when both sites share a bath
/// with density `base`.
pub fn mapped_density<T: Real>(d: &DimerParams<T>, base: SpectralDensity<T>) -> Result<SpectralDensity<T>> {
    SpectralDensity::common_environment(base, (d.r1 - d.r2).abs())
}

pub fn hamiltonian<T: Real>(p: &SpinBosonParams<T>) -> Mat2<T> {
    let h = T::lit(0.5);
    let z = T::zero();
    [
        [Complex::new(h * p.eps, z), Complex::new(h * p.omega, z)],
        [Complex::new(h * p.omega, z), Complex::new(-h * p.eps, z)],
    ]
}

/// `exp(−i H_S dt)`, exact for the 2×2 Hamiltonian.
pub fn unitary<T: Real>(p: &SpinBosonParams<T>, dt: T) -> Mat2<T> {
    let hm = hamiltonian(p);
    let norm = T::lit(0.5) * (p.omega * p.omega + p.eps * p.eps).sqrt();
    let (s, c) = (norm * dt).sin_cos();
    // sin(|h| dt)/|h| with the |h| → 0 limit dt
    let sinc = if norm == T::zero() { dt } else { s / norm };
    let minus_i = Complex::new(T::zero(), -T::one());
    let mut u = [[Complex::new(T::zero(), T::zero()); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            u[a][b] = minus_i * hm[a][b] * sinc;
        }
        u[a][a] += Complex::new(c, T::zero());
    }
    u
}

/// Superoperator of `ρ ↦ U ρ U†`.
pub fn conjugation_superop<T: Real>(u: &Mat2<T>) -> Superop<T> {
    let mut s = [[Complex::new(T::zero(), T::zero()); 4]; 4];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    s[2 * a + b][2 * c + d] = u[a][c] * u[b][d].conj();
                }
            }
        }
    }
    s
}

/// The vectorized free evolution `ρ ↦ e^{−iH_S dt} ρ e^{iH_S dt}`.
pub fn free_propagator<T: Real>(p: &SpinBosonParams<T>, dt: T) -> Result<Superop<T>> {
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(Error::Domain(format!("time step must be > 0, got {dt}")));
    }
    Ok(conjugation_superop(&unitary(p, dt)))
}

pub fn apply_superop<T: Real>(s: &Superop<T>, v: &[Complex<T>; 4]) -> [Complex<T>; 4] {
    let mut out = [Complex::new(T::zero(), T::zero()); 4];
    for (i, row) in s.iter().enumerate() {
        out[i] = row.iter().zip(v).map(|(a, b)| *a * *b).fold(Complex::new(T::zero(), T::zero()), |x, y| x + y);
    }
    out
}

pub fn compose_superops<T: Real>(a: &Superop<T>, b: &Superop<T>) -> Superop<T> {
    let mut out = [[Complex::new(T::zero(), T::zero()); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// A 2×2 density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState<T> {
    pub rho: Mat2<T>,
}

impl<T: Real> SystemState<T> {
    /// Validates hermiticity and unit trace to 1e-12 and positivity to −1e-10.
    pub fn new(rho: Mat2<T>) -> Result<Self> {
        let st = Self { rho };
        let tol = T::lit(1e-12);
        if st.hermiticity_defect() > tol {
            return Err(Error::Validation(format!(
                "density matrix not Hermitian (defect {})",
                st.hermiticity_defect()
            )));
        }
        if (st.trace() - Complex::new(T::one(), T::zero())).norm() > tol {
            return Err(Error::Validation(format!("density matrix trace {} != 1", st.trace())));
        }
        let (lo, _) = st.eigenvalues();
        if lo < T::lit(-1e-10) {
            return Err(Error::Validation(format!("density matrix has eigenvalue {lo} < 0")));
        }
        Ok(st)
    }

    /// Wraps a matrix without validation (used for computed states whose
    /// deviations are reported separately).
    pub fn unchecked(rho: Mat2<T>) -> Self {
        Self { rho }
    }

    pub fn from_vec(v: &[Complex<T>; 4]) -> Self {
        Self {
            rho: [[v[0], v[1]], [v[2], v[3]]],
        }
    }

    pub fn to_vec(&self) -> [Complex<T>; 4] {
        [self.rho[0][0], self.rho[0][1], self.rho[1][0], self.rho[1][1]]
    }

    pub fn trace(&self) -> Complex<T> {
        self.rho[0][0] + self.rho[1][1]
    }

    /// Max-norm of `ρ − ρ†`.
    pub fn hermiticity_defect(&self) -> T {
        let mut d = T::zero();
        for a in 0..2 {
            for b in 0..2 {
                d = d.max((self.rho[a][b] - self.rho[b][a].conj()).norm());
            }
        }
        d
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> (T, T) {
        let a = self.rho[0][0].re;
        let d = self.rho[1][1].re;
        let b = (self.rho[0][1] + self.rho[1][0].conj()) * T::lit(0.5);
        let mean = T::lit(0.5) * (a + d);
        let half = T::lit(0.5) * (a - d);
        let r = (half * half + b.norm_sqr()).sqrt();
        (mean - r, mean + r)
    }

    pub fn purity(&self) -> T {
        let mut p = T::zero();
        for a in 0..2 {
            for b in 0..2 {
                p += (self.rho[a][b] * self.rho[b][a]).re;
            }
        }
        p
    }

    pub fn sigma_z(&self) -> T {
        (self.rho[0][0] - self.rho[1][1]).re
    }

    pub fn sigma_x(&self) -> T {
        (self.rho[0][1] + self.rho[1][0]).re
    }

    /// `⟨σ₊⟩ = Tr(ρ |↑⟩⟨↓|) = ρ_{↓↑}`.
    pub fn sigma_plus(&self) -> Complex<T> {
        self.rho[1][0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState<T> {
    Up,
    Down,
    Plus,
    Custom(Mat2<T>),
}

impl<T> Default for InitialState<T> {
    fn default() -> Self {
        InitialState::Up
    }
}

pub fn initial_state<T: Real>(label: &InitialState<T>) -> Result<SystemState<T>> {
    let z = Complex::new(T::zero(), T::zero());
    let o = Complex::new(T::one(), T::zero());
    let h = Complex::new(T::lit(0.5), T::zero());
    match label {
        InitialState::Up => Ok(SystemState::unchecked([[o, z], [z, z]])),
        InitialState::Down => Ok(SystemState::unchecked([[z, z], [z, o]])),
        InitialState::Plus => Ok(SystemState::unchecked([[h, h], [h, h]])),
        InitialState::Custom(m) => SystemState::new(*m),
    }
}
