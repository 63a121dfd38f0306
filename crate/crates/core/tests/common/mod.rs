//! Quadrature and linear-algebra helpers shared by the oracle tests. They are
//! written independently of the library's own quadrature.
#![allow(dead_code)]

use std::f64::consts::PI;

use structured_tempo::model::free_propagator;
use structured_tempo::{InfluenceCoefficients, SpinBosonParams, C64};

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

pub struct Rule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self { x, w }
    }

    pub fn apply<F: Fn(f64) -> C64>(&self, f: &F, a: f64, b: f64) -> C64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.x.iter().zip(&self.w).map(|(x, w)| f(c + h * x) * (w * h)).sum()
    }
}

/// Adaptive bisection comparing 10- and 20-point Gauss–Legendre on each piece.
pub fn adaptive<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, tol: f64) -> C64 {
    thread_local! {
        static RULES: (Rule, Rule) = (Rule::new(10), Rule::new(20));
    }
    fn go<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, tol: f64, depth: usize, r: &(Rule, Rule)) -> C64 {
        let coarse = r.0.apply(f, a, b);
        let fine = r.1.apply(f, a, b);
        if (coarse - fine).norm() <= tol || depth > 50 {
            return fine;
        }
        let m = 0.5 * (a + b);
        go(f, a, m, 0.5 * tol, depth + 1, r) + go(f, m, b, 0.5 * tol, depth + 1, r)
    }
    RULES.with(|r| go(f, a, b, tol, 0, r))
}

/// `∫_a^b f` over fixed breakpoints every `step`, each piece adaptive.
pub fn piecewise<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, step: f64, tol: f64) -> C64 {
    let n = ((b - a) / step).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    (0..n)
        .map(|i| adaptive(f, a + i as f64 * h, if i + 1 == n { b } else { a + (i + 1) as f64 * h }, tol / n as f64))
        .sum()
}

pub fn real(f: impl Fn(f64) -> f64) -> impl Fn(f64) -> C64 {
    move |x| C64::new(f(x), 0.0)
}

/// Underdamped density `αΓω₀²ω / ((ω₀² − ω²)² + Γ²ω²)`.
pub fn underdamped(alpha: f64, omega0: f64, gamma: f64, w: f64) -> f64 {
    let d = omega0 * omega0 - w * w;
    alpha * gamma * omega0 * omega0 * w / (d * d + gamma * gamma * w * w)
}

/// Dense `n×n` complex matrix exponential by scaling and squaring with a
/// Taylor series.
pub fn expm(a: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let n = a.len();
    let norm: f64 = a.iter().map(|r| r.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let s = (norm.max(1e-300).log2().ceil() as i32 + 1).max(0);
    let scale = 2f64.powi(-s);
    let m: Vec<Vec<C64>> = a.iter().map(|r| r.iter().map(|z| z * scale).collect()).collect();
    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..30 {
        term = matmul(&term, &m);
        for r in term.iter_mut() {
            for z in r.iter_mut() {
                *z /= k as f64;
            }
        }
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        result = matmul(&result, &result);
    }
    result
}

pub fn identity(n: usize) -> Vec<Vec<C64>> {
    (0..n)
        .map(|i| (0..n).map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect()
}

pub fn matmul(a: &[Vec<C64>], b: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

/// Thermal weight `coth(ω/2T)`, 1 at `T = 0`.
pub fn coth_weight(temperature: f64, w: f64) -> f64 {
    if temperature == 0.0 {
        1.0
    } else {
        1.0 / (w / (2.0 * temperature)).tanh()
    }
}

/// `∫_0^cutoff f` with fine pieces over the resonance region `[0, 2]` and
/// pieces of a quarter period of `t` beyond.
fn resonance_then_oscillation(f: &impl Fn(f64) -> C64, cutoff: f64, t: f64) -> C64 {
    let outer_step = if t > 0.0 { (PI / (2.0 * t)).min(0.5) } else { 0.5 };
    piecewise(f, 0.0, 2.0, 0.02, 1e-13) + piecewise(f, 2.0, cutoff, outer_step, 1e-13)
}

/// `C(t) = ∫ J(ω)[coth(ω/2T) cos ωt + sign·i sin ωt] dω` up to `cutoff`
/// for a density peaked below `ω = 2`. `sign = −1` gives the physical
/// kernel.
pub fn correlation(j: &impl Fn(f64) -> f64, temperature: f64, cutoff: f64, t: f64, sign: f64) -> C64 {
    let f = |w: f64| {
        let jw = j(w);
        C64::new(jw * coth_weight(temperature, w) * (w * t).cos(), sign * jw * (w * t).sin())
    };
    resonance_then_oscillation(&f, cutoff, t)
}

/// `∫_a^{a+Δt} dt′ ∫_b^{b+Δt} dt″ C(t′ − t″)`.
pub fn square_window(c: &impl Fn(f64) -> C64, a: f64, b: f64, dt: f64, rule: &Rule) -> C64 {
    rule.apply(&|tp: f64| rule.apply(&|tpp: f64| c(tp - tpp), b, b + dt), a, a + dt)
}

/// `∫_{a}^{a+Δt} dt′ ∫_{a}^{t′} dt″ C(t′ − t″)`.
pub fn triangle_window(c: &impl Fn(f64) -> C64, a: f64, dt: f64, rule: &Rule) -> C64 {
    rule.apply(&|tp: f64| rule.apply(&|tpp: f64| c(tp - tpp), a, tp), a, a + dt)
}

/// Coherence decay `exp[−4∫ J(ω) coth(ω/2T)(1 − cos ωt)/ω² dω]` of the
/// independent-boson model.
pub fn dephasing_factor(j: &impl Fn(f64) -> f64, temperature: f64, cutoff: f64, t: f64) -> f64 {
    let f = real(|w: f64| {
        // (1 − cos ωt)/ω² = 2 sin²(ωt/2)/ω²
        let s = (0.5 * w * t).sin();
        j(w) / w * coth_weight(temperature, w) * 2.0 * s * s / w
    });
    (-4.0 * resonance_then_oscillation(&f, cutoff, t).re).exp()
}

/// `σz` eigenvalues `(s⁺, s⁻)` of vectorized index `j = 2a + b`, `a = 0` ↑.
fn spins(j: usize) -> (f64, f64) {
    let s = |i: usize| if i == 0 { 1.0 } else { -1.0 };
    (s(j / 2), s(j % 2))
}

fn influence_factor(eta: C64, late: usize, early: usize) -> C64 {
    let (lp, lm) = spins(late);
    let (ep, em) = spins(early);
    (-(lp - lm) * (eta * ep - eta.conj() * em)).exp()
}

fn apply4(u: &[[C64; 4]; 4], v: &[C64; 4]) -> [C64; 4] {
    let mut out = [C64::new(0.0, 0.0); 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i] += u[i][j] * v[j];
        }
    }
    out
}

/// Vectorized density matrix after `n` steps by summing all `4^n` paths of
/// the discretized influence functional.
pub fn path_sum(p: &SpinBosonParams, eta: &InfluenceCoefficients, rho0: [C64; 4], n: usize) -> [C64; 4] {
    let half = free_propagator(p, 0.5 * eta.dt).unwrap();
    let full = free_propagator(p, eta.dt).unwrap();
    let start = apply4(&half, &rho0);
    let mut end = [C64::new(0.0, 0.0); 4];
    for code in 0..4usize.pow(n as u32) {
        let path: Vec<usize> = (0..n).map(|k| (code / 4usize.pow(k as u32)) % 4).collect();
        let mut amp = start[path[0]];
        for k in 1..n {
            amp *= full[path[k]][path[k - 1]];
        }
        for a in 0..n {
            amp *= influence_factor(eta.eta_diag, path[a], path[a]);
            for b in 0..a {
                amp *= influence_factor(eta.eta(a - b), path[a], path[b]);
            }
        }
        end[path[n - 1]] += amp;
    }
    apply4(&half, &end)
}
