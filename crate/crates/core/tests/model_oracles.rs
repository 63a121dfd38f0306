//! Free propagation against a Liouvillian matrix exponential, and state
//! invariants under random parameters.

mod common;

use std::f64::consts::PI;

use common::expm;
use proptest::prelude::*;
use structured_tempo::model::{
    apply_superop, compose_superops, free_propagator, initial_state, map_dimer_to_spin, mapped_density, InitialState,
};
use structured_tempo::{DimerParams, SpectralDensity, SpinBosonParams, SystemState, UnderdampedParams, C64};

/// `−i(H ⊗ 1 − 1 ⊗ Hᵀ)` on the row-major vectorization `j = 2a + b`.
fn liouvillian(omega: f64, eps: f64) -> Vec<Vec<C64>> {
    let h = [[0.5 * eps, 0.5 * omega], [0.5 * omega, -0.5 * eps]];
    let mut l = vec![vec![C64::new(0.0, 0.0); 4]; 4];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    let mut v = 0.0;
                    if b == d {
                        v += h[a][c];
                    }
                    if a == c {
                        v -= h[d][b];
                    }
                    l[2 * a + b][2 * c + d] = C64::new(0.0, -v);
                }
            }
        }
    }
    l
}

fn random_state(theta: f64, phi: f64, mix: f64) -> SystemState {
    // mixture of a pure state on the Bloch sphere and the identity
    let (c, s) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    let psi = [C64::new(c, 0.0), C64::from_polar(s, phi)];
    let mut rho = [[C64::new(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            rho[a][b] = psi[a] * psi[b].conj() * (1.0 - mix) + if a == b { C64::new(0.5 * mix, 0.0) } else { C64::new(0.0, 0.0) };
        }
    }
    SystemState::new(rho).unwrap()
}

#[test]
fn composed_propagator_matches_matrix_exponential() {
    for (omega, eps, dt, n) in [(1.0, 0.5, 0.2, 25usize), (1.1, 0.0, 0.1, 40), (0.3, -2.0, 0.05, 17)] {
        let p = SpinBosonParams::new(omega, eps);
        let step = free_propagator(&p, dt).unwrap();
        let mut total = step;
        for _ in 1..n {
            total = compose_superops(&step, &total);
        }
        let l: Vec<Vec<C64>> = liouvillian(omega, eps)
            .into_iter()
            .map(|r| r.into_iter().map(|z| z * (n as f64 * dt)).collect())
            .collect();
        let want = expm(&l);
        for i in 0..4 {
            for j in 0..4 {
                assert!((total[i][j] - want[i][j]).norm() < 1e-12, "({i},{j}) {} vs {}", total[i][j], want[i][j]);
            }
        }
    }
}

#[test]
fn trivial_propagators() {
    let id = free_propagator(&SpinBosonParams::new(0.0, 0.0), 0.3).unwrap();
    for (i, row) in id.iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            assert!((z - C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).norm() < 1e-15);
        }
    }
    // ε = 0 from ↑: ⟨σz⟩ = cos Ωt
    let omega = 1.3;
    let up = initial_state::<f64>(&InitialState::Up).unwrap();
    for t in [0.1, 1.0, 4.7] {
        let u = free_propagator(&SpinBosonParams::new(omega, 0.0), t).unwrap();
        let s = SystemState::from_vec(&apply_superop(&u, &up.to_vec()));
        assert!((s.sigma_z() - (omega * t).cos()).abs() < 1e-14);
    }
    assert!(free_propagator(&SpinBosonParams::new(1.0, 0.0), 0.0).is_err());
}

#[test]
fn initial_states() {
    let up = initial_state::<f64>(&InitialState::Up).unwrap();
    assert_eq!(up.sigma_z(), 1.0);
    let plus = initial_state::<f64>(&InitialState::Plus).unwrap();
    assert!((plus.sigma_x() - 1.0).abs() < 1e-15);
    let z = C64::new(0.0, 0.0);
    let custom = initial_state(&InitialState::Custom([[C64::new(0.3, 0.0), z], [z, C64::new(0.7, 0.0)]])).unwrap();
    assert!((custom.sigma_z() + 0.4).abs() < 1e-15);
    // trace 2 and a negative eigenvalue are both rejected
    assert!(initial_state(&InitialState::Custom([[C64::new(1.0, 0.0), z], [z, C64::new(1.0, 0.0)]])).is_err());
    assert!(initial_state(&InitialState::Custom([[C64::new(1.2, 0.0), z], [z, C64::new(-0.2, 0.0)]])).is_err());
    let h = C64::new(0.1, 0.2);
    assert!(initial_state(&InitialState::Custom([[C64::new(0.5, 0.0), h], [h, C64::new(0.5, 0.0)]])).is_err());
}

#[test]
fn dimer_mapping_examples() {
    let d = DimerParams {
        eps1: 0.2,
        eps2: 0.2,
        omega: 1.0,
        r1: 0.0,
        r2: 2.0 * PI,
    };
    let p = map_dimer_to_spin(&d);
    assert_eq!(p.eps, 0.0);
    assert_eq!(p.separation, Some(2.0 * PI));
    // J vanishes at the tunneling frequency when Ω = 2π/R
    let base = SpectralDensity::underdamped(UnderdampedParams::new(0.1 / PI, 1.0, 0.05).unwrap()).unwrap();
    let j = mapped_density(&d, base.clone()).unwrap();
    assert!(j.eval(2.0 * PI / p.separation.unwrap()).unwrap().abs() < 1e-14 * j.sampled_max(10000));
    let d2 = DimerParams { eps2: 0.7, ..d };
    assert!((map_dimer_to_spin(&d2).eps - 0.5).abs() < 1e-15);
}

proptest! {
    #[test]
    fn free_evolution_preserves_state_invariants(
        omega in -3.0f64..3.0,
        eps in -3.0f64..3.0,
        dt in 1e-3f64..5.0,
        theta in 0.0f64..PI,
        phi in 0.0f64..(2.0 * PI),
        mix in 0.0f64..1.0,
    ) {
        let rho = random_state(theta, phi, mix);
        let u = free_propagator(&SpinBosonParams::new(omega, eps), dt).unwrap();
        let out = SystemState::from_vec(&apply_superop(&u, &rho.to_vec()));
        prop_assert!((out.trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
        prop_assert!(out.hermiticity_defect() < 1e-12);
        prop_assert!((out.purity() - rho.purity()).abs() < 1e-12);
    }

    #[test]
    fn swapping_sites_flips_bias_only(
        e1 in -2.0f64..2.0, e2 in -2.0f64..2.0, omega in 0.0f64..2.0,
        r1 in -5.0f64..5.0, r2 in -5.0f64..5.0, w in 0.0f64..5.0,
    ) {
        prop_assume!((r1 - r2).abs() > 1e-3);
        let d = DimerParams { eps1: e1, eps2: e2, omega, r1, r2 };
        let s = DimerParams { eps1: e2, eps2: e1, omega, r1: r2, r2: r1 };
        let (p, q) = (map_dimer_to_spin(&d), map_dimer_to_spin(&s));
        prop_assert_eq!(p.eps, -q.eps);
        prop_assert_eq!(p.separation, q.separation);
        prop_assert_eq!(p.omega, q.omega);
        let base = SpectralDensity::underdamped(UnderdampedParams::new(0.05, 1.0, 0.1).unwrap()).unwrap();
        let (jd, js) = (mapped_density(&d, base.clone()).unwrap(), mapped_density(&s, base).unwrap());
        prop_assert_eq!(jd.eval(w).unwrap(), js.eval(w).unwrap());
    }
}
