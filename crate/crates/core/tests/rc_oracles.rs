//! Reaction-coordinate solver against independent constructions.

use std::f64::consts::PI;

use ndarray::{Array2, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structured_tempo::model::{initial_state, InitialState};
use structured_tempo::rc::{
    build_rate_operators, build_rc_hamiltonian, converge_truncation, evolve_master_equation, rc_map,
    thermal_truncation_estimate, OdeOptions, RCModel, TRUNCATION_POPULATION,
};
use structured_tempo::{SpinBosonParams, UnderdampedParams, C64};

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|v| v.conj())
}

fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn fig2_model(omega0: f64, temperature: f64, n: usize) -> RCModel {
    let u = UnderdampedParams::new(0.05 / PI, omega0, 0.05).unwrap();
    RCModel::from_underdamped(&u, SpinBosonParams::new(1.0, 0.5), temperature, n).unwrap()
}

/// Element-by-element `(Ω/2)σx + (ε/2)σz + λσz(c + c†) + Ω_RC c†c`, index
/// `a·n + f`.
fn hamiltonian_by_elements(m: &RCModel) -> Array2<C64> {
    let n = m.n_trunc;
    let (om, eps) = (m.system.omega, m.system.eps);
    let sys = [[0.5 * eps, 0.5 * om], [0.5 * om, -0.5 * eps]];
    let sz = [1.0, -1.0];
    Array2::from_shape_fn((2 * n, 2 * n), |(i, j)| {
        let (a, f) = (i / n, i % n);
        let (b, g) = (j / n, j % n);
        let mut v = if f == g { sys[a][b] } else { 0.0 };
        if a == b {
            if g == f + 1 {
                v += m.lambda * sz[a] * (g as f64).sqrt();
            }
            if f == g + 1 {
                v += m.lambda * sz[a] * (f as f64).sqrt();
            }
            if f == g {
                v += m.omega_rc * f as f64;
            }
        }
        c(v)
    })
}

/// Eigenpairs with residual check; `Eigh` needs column-major input for
/// complex matrices.
fn eigh(h: &Array2<C64>) -> (ndarray::Array1<f64>, Array2<C64>) {
    let mut f = Array2::zeros(h.dim().f());
    f.assign(h);
    let (e, v) = f.eigh(UPLO::Upper).unwrap();
    let residual = h.dot(&v) - &v * &e.mapv(c).insert_axis(ndarray::Axis(0));
    assert!(max_abs(&residual) < 1e-10 * (1.0 + max_abs(h)));
    (e, v)
}

fn position(n: usize) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |(f, g)| {
        if g == f + 1 {
            c((g as f64).sqrt())
        } else if f == g + 1 {
            c((f as f64).sqrt())
        } else {
            c(0.0)
        }
    })
}

/// Double sum over eigenpairs, one outer product per term.
fn rate_operators_by_double_sum(h: &Array2<C64>, m: &RCModel) -> (Array2<C64>, Array2<C64>) {
    let n = m.n_trunc;
    let d = 2 * n;
    let x = position(n);
    let cop = Array2::from_shape_fn((d, d), |(i, j)| if i / n == j / n { x[[i % n, j % n]] } else { c(0.0) });
    let (e, v) = eigh(&h);
    let (g, t) = (m.gamma_res, m.temperature);
    let mut chi = Array2::zeros((d, d));
    let mut xi = Array2::zeros((d, d));
    for j in 0..d {
        for k in 0..d {
            let w = e[j] - e[k];
            let phi_j = v.column(j);
            let phi_k = v.column(k);
            let mut cjk = c(0.0);
            for p in 0..d {
                for q in 0..d {
                    cjk += phi_j[p].conj() * cop[[p, q]] * phi_k[q];
                }
            }
            let rate = if t == 0.0 {
                g * w.abs()
            } else if w.abs() < 1e-12 {
                2.0 * g * t
            } else {
                g * w / (w / (2.0 * t)).tanh()
            };
            for p in 0..d {
                for q in 0..d {
                    let outer = phi_j[p] * phi_k[q].conj() * cjk;
                    chi[[p, q]] += outer * (0.5 * PI * rate);
                    xi[[p, q]] += outer * (0.5 * PI * g * w);
                }
            }
        }
    }
    (chi, xi)
}

fn expm_hermitian(a: &Array2<C64>, scale: C64) -> Array2<C64> {
    let (e, v) = eigh(&a);
    let d = Array2::from_diag(&e.mapv(|x| (scale * x).exp()));
    v.dot(&d).dot(&dagger(&v))
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> Array2<C64> {
    let a = Array2::from_shape_simple_fn((n, n), || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    (&a + &dagger(&a)).mapv(|v| v * 0.5)
}

fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    Array2::from_shape_fn((ra * rb, ca * cb), |(i, j)| a[[i / rb, j / cb]] * b[[i % rb, j % cb]])
}

#[test]
fn mapping_constants() {
    let (l, w, g) = rc_map(&UnderdampedParams::new(0.05 / PI, 1.0, 0.05).unwrap());
    assert!((l - 0.15811).abs() < 1e-5);
    assert_eq!(w, 1.0);
    assert!((g - 7.9577e-3).abs() < 1e-7);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let omega0 = rng.gen_range(0.1..5.0);
        let u = UnderdampedParams::new(rng.gen_range(0.001..0.1), omega0, rng.gen_range(0.01..1.0)).unwrap();
        assert_eq!(rc_map(&u).1, omega0);
    }
}

#[test]
fn hamiltonian_matches_elementwise_builder() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2, 3, 7] {
        let m = RCModel {
            lambda: rng.gen_range(0.0..1.0),
            omega_rc: rng.gen_range(0.2..2.0),
            gamma_res: 0.01,
            n_trunc: n,
            system: SpinBosonParams::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            temperature: 1.0,
        };
        let h = build_rc_hamiltonian(&m);
        assert!(max_abs(&(&h - &hamiltonian_by_elements(&m))) < 1e-14);
        assert!(max_abs(&(&h - &dagger(&h))) < 1e-15);
    }
}

#[test]
fn two_level_cutoff_eigenvalues() {
    // Ω = ε = 0, n = 2: each σz block is [[0, ±λ], [±λ, Ω_RC]].
    let (lambda, w) = (0.37, 1.3);
    let m = RCModel {
        lambda,
        omega_rc: w,
        gamma_res: 0.0,
        n_trunc: 2,
        system: SpinBosonParams::new(0.0, 0.0),
        temperature: 0.0,
    };
    let (e, _) = eigh(&build_rc_hamiltonian(&m));
    let r = (0.25 * w * w + lambda * lambda).sqrt();
    let expect = [0.5 * w - r, 0.5 * w - r, 0.5 * w + r, 0.5 * w + r];
    for (a, b) in e.iter().zip(expect) {
        assert!((a - b).abs() < 1e-14, "{e} vs {expect:?}");
    }
}

#[test]
fn decoupled_spectrum_is_tls_plus_ladder() {
    let n = 6;
    let m = RCModel {
        lambda: 0.0,
        omega_rc: 0.8,
        gamma_res: 0.02,
        n_trunc: n,
        system: SpinBosonParams::new(1.0, 0.5),
        temperature: 0.7,
    };
    let (e, _) = eigh(&build_rc_hamiltonian(&m));
    let half_gap = 0.5 * (1.0f64 + 0.25).sqrt();
    let mut expect: Vec<f64> = (0..n).flat_map(|k| [-half_gap + 0.8 * k as f64, half_gap + 0.8 * k as f64]).collect();
    expect.sort_by(f64::total_cmp);
    for (a, b) in e.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-13);
    }

    let ops = build_rate_operators(&build_rc_hamiltonian(&m), &m).unwrap();
    for op in [&ops.chi_op, &ops.xi_op] {
        let scale = max_abs(op);
        assert!(scale > 0.0);
        for ((i, j), v) in op.indexed_iter() {
            if (i % n).abs_diff(j % n) != 1 {
                assert!(v.norm() < 1e-12 * scale, "({i}, {j}) = {v}");
            }
        }
    }
}

#[test]
fn rate_operators_match_double_sum() {
    for t in [1.0, 0.3, 0.0] {
        let m = fig2_model(1.0, t, 6);
        let h = build_rc_hamiltonian(&m);
        let ops = build_rate_operators(&h, &m).unwrap();
        let (chi, xi) = rate_operators_by_double_sum(&h, &m);
        assert!(max_abs(&(&ops.chi_op - &chi)) < 1e-12 * max_abs(&chi), "T = {t}");
        assert!(max_abs(&(&ops.xi_op - &xi)) < 1e-12 * max_abs(&xi), "T = {t}");
    }
}

#[test]
fn zero_temperature_upward_rates() {
    let m = fig2_model(0.5, 0.0, 5);
    let h = build_rc_hamiltonian(&m);
    let ops = build_rate_operators(&h, &m).unwrap();
    let (e, v) = eigh(&h);
    let vd = dagger(&v);
    let n = m.n_trunc;
    let cop = kron(&Array2::eye(2), &position(n));
    let cjk = vd.dot(&cop).dot(&v);
    let chi = vd.dot(&ops.chi_op).dot(&v);
    let xi = vd.dot(&ops.xi_op).dot(&v);
    let tol = 1e-12 * max_abs(&chi);
    for j in 0..2 * n {
        for k in 0..2 * n {
            let w = e[j] - e[k];
            let expect = cjk[[j, k]] * (0.5 * PI * m.gamma_res * w);
            if w > 1e-9 {
                assert!((chi[[j, k]] - expect).norm() < tol);
            }
            assert!((xi[[j, k]] - expect).norm() < tol);
        }
    }
}

#[test]
fn rate_operators_are_basis_covariant() {
    // Unitaries of the form V_TLS ⊗ exp(iθ(c + c†)) commute with C.
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let m = fig2_model(0.5, 1.0, 6);
    let n = m.n_trunc;
    let h = build_rc_hamiltonian(&m);
    let ops = build_rate_operators(&h, &m).unwrap();
    for _ in 0..3 {
        let v = expm_hermitian(&random_hermitian(&mut rng, 2), C64::new(0.0, 1.0));
        let w = expm_hermitian(&position(n), C64::new(0.0, rng.gen_range(-1.0..1.0)));
        let u = kron(&v, &w);
        let ud = dagger(&u);
        let rotated = build_rate_operators(&u.dot(&h).dot(&ud), &m).unwrap();
        let chi_back = ud.dot(&rotated.chi_op).dot(&u);
        let xi_back = ud.dot(&rotated.xi_op).dot(&u);
        let err = max_abs(&(&chi_back - &ops.chi_op)) / max_abs(&ops.chi_op);
        assert!(err < 1e-9, "{err}");
        assert!(max_abs(&(&xi_back - &ops.xi_op)) < 1e-9 * max_abs(&ops.xi_op));
    }
}

#[test]
fn no_residual_bath_is_unitary_joint_evolution() {
    let n = 12;
    let plus = initial_state(&InitialState::Plus).unwrap();
    for t in [0.0, 0.5] {
        let m = RCModel {
            lambda: 0.4,
            omega_rc: 1.0,
            gamma_res: 0.0,
            n_trunc: n,
            system: SpinBosonParams::new(1.0, 0.5),
            temperature: t,
        };
        let h = build_rc_hamiltonian(&m);
        let sys = Array2::from_shape_fn((2, 2), |(a, b)| plus.rho[a][b]);
        let bath = Array2::from_shape_fn((n, n), |(f, g)| {
            if f != g {
                c(0.0)
            } else if t == 0.0 {
                c(if f == 0 { 1.0 } else { 0.0 })
            } else {
                let z: f64 = (0..n).map(|k| (-(k as f64) / t).exp()).sum();
                c((-(f as f64) / t).exp() / z)
            }
        });
        let rho0 = kron(&sys, &bath);
        let purity0 = rho0.dot(&rho0).diag().iter().map(|v| v.re).sum::<f64>();
        let run = evolve_master_equation(&m, &plus, 20.0, 1.0, &OdeOptions::default()).unwrap();
        for (time, state) in run.trajectory.times.iter().zip(&run.trajectory.states) {
            let u = expm_hermitian(&h, C64::new(0.0, -time));
            let rho = u.dot(&rho0).dot(&dagger(&u));
            let purity = rho.dot(&rho).diag().iter().map(|v| v.re).sum::<f64>();
            assert!((purity - purity0).abs() < 1e-12);
            for a in 0..2 {
                for b in 0..2 {
                    let exact: C64 = (0..n).map(|f| rho[[a * n + f, b * n + f]]).sum();
                    assert!((state.rho[a][b] - exact).norm() < 1e-7, "T = {t}, t = {time}");
                }
            }
        }
    }
}

#[test]
fn fig2_trajectory_invariants_and_doubling() {
    let up = initial_state(&InitialState::Up).unwrap();
    let n = thermal_truncation_estimate(1.0, 1.0, TRUNCATION_POPULATION, 4);
    let opts = OdeOptions::default();
    let run = evolve_master_equation(&fig2_model(1.0, 1.0, n), &up, 60.0, 0.2, &opts).unwrap();
    assert!(run.truncation_ok());
    assert!(run.trajectory.max_trace_defect() < 1e-8);
    assert!(run.trajectory.max_hermiticity_defect() < 1e-8);
    let doubled = evolve_master_equation(&fig2_model(1.0, 1.0, 2 * n), &up, 60.0, 0.2, &opts).unwrap();
    let change = run.trajectory.sigma_z_sup_distance(&doubled.trajectory).unwrap();
    assert!(change < 1e-3, "{change}");
}

#[test]
fn converged_truncation_grows_with_mode_occupation() {
    let up = initial_state(&InitialState::Up).unwrap();
    let opts = OdeOptions::default();
    let converged = |omega0: f64, t: f64| {
        converge_truncation(&fig2_model(omega0, t, 4), &up, 30.0, 0.2, &opts, 8, 1e-3, 200)
            .unwrap()
            .n_trunc
    };
    let by_frequency: Vec<usize> = [1.0, 0.5, 0.25].iter().map(|&w| converged(w, 1.0)).collect();
    assert!(by_frequency.windows(2).all(|p| p[0] < p[1]), "{by_frequency:?}");
    let cold = converged(1.0, 0.5);
    assert!(cold < by_frequency[0], "{cold} vs {}", by_frequency[0]);
}
