//! Tensor primitives against naive loops and full decompositions.

use ndarray::Array2;
use ndarray_linalg::SVD;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structured_tempo::tensor::{contract, svd_truncate, sweep_compress, DenseTensor, MatrixProductState, SvdTruncation};
use structured_tempo::C64;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseTensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    DenseTensor::new(shape.to_vec(), data).unwrap()
}

fn reconstruct(u: &DenseTensor, s: &[f64], vd: &DenseTensor) -> Array2<C64> {
    let u = u.to_matrix().unwrap();
    let vd = vd.to_matrix().unwrap();
    let mut us = u.clone();
    for (mut col, &x) in us.columns_mut().into_iter().zip(s) {
        col.mapv_inplace(|z| z * x);
    }
    us.dot(&vd)
}

fn frob(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Random matrix with singular values `10^{-k/3}` so that truncation at
/// `1e-4` discards a substantial tail.
fn graded_matrix(rng: &mut ChaCha8Rng, n: usize) -> Array2<C64> {
    let a = random_tensor(rng, &[n, n]).to_matrix().unwrap();
    let b = random_tensor(rng, &[n, n]).to_matrix().unwrap();
    let (Some(u), _, _) = a.svd(true, false).unwrap() else { panic!() };
    let (_, _, Some(vt)) = b.svd(false, true).unwrap() else { panic!() };
    let mut us = u.clone();
    for (k, mut col) in us.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|z| z * 10f64.powf(-(k as f64) / 3.0));
    }
    us.dot(&vt)
}

#[test]
fn svd_discarded_weight_is_reconstruction_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for m in [graded_matrix(&mut rng, 32), random_tensor(&mut rng, &[32, 32]).to_matrix().unwrap()] {
        let t = DenseTensor::from_matrix(m.clone());
        let split = svd_truncate(&t, &SvdTruncation::new(1e-4, None).unwrap()).unwrap();
        let err = frob(&(&m - &reconstruct(&split.u, &split.s, &split.v_dagger)));
        assert!((err - split.discarded_weight).abs() < 1e-12, "{err} vs {}", split.discarded_weight);

        // Independent full decomposition: the discarded tail squared sums to
        // ‖m‖² minus the retained spectrum.
        let (_, s_full, _) = m.svd(false, false).unwrap();
        let keep = split.s.len();
        let tail = s_full.iter().skip(keep).map(|x| x * x).sum::<f64>().sqrt();
        assert!((tail - split.discarded_weight).abs() < 1e-12);
        assert!(s_full.iter().take(keep).all(|&x| x >= 1e-4 * s_full[0]));
        if keep < s_full.len() {
            assert!(s_full[keep] < 1e-4 * s_full[0]);
        }
    }
}

#[test]
fn max_bond_caps_retained_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = random_tensor(&mut rng, &[12, 9]);
    let split = svd_truncate(&t, &SvdTruncation::new(1e-14, Some(4)).unwrap()).unwrap();
    assert_eq!(split.s.len(), 4);
    assert_eq!(split.u.shape(), &[12, 4]);
    assert_eq!(split.v_dagger.shape(), &[4, 9]);
}

fn unravel(mut k: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for d in (0..shape.len()).rev() {
        idx[d] = k % shape[d];
        k /= shape[d];
    }
    idx
}

/// Elementwise sum over the contracted indices.
fn naive_contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> (Vec<usize>, Vec<C64>) {
    let free_a: Vec<usize> = (0..a.rank()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|j| !pairs.iter().any(|p| p.1 == *j)).collect();
    let inner: Vec<usize> = pairs.iter().map(|p| a.shape()[p.0]).collect();
    let mut shape: Vec<usize> = free_a.iter().map(|&i| a.shape()[i]).collect();
    shape.extend(free_b.iter().map(|&j| b.shape()[j]));
    let n_out: usize = shape.iter().product();
    let n_in: usize = inner.iter().product();
    let mut out = vec![C64::new(0.0, 0.0); n_out];
    for (o, slot) in out.iter_mut().enumerate() {
        let oi = unravel(o, &shape);
        for c in 0..n_in {
            let ci = unravel(c, &inner);
            let mut ia = vec![0; a.rank()];
            let mut ib = vec![0; b.rank()];
            for (k, &i) in free_a.iter().enumerate() {
                ia[i] = oi[k];
            }
            for (k, &j) in free_b.iter().enumerate() {
                ib[j] = oi[free_a.len() + k];
            }
            for (k, p) in pairs.iter().enumerate() {
                ia[p.0] = ci[k];
                ib[p.1] = ci[k];
            }
            *slot += a.get(&ia) * b.get(&ib);
        }
    }
    (shape, out)
}

#[test]
fn contract_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases: Vec<(Vec<usize>, Vec<usize>, Vec<(usize, usize)>)> = vec![
        (vec![3, 4, 5], vec![5, 2, 4], vec![(2, 0), (1, 2)]),
        (vec![2, 3], vec![3, 4], vec![(1, 0)]),
        (vec![4, 3, 2], vec![2, 3, 4], vec![(0, 2), (1, 1), (2, 0)]),
        (vec![2, 2], vec![3, 3], vec![]),
    ];
    for (sa, sb, pairs) in cases {
        let a = random_tensor(&mut rng, &sa);
        let b = random_tensor(&mut rng, &sb);
        let c = contract(&a, &b, &pairs).unwrap();
        let (shape, want) = naive_contract(&a, &b, &pairs);
        if !shape.is_empty() {
            assert_eq!(c.shape(), &shape[..]);
        }
        for (x, y) in c.data().iter().zip(&want) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}

#[test]
fn contract_rejects_mismatched_extents() {
    let a = DenseTensor::zeros(&[2, 3]);
    let b = DenseTensor::zeros(&[4, 2]);
    assert!(contract(&a, &b, &[(1, 0)]).is_err());
    assert!(contract(&a, &b, &[(2, 0)]).is_err());
    assert!(contract(&a, &b, &[(0, 1), (0, 1)]).is_err());
}

fn random_mps(rng: &mut ChaCha8Rng, sites: usize, d: usize, bond: usize) -> MatrixProductState {
    let cores = (0..sites)
        .map(|k| {
            let l = if k == 0 { 1 } else { bond };
            let r = if k == sites - 1 { 1 } else { bond };
            random_tensor(rng, &[l, d, r])
        })
        .collect();
    MatrixProductState::new(cores).unwrap()
}

/// Full contraction by explicit matrix products per physical configuration.
fn brute_force(mps: &MatrixProductState) -> Vec<C64> {
    let ext = mps.physical_extents();
    let n: usize = ext.iter().product();
    (0..n)
        .map(|c| {
            let idx = unravel(c, &ext);
            let mut v = vec![C64::new(1.0, 0.0)];
            for (k, core) in mps.cores().iter().enumerate() {
                let (_, _, dr) = core.dim();
                v = (0..dr)
                    .map(|r| v.iter().enumerate().map(|(l, x)| x * core[[l, idx[k], r]]).sum())
                    .collect();
            }
            v[0]
        })
        .collect()
}

#[test]
fn sweep_preserves_full_contraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mps = random_mps(&mut rng, 6, 3, 5);
    let before = brute_force(&mps);
    assert_eq!(mps.contract_full().data().len(), before.len());
    for (x, y) in mps.contract_full().data().iter().zip(&before) {
        assert!((x - y).norm() < 1e-12);
    }
    let (out, discarded) = sweep_compress(mps, &SvdTruncation::new(1e-8, None).unwrap()).unwrap();
    let after = brute_force(&out);
    for (x, y) in after.iter().zip(&before) {
        assert!((x - y).norm() < 1e-6, "{x} vs {y}");
    }
    assert!(discarded < 1e-6);
    // Bond extents cannot exceed the exact Schmidt ranks 3, 9, 27.
    let ranks = [3, 9, 27, 9, 3];
    for (b, r) in out.bond_extents().iter().zip(ranks) {
        assert!(*b <= r.min(5));
    }
}

#[test]
fn sweep_compresses_redundant_bonds() {
    // A product state padded to bond 4 with a rank-one repetition compresses
    // to bond 1.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vecs: Vec<Vec<C64>> = (0..5)
        .map(|_| (0..2).map(|_| C64::new(rng.gen_range(-1.0..1.0), 0.3)).collect())
        .collect();
    let cores = vecs
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let l = if k == 0 { 1 } else { 4 };
            let r = if k == 4 { 1 } else { 4 };
            let mut data = Vec::with_capacity(l * 2 * r);
            for _ in 0..l {
                for x in v {
                    for _ in 0..r {
                        data.push(*x / 4.0f64.sqrt().powi(if k == 0 || k == 4 { 1 } else { 2 }));
                    }
                }
            }
            DenseTensor::new(vec![l, 2, r], data).unwrap()
        })
        .collect();
    let padded = MatrixProductState::new(cores).unwrap();
    let want = MatrixProductState::product(&vecs).unwrap().contract_raw();
    let (out, _) = sweep_compress(padded.clone(), &SvdTruncation::new(1e-10, None).unwrap()).unwrap();
    assert_eq!(out.max_bond(), 1);
    for ((x, y), z) in padded.contract_raw().iter().zip(&out.contract_raw()).zip(&want) {
        assert!((x - z).norm() < 1e-12);
        assert!((y - z).norm() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sweep_is_idempotent(seed in any::<u64>(), chi in 1e-6f64..1e-2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunc = SvdTruncation::new(chi, None).unwrap();
        let (once, _) = sweep_compress(random_mps(&mut rng, 5, 2, 4), &trunc).unwrap();
        let (twice, _) = sweep_compress(once.clone(), &trunc).unwrap();
        prop_assert_eq!(once.bond_extents(), twice.bond_extents());
        let a = once.contract_raw();
        let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (x, y) in a.iter().zip(&twice.contract_raw()) {
            prop_assert!((x - y).norm() < 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn lossless_split_reconstructs(seed in any::<u64>(), rows in 1usize..9, cols in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tensor(&mut rng, &[rows, cols]);
        let split = svd_truncate(&t, &SvdTruncation::lossless()).unwrap();
        let err = frob(&(&t.to_matrix().unwrap() - &reconstruct(&split.u, &split.s, &split.v_dagger)));
        prop_assert!(err < 1e-12 * t.frobenius_norm().max(1.0));
        prop_assert!(split.discarded_weight < 1e-12);
        prop_assert!(split.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn truncation_is_idempotent(seed in any::<u64>(), chi in 1e-3f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = DenseTensor::from_matrix(graded_matrix(&mut rng, 10));
        let trunc = SvdTruncation::new(chi, None).unwrap();
        let first = svd_truncate(&t, &trunc).unwrap();
        let approx = DenseTensor::from_matrix(reconstruct(&first.u, &first.s, &first.v_dagger));
        let second = svd_truncate(&approx, &trunc).unwrap();
        prop_assert_eq!(second.s.len(), first.s.len());
        prop_assert!(second.discarded_weight < 1e-10 * t.frobenius_norm());
    }

    #[test]
    fn discarded_weight_is_monotone_in_chi(seed in any::<u64>(), a in 1e-6f64..1e-1, b in 1e-6f64..1e-1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = DenseTensor::from_matrix(graded_matrix(&mut rng, 12));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let wl = svd_truncate(&t, &SvdTruncation::new(lo, None).unwrap()).unwrap();
        let wh = svd_truncate(&t, &SvdTruncation::new(hi, None).unwrap()).unwrap();
        prop_assert!(wl.discarded_weight <= wh.discarded_weight + 1e-15);
        prop_assert!(wl.s.len() >= wh.s.len());
    }

    #[test]
    fn contract_is_bilinear(seed in any::<u64>(), re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = random_tensor(&mut rng, &[3, 4]);
        let a2 = random_tensor(&mut rng, &[3, 4]);
        let b = random_tensor(&mut rng, &[4, 2]);
        let c = C64::new(re, im);
        let sum = DenseTensor::from_array(a1.array() + &a2.scaled(c).array().view());
        let lhs = contract(&sum, &b, &[(1, 0)]).unwrap();
        let r1 = contract(&a1, &b, &[(1, 0)]).unwrap();
        let r2 = contract(&a2, &b, &[(1, 0)]).unwrap();
        for ((x, y), z) in lhs.data().iter().zip(r1.data()).zip(r2.data()) {
            prop_assert!((x - (y + c * z)).norm() < 1e-12);
        }
    }
}
