//! Time-evolving matrix product operator (TEMPO) propagation.
//!
//! The augmented density tensor (ADT) holds one site per elapsed time window
//! `[t_{k−1}, t_k]`; the physical index of site `k` is the vectorized path
//! variable `j_k = (s⁺_k, s⁻_k)` the system occupies during that window. One
//! step of length Δt is split symmetrically as
//!
//! ```text
//! U(Δt/2) · I_k · U(Δt/2)
//! ```
//!
//! where `I_k` is the influence of window `k` on itself and on every earlier
//! window. Adjacent half steps merge into full steps, and the trailing half
//! step is applied when the density matrix is read out.
//!
//! The influence of window `n` on window `k` depends on `j_n` only through
//! `s⁺_n − s⁻_n ∈ {0, 2, −2}`, so the operator that adds window `n` is a
//! matrix product operator of bond extent 3 whose bond carries that
//! difference through the history.
//!
//! # Storage
//!
//! The ADT is invariant under swapping `s⁺ ↔ s⁻` on every site together with
//! complex conjugation. Each physical index is therefore stored in the basis
//! [`hermitian_basis`], in which that invariance makes every core real, and
//! the carry bond in the basis [`carry_basis`]. Coordinates are exact: no
//! information is lost relative to the path basis.
//!
//! Adding a window is a single left-to-right pass that applies the operator
//! site by site and refactors with a randomized range finder, followed by a
//! right-to-left pass of truncated SVDs. Both passes keep the vector that
//! sums every history index inside the retained subspace, so truncation
//! never changes the trace of the read-out density matrix.

use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use ndarray_linalg::{Norm, QR};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{self, path_variables, SpinBosonParams, Superop, SystemState};
use crate::quadrature::QuadratureOptions;
use crate::spectral::{influence_coefficients, BathSpec, InfluenceCoefficients};
use crate::tensor::{absorb_left, absorb_right, svd_truncate_matrix, MatrixProductState, SvdTruncation};
use crate::trajectory::Trajectory;
use crate::{Error, Result, C64};

/// Readout trace tolerance.
pub const TRACE_TOLERANCE: f64 = 1e-6;

/// Largest imaginary part tolerated when a real coordinate is extracted.
const REALITY_TOLERANCE: f64 = 1e-12;

/// Range-finder residual, relative to `chi · ‖block‖_F`.
const ZIP_TOLERANCE: f64 = 0.1;

/// A functional is added to a truncated subspace only if the value it would
/// lose exceeds this many units of roundoff.
const AUGMENT_FLOOR: f64 = 1e3;

/// Blocks with fewer rows or columns than this are factored by a full SVD.
const DIRECT_FACTOR_LIMIT: usize = 48;

/// Number of distinct values of `s⁺ − s⁻`.
const CARRY: usize = 3;


/// Class of `s⁺ − s⁻` for vectorized index `j`: 0, +2 or −2.
fn carry_class(j: usize) -> usize {
    match path_variables(j) {
        (a, b) if a == b => 0,
        (1, -1) => 1,
        _ => 2,
    }
}

/// A representative `j` of each carry class.
const CARRY_REPRESENTATIVE: [usize; CARRY] = [0, 1, 2];

/// `T[j][r]`: component `j` of basis vector `r`. The vectors are `|↑↑⟩`,
/// `|↓↓⟩`, `(|↑↓⟩ + |↓↑⟩)/√2` and `i(|↑↓⟩ − |↓↑⟩)/√2`; Hermitian matrices
/// have real coordinates.
pub fn hermitian_basis() -> [[C64; 4]; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    [
        [one, z, z, z],
        [z, z, C64::new(h, 0.0), C64::new(0.0, h)],
        [z, z, C64::new(h, 0.0), C64::new(0.0, -h)],
        [z, one, z, z],
    ]
}

/// `V[x][c]`: the carry bond basis. Class 0 is kept; the ±2 pair is mixed
/// into its symmetric and antisymmetric combinations.
pub fn carry_basis() -> [[C64; CARRY]; CARRY] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    [
        [C64::new(1.0, 0.0), z, z],
        [z, C64::new(h, 0.0), C64::new(h, 0.0)],
        [z, C64::new(0.0, h), C64::new(0.0, -h)],
    ]
}

/// Coordinates of the functional `Σ_j v_j` (summing a history index).
const HISTORY_SUM: [f64; 4] = [1.0, 1.0, std::f64::consts::SQRT_2, 0.0];

/// Coordinates of the trace functional `v_{↑↑} + v_{↓↓}`.
const TRACE_SUM: [f64; 4] = [1.0, 1.0, 0.0, 0.0];

/// Left boundary of the carry bond on the oldest site, in the carry basis.
const CARRY_TERMINATION: [f64; CARRY] = [1.0, std::f64::consts::SQRT_2, 0.0];

fn real_part(z: C64, what: &str) -> Result<f64> {
    if z.im.abs() > REALITY_TOLERANCE * z.re.abs().max(1.0) {
        return Err(Error::Consistency(format!("{what} has imaginary part {:e}", z.im)));
    }
    Ok(z.re)
}

/// Real coordinates of a vectorized Hermitian matrix.
pub fn to_hermitian_coords(v: &[C64; 4]) -> Result<[f64; 4]> {
    let t = hermitian_basis();
    let mut x = [0.0; 4];
    for (r, xr) in x.iter_mut().enumerate() {
        let z: C64 = (0..4).map(|j| t[j][r].conj() * v[j]).sum();
        *xr = real_part(z, "coordinate")?;
    }
    Ok(x)
}

pub fn from_hermitian_coords(x: &[f64; 4]) -> [C64; 4] {
    let t = hermitian_basis();
    let mut v = [C64::new(0.0, 0.0); 4];
    for (j, vj) in v.iter_mut().enumerate() {
        *vj = (0..4).map(|r| t[j][r] * x[r]).sum();
    }
    v
}

/// `T† · diag(d) · T`.
fn rotate_diagonal(d: &[C64; 4]) -> [[C64; 4]; 4] {
    let t = hermitian_basis();
    let mut out = [[C64::new(0.0, 0.0); 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (q, x) in row.iter_mut().enumerate() {
            *x = (0..4).map(|j| t[j][r].conj() * d[j] * t[j][q]).sum();
        }
    }
    out
}

/// `ops[x][y][r][r']`: the influence operator of one history site, with
/// left carry `x`, right carry `y`, output coordinate `r` and input `r'`.
type LagOperator = [[[[f64; 4]; 4]; CARRY]; CARRY];

fn lag_operator(gate: Option<&[[C64; 4]; 4]>) -> Result<LagOperator> {
    let v = carry_basis();
    let rotated: Vec<[[C64; 4]; 4]> = (0..CARRY)
        .map(|c| {
            let mut d = [C64::new(1.0, 0.0); 4];
            if let Some(g) = gate {
                d = g[CARRY_REPRESENTATIVE[c]];
            }
            rotate_diagonal(&d)
        })
        .collect();
    let mut out = [[[[0.0; 4]; 4]; CARRY]; CARRY];
    for x in 0..CARRY {
        for y in 0..CARRY {
            for r in 0..4 {
                for q in 0..4 {
                    let z: C64 = (0..CARRY).map(|c| v[x][c] * v[y][c].conj() * rotated[c][r][q]).sum();
                    out[x][y][r][q] = real_part(z, "influence operator")?;
                }
            }
        }
    }
    Ok(out)
}

/// `copy[r][r'][g]`: duplicates the newest index onto a new bond `g`.
fn copy_tensor() -> Result<[[[f64; 4]; 4]; 4]> {
    let t = hermitian_basis();
    let mut out = [[[0.0; 4]; 4]; 4];
    for r in 0..4 {
        for q in 0..4 {
            for g in 0..4 {
                let z: C64 = (0..4).map(|j| t[j][r].conj() * t[j][g].conj() * t[j][q]).sum();
                out[r][q][g] = real_part(z, "copy tensor")?;
            }
        }
    }
    Ok(out)
}

/// `site[g][x][r]`: the newest window, with bond `g` to the previous
/// window's index, carry `x` and physical coordinate `r`.
fn new_site(gates: &InfluenceGates) -> Result<[[[f64; 4]; CARRY]; 4]> {
    let t = hermitian_basis();
    let v = carry_basis();
    let mut out = [[[0.0; 4]; CARRY]; 4];
    for (g, block) in out.iter_mut().enumerate() {
        for (x, row) in block.iter_mut().enumerate() {
            for (r, entry) in row.iter_mut().enumerate() {
                let mut z = C64::new(0.0, 0.0);
                for gamma in 0..4 {
                    for j in 0..4 {
                        z += t[gamma][g]
                            * v[x][carry_class(j)]
                            * t[j][r].conj()
                            * gates.full_step[j][gamma]
                            * gates.self_gate[j];
                    }
                }
                *entry = real_part(z, "new site")?;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TempoConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub truncation: SvdTruncation,
    /// Number of retained lags; `None` keeps the whole history.
    pub memory_cutoff: Option<usize>,
    /// Largest admissible bond extent; exceeding it is a resource error.
    pub bond_budget: Option<usize>,
    pub quadrature: QuadratureOptions<f64>,
}

impl TempoConfig {
    pub fn new(dt: f64, n_steps: usize, chi: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            n_steps,
            truncation: SvdTruncation::new(chi, None)?,
            memory_cutoff: None,
            bond_budget: None,
            quadrature: QuadratureOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Validation(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::Validation("n_steps must be ≥ 1".into()));
        }
        if self.memory_cutoff == Some(0) {
            return Err(Error::Validation("memory_cutoff must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Influence factors and free propagators for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceGates {
    /// Self-interaction factor of a window, indexed by its `j`.
    pub self_gate: [C64; 4],
    /// `lag_gates[m − 1][j_new][j_old]` for lags `m ≥ 1`.
    pub lag_gates: Vec<[[C64; 4]; 4]>,
    pub half_step: Superop<f64>,
    pub full_step: Superop<f64>,
    pub dt: f64,
}

/// `exp[−(s⁺_n − s⁻_n)(η s⁺_k − η* s⁻_k)]`.
pub fn influence_factor(eta: C64, j_new: usize, j_old: usize) -> C64 {
    let (sp, sm) = path_variables(j_new);
    let (op, om) = path_variables(j_old);
    let diff = (sp - sm) as f64;
    (-(eta * op as f64 - eta.conj() * om as f64) * diff).exp()
}

pub fn build_gates(eta: &InfluenceCoefficients<f64>, p: &SpinBosonParams<f64>) -> Result<InfluenceGates> {
    p.validate()?;
    let dt = eta.dt;
    let mut self_gate = [C64::new(0.0, 0.0); 4];
    for (j, g) in self_gate.iter_mut().enumerate() {
        *g = influence_factor(eta.eta_diag, j, j);
    }
    let lag_gates = eta
        .eta_offdiag
        .iter()
        .map(|&e| {
            let mut g = [[C64::new(0.0, 0.0); 4]; 4];
            for (jn, row) in g.iter_mut().enumerate() {
                for (jo, x) in row.iter_mut().enumerate() {
                    *x = influence_factor(e, jn, jo);
                }
            }
            g
        })
        .collect();
    Ok(InfluenceGates {
        self_gate,
        lag_gates,
        half_step: model::free_propagator(p, 0.5 * dt)?,
        full_step: model::free_propagator(p, dt)?,
        dt,
    })
}

impl InfluenceGates {
    /// Largest modulus over all influence factors.
    pub fn max_modulus(&self) -> f64 {
        let lag = self
            .lag_gates
            .iter()
            .flat_map(|g| g.iter().flatten())
            .map(|z| z.norm());
        self.self_gate.iter().map(|z| z.norm()).chain(lag).fold(0.0, f64::max)
    }

    fn lag_gate(&self, lag: usize) -> Option<&[[C64; 4]; 4]> {
        self.lag_gates.get(lag - 1)
    }
}

/// The TEMPO state: an MPS over the history of path variables, in real
/// coordinates (see the module documentation).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDensityTensor {
    mps: MatrixProductState<f64>,
    current_step: usize,
    /// Window index of the oldest retained site.
    first_window: usize,
    /// Map applied to the newest index on readout.
    closing: Superop<f64>,
    discarded_weight: f64,
}

impl AugmentedDensityTensor {
    /// Fails unless `rho0` is Hermitian.
    pub fn new(rho0: &SystemState<f64>) -> Result<Self> {
        let x = to_hermitian_coords(&rho0.to_vec())
            .map_err(|_| Error::Validation("initial state must be Hermitian".into()))?;
        let mut identity = [[C64::new(0.0, 0.0); 4]; 4];
        for (i, row) in identity.iter_mut().enumerate() {
            row[i] = C64::new(1.0, 0.0);
        }
        Ok(Self {
            mps: MatrixProductState::product(&[x.to_vec()])?,
            current_step: 0,
            first_window: 0,
            closing: identity,
            discarded_weight: 0.0,
        })
    }

    pub fn current_step(&self) -> usize {
        self.current_step
    }

    /// The cores in [`hermitian_basis`] coordinates.
    pub fn mps(&self) -> &MatrixProductState<f64> {
        &self.mps
    }

    /// The same tensor with physical indices in the path basis `j`.
    pub fn path_basis_mps(&self) -> MatrixProductState<C64> {
        let t = hermitian_basis();
        let cores = self
            .mps
            .cores()
            .iter()
            .map(|core| {
                let (dl, _, dr) = core.dim();
                Array3::from_shape_fn((dl, 4, dr), |(a, j, b)| {
                    (0..4).map(|r| t[j][r] * core[[a, r, b]]).sum::<C64>()
                })
            })
            .collect();
        MatrixProductState::from_cores(cores).expect("bond extents unchanged")
    }

    pub fn max_bond(&self) -> usize {
        self.mps.max_bond()
    }

    /// Discarded weight accumulated over all steps so far.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }
}

/// Advances the ADT by one time step.
pub fn propagate(
    adt: AugmentedDensityTensor,
    gates: &InfluenceGates,
    cfg: &TempoConfig,
) -> Result<AugmentedDensityTensor> {
    if adt.current_step >= cfg.n_steps {
        return Err(Error::Domain(format!(
            "ADT already at step {} of {}",
            adt.current_step, cfg.n_steps
        )));
    }
    if (gates.dt - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::Validation(format!(
            "gates built for dt = {} but config has dt = {}",
            gates.dt, cfg.dt
        )));
    }
    if adt.current_step == 0 {
        return first_step(adt, gates);
    }

    let AugmentedDensityTensor {
        mps,
        current_step,
        mut first_window,
        discarded_weight,
        ..
    } = adt;
    let new_window = current_step + 1;
    let mut cores = mps.into_cores();

    if let Some(k) = cfg.memory_cutoff {
        // keep windows whose lag to the new window is at most k
        while new_window - first_window > k && cores.len() > 1 {
            let oldest = cores.remove(0);
            let summed = contract_physical(&oldest, &HISTORY_SUM);
            cores[0] = absorb_left(&summed, &cores[0]);
            first_window += 1;
        }
    }

    let lags: Vec<usize> = (0..cores.len()).map(|i| new_window - (first_window + i)).collect();
    let (cores, zip_error) = zip_up(cores, &lags, gates, cfg.truncation.chi_rel, new_window)?;
    let (cores, svd_error) = truncate_right_to_left(cores, &cfg.truncation)?;
    let mps = MatrixProductState::from_cores(cores)?;

    let extent = mps.max_bond();
    if let Some(budget) = cfg.bond_budget {
        if extent > budget {
            return Err(Error::Resource {
                step: new_window,
                extent,
                budget,
            });
        }
    }
    Ok(AugmentedDensityTensor {
        mps,
        current_step: new_window,
        first_window,
        closing: gates.half_step,
        discarded_weight: discarded_weight + zip_error + svd_error,
    })
}

fn first_step(adt: AugmentedDensityTensor, gates: &InfluenceGates) -> Result<AugmentedDensityTensor> {
    let x0: Vec<f64> = adt.mps.cores()[0].iter().copied().collect();
    let rho0 = from_hermitian_coords(&[x0[0], x0[1], x0[2], x0[3]]);
    let mut v = model::apply_superop(&gates.half_step, &rho0);
    for (x, g) in v.iter_mut().zip(&gates.self_gate) {
        *x *= g;
    }
    Ok(AugmentedDensityTensor {
        mps: MatrixProductState::product(&[to_hermitian_coords(&v)?.to_vec()])?,
        current_step: 1,
        first_window: 1,
        closing: gates.half_step,
        discarded_weight: adt.discarded_weight,
    })
}

/// `Σ_r w_r core[:, r, :]`.
fn contract_physical(core: &Array3<f64>, w: &[f64; 4]) -> Array2<f64> {
    let (dl, _, dr) = core.dim();
    let mut out = Array2::zeros((dl, dr));
    for (r, &wr) in w.iter().enumerate() {
        if wr != 0.0 {
            out.scaled_add(wr, &core.slice(s![.., r, ..]));
        }
    }
    out
}

/// `a ⊗ b` as a flat vector, `a` slow.
fn kron(a: &[f64], b: &[f64]) -> Array1<f64> {
    Array1::from_iter(a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)))
}

/// Applies the influence of the new window to every retained site, opens
/// the copy bond on the previous newest site and appends the new site.
///
/// The carried remainder is split into blocks `x[c]` by carry; each site
/// forms `T[(a, r), (y, b)]` and is refactored as `Q · B` with orthonormal
/// `Q`. Returns the new cores and the Frobenius norm of the residuals.
fn zip_up(
    cores: Vec<Array3<f64>>,
    lags: &[usize],
    gates: &InfluenceGates,
    chi: f64,
    step: usize,
) -> Result<(Vec<Array3<f64>>, f64)> {
    let n_old = cores.len();
    let copy = copy_tensor()?;
    let site = new_site(gates)?;
    let mut carried: Vec<Array2<f64>> = CARRY_TERMINATION
        .iter()
        .map(|&e| Array2::from_elem((1, 1), e))
        .collect();
    let mut left_env = Array1::from_elem(1, 1.0);
    let mut out = Vec::with_capacity(n_old + 1);
    let mut residual_sq = 0.0;

    for (i, core) in cores.into_iter().enumerate() {
        let op = lag_operator(gates.lag_gate(lags[i]))?;
        let (_, _, dr) = core.dim();
        let moved: Vec<Array3<f64>> = carried.iter().map(|x| absorb_left(x, &core)).collect();
        let q = moved[0].shape()[0];
        let (block, width) = if i + 1 < n_old {
            (history_block(&moved, &op), dr)
        } else {
            (copy_block(&moved, &op, &copy), 4)
        };
        let functional = kron(left_env.as_slice().expect("contiguous"), &HISTORY_SUM);
        let tol = ZIP_TOLERANCE * chi * block.norm_l2();
        let seed = (step as u64) << 32 | i as u64;
        let f = range_factor(&block, functional.view(), tol, dr, seed)?;
        residual_sq += f.residual * f.residual;
        let k = f.q.ncols();
        left_env = f.q.t().dot(&functional);
        out.push(f.q.as_standard_layout().into_owned().into_shape_with_order((q, 4, k)).expect("sizes agree"));
        carried = (0..CARRY)
            .map(|y| f.b.slice(s![.., y * width..(y + 1) * width]).to_owned())
            .collect();
    }

    let k = carried[0].nrows();
    let mut last = Array3::zeros((k, 4, 1));
    for (y, x) in carried.iter().enumerate() {
        for g in 0..4 {
            for r in 0..4 {
                let w = site[g][y][r];
                if w != 0.0 {
                    last.slice_mut(s![.., r, 0]).scaled_add(w, &x.column(g));
                }
            }
        }
    }
    out.push(last);
    Ok((out, residual_sq.sqrt()))
}

/// `T[(a, r), (y, b)] = Σ_{x, r'} op[x][y][r][r'] · moved[x][a, r', b]`.
fn history_block(moved: &[Array3<f64>], op: &LagOperator) -> Array2<f64> {
    let (q, _, dr) = moved[0].dim();
    let mut t = Array3::zeros((q, 4, CARRY * dr));
    for y in 0..CARRY {
        for (x, m) in moved.iter().enumerate() {
            for r in 0..4 {
                for rp in 0..4 {
                    let w = op[x][y][r][rp];
                    if w != 0.0 {
                        t.slice_mut(s![.., r, y * dr..(y + 1) * dr])
                            .scaled_add(w, &m.slice(s![.., rp, ..]));
                    }
                }
            }
        }
    }
    t.into_shape_with_order((q * 4, CARRY * dr)).expect("contiguous")
}

/// As [`history_block`] for the previous newest site, whose right bond is
/// the copy of its own index: columns are `(y, g)`.
fn copy_block(moved: &[Array3<f64>], op: &LagOperator, copy: &[[[f64; 4]; 4]; 4]) -> Array2<f64> {
    let q = moved[0].shape()[0];
    let mut t = Array3::zeros((q, 4, CARRY * 4));
    for y in 0..CARRY {
        for (x, m) in moved.iter().enumerate() {
            for r in 0..4 {
                for mid in 0..4 {
                    let w = op[x][y][r][mid];
                    if w == 0.0 {
                        continue;
                    }
                    for rp in 0..4 {
                        for g in 0..4 {
                            let c = w * copy[mid][rp][g];
                            if c != 0.0 {
                                t.slice_mut(s![.., r, y * 4 + g]).scaled_add(c, &m.slice(s![.., rp, 0]));
                            }
                        }
                    }
                }
            }
        }
    }
    t.into_shape_with_order((q * 4, CARRY * 4)).expect("contiguous")
}

struct RangeFactor {
    q: Array2<f64>,
    b: Array2<f64>,
    residual: f64,
}

/// `t ≈ q · b` with orthonormal `q` whose span contains `keep`, and
/// `‖t − q b‖_F ≤ tol`.
fn range_factor(t: &Array2<f64>, keep: ArrayView1<f64>, tol: f64, hint: usize, seed: u64) -> Result<RangeFactor> {
    let (m, n) = t.dim();
    let full = m.min(n);
    if full <= DIRECT_FACTOR_LIMIT {
        return direct_factor(t, keep, tol);
    }
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    let mut k = (1.25 * hint as f64).ceil() as usize + 16;
    for attempt in 0u64.. {
        if 5 * k >= 4 * full {
            return direct_factor(t, keep, tol);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ attempt.rotate_right(8));
        let sketch = Array2::from_shape_simple_fn((n, k), || dist.sample(&mut rng));
        let (q, _) = t.dot(&sketch).qr()?;
        let q = include_vector(q, keep, t.view());
        let b = q.t().dot(t);
        let residual = (t - &q.dot(&b)).norm_l2();
        if residual <= tol {
            return Ok(RangeFactor { q, b, residual });
        }
        k = k * 3 / 2 + 1;
    }
    unreachable!("the attempt loop returns once the sketch reaches full rank")
}

fn direct_factor(t: &Array2<f64>, keep: ArrayView1<f64>, tol: f64) -> Result<RangeFactor> {
    let split = svd_truncate_matrix(t, &SvdTruncation::lossless())?;
    let mut tail = 0.0;
    let mut rank = split.s.len();
    while rank > 1 {
        let s = split.s[rank - 1];
        if (tail + s * s).sqrt() > tol {
            break;
        }
        tail += s * s;
        rank -= 1;
    }
    let q = include_vector(split.u.slice(s![.., ..rank]).to_owned(), keep, t.view());
    let b = q.t().dot(t);
    Ok(RangeFactor {
        q,
        b,
        residual: tail.sqrt(),
    })
}

/// Appends the component `w` of `v` orthogonal to the columns of `q`, where
/// `q` approximately spans the columns of `a`.
///
/// Skipped when `‖aᵀw‖` is at the roundoff level of `|a|ᵀ|w|`: the new
/// direction would then hold only noise, which later gates can amplify.
fn include_vector(q: Array2<f64>, v: ArrayView1<f64>, a: ArrayView2<f64>) -> Array2<f64> {
    let norm = v.norm_l2();
    if norm == 0.0 || q.ncols() >= q.nrows() {
        return q;
    }
    let mut w = v.to_owned();
    for _ in 0..2 {
        let c = q.t().dot(&w);
        w -= &q.dot(&c);
    }
    let wn = w.norm_l2();
    let lost = a.t().dot(&w).norm_l2();
    let noise = a.mapv(f64::abs).t().dot(&w.mapv(f64::abs)).norm_l2();
    if wn <= 1e-12 * norm || lost <= AUGMENT_FLOOR * f64::EPSILON * noise {
        return q;
    }
    w /= wn;
    concatenate![Axis(1), q, w.insert_axis(Axis(1))]
}

/// Right-to-left truncated SVDs. The retained right subspace of each bond
/// is extended by the functional that sums everything to its right, so the
/// trace of the readout is unchanged. Leaves every core but the first
/// right-orthonormal.
fn truncate_right_to_left(mut cores: Vec<Array3<f64>>, trunc: &SvdTruncation) -> Result<(Vec<Array3<f64>>, f64)> {
    let n = cores.len();
    let mut right_env = Array1::from_elem(1, 1.0);
    let mut discarded = 0.0;
    for k in (1..n).rev() {
        let (dl, d, dr) = cores[k].dim();
        let m = cores[k]
            .view()
            .into_shape_with_order((dl, d * dr))
            .expect("contiguous")
            .to_owned();
        let functional = if k + 1 == n { &TRACE_SUM } else { &HISTORY_SUM };
        let env = kron(functional, right_env.as_slice().expect("contiguous"));
        let split = svd_truncate_matrix(&m, trunc)?;
        discarded += split.discarded_weight;
        let q = include_vector(split.v_dagger.t().to_owned(), env.view(), m.t());
        let carried = m.dot(&q);
        let r = q.ncols();
        right_env = q.t().dot(&env);
        cores[k] = q
            .t()
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((r, d, dr))
            .expect("sizes agree");
        cores[k - 1] = absorb_right(&cores[k - 1], &carried);
    }
    Ok((cores, discarded))
}

/// Sums over every history index and returns the density matrix at the
/// current time.
pub fn readout(adt: &AugmentedDensityTensor) -> Result<SystemState<f64>> {
    let cores = adt.mps.cores();
    let mut env = Array1::from_elem(1, 1.0);
    for core in &cores[..cores.len() - 1] {
        env = env.dot(&contract_physical(core, &HISTORY_SUM));
    }
    let newest = &cores[cores.len() - 1];
    let mut x = [0.0; 4];
    for (r, xr) in x.iter_mut().enumerate() {
        *xr = env.dot(&newest.slice(s![.., r, 0]));
    }
    let v = from_hermitian_coords(&x);
    let state = SystemState::from_vec(&model::apply_superop(&adt.closing, &v));
    let defect = (state.trace() - C64::new(1.0, 0.0)).norm();
    if !(defect <= TRACE_TOLERANCE) {
        return Err(Error::Consistency(format!(
            "trace deviates from 1 by {defect:e} at step {}",
            adt.current_step
        )));
    }
    Ok(state)
}

/// Propagates `rho0` for `cfg.n_steps` steps and records the trajectory with
/// per-step bond and truncation diagnostics.
pub fn run(
    p: &SpinBosonParams<f64>,
    bath: &BathSpec<f64>,
    cfg: &TempoConfig,
    rho0: &SystemState<f64>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let eta = influence_coefficients(bath, cfg.dt, cfg.n_steps, cfg.memory_cutoff, &cfg.quadrature)?;
    let gates = build_gates(&eta, p)?;
    run_with_gates(&gates, cfg, rho0)
}

pub fn run_with_gates(gates: &InfluenceGates, cfg: &TempoConfig, rho0: &SystemState<f64>) -> Result<Trajectory> {
    let mut adt = AugmentedDensityTensor::new(rho0)?;
    let mut traj = Trajectory::default();
    traj.push(0.0, readout(&adt)?, 1, 0.0);
    for n in 1..=cfg.n_steps {
        adt = propagate(adt, gates, cfg)?;
        let state = readout(&adt)?;
        log::debug!("step {n}: max bond {}", adt.max_bond());
        traj.push(n as f64 * cfg.dt, state, adt.max_bond(), adt.discarded_weight());
    }
    Ok(traj)
}
