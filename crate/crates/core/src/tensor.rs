//! Dense complex tensors, truncated SVD and matrix product states.
//!
//! Tensors are stored row-major. A matrix product state is a chain of rank-3
//! cores indexed `(left bond, physical, right bond)` whose outer bonds have
//! extent 1.

use std::io::{self, Write};

use ndarray::{Array2, Array3, ArrayD, Axis, IxDyn};
use ndarray_linalg::{JobSvd, Lapack, SVDDC, SVD};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    data: ArrayD<C64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} elements, got {}",
                data.len()
            )));
        }
        let data = ArrayD::from_shape_vec(IxDyn(&shape), data)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Self { data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            data: ArrayD::zeros(IxDyn(shape)),
        }
    }

    pub fn from_array(data: ArrayD<C64>) -> Self {
        Self {
            data: data.as_standard_layout().into_owned(),
        }
    }

    pub fn from_matrix(m: Array2<C64>) -> Self {
        Self::from_array(m.into_dyn())
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn rank(&self) -> usize {
        self.data.ndim()
    }

    pub fn array(&self) -> &ArrayD<C64> {
        &self.data
    }

    pub fn into_array(self) -> ArrayD<C64> {
        self.data
    }

    /// Elements in row-major order.
    pub fn data(&self) -> &[C64] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn get(&self, index: &[usize]) -> C64 {
        self.data[IxDyn(index)]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data().to_vec())
    }

    /// Reorders the axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.rank()];
        if axes.len() != self.rank() || axes.iter().any(|&a| a >= self.rank() || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::Shape(format!(
                "invalid permutation {axes:?} for rank {}",
                self.rank()
            )));
        }
        Ok(Self::from_array(self.data.clone().permuted_axes(IxDyn(axes))))
    }

    pub fn scaled(&self, alpha: C64) -> Self {
        Self {
            data: &self.data * alpha,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn to_matrix(&self) -> Result<Array2<C64>> {
        if self.rank() != 2 {
            return Err(Error::Shape(format!("expected a matrix, got rank {}", self.rank())));
        }
        Ok(self
            .data
            .clone()
            .into_dimensionality()
            .expect("rank checked"))
    }
}

/// Contracts `a` and `b` over the listed `(axis of a, axis of b)` pairs. The
/// output carries the free axes of `a` followed by those of `b`, each in
/// their original order.
pub fn contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<DenseTensor> {
    let mut used_a = vec![false; a.rank()];
    let mut used_b = vec![false; b.rank()];
    for &(i, j) in pairs {
        if i >= a.rank() || j >= b.rank() {
            return Err(Error::Shape(format!("contraction pair ({i}, {j}) out of range")));
        }
        if used_a[i] || used_b[j] {
            return Err(Error::Shape(format!("axis repeated in pair ({i}, {j})")));
        }
        if a.shape()[i] != b.shape()[j] {
            return Err(Error::Shape(format!(
                "extent mismatch: a axis {i} has {}, b axis {j} has {}",
                a.shape()[i],
                b.shape()[j]
            )));
        }
        used_a[i] = true;
        used_b[j] = true;
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|&j| !used_b[j]).collect();

    let perm_a: Vec<usize> = free_a.iter().copied().chain(pairs.iter().map(|p| p.0)).collect();
    let perm_b: Vec<usize> = pairs.iter().map(|p| p.1).chain(free_b.iter().copied()).collect();
    let rows: usize = free_a.iter().map(|&i| a.shape()[i]).product();
    let inner: usize = pairs.iter().map(|p| a.shape()[p.0]).product();
    let cols: usize = free_b.iter().map(|&j| b.shape()[j]).product();

    let am = a
        .data
        .view()
        .permuted_axes(IxDyn(&perm_a))
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((rows, inner))
        .expect("sizes agree");
    let bm = b
        .data
        .view()
        .permuted_axes(IxDyn(&perm_b))
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((inner, cols))
        .expect("sizes agree");
    let out = am.dot(&bm);
    let shape: Vec<usize> = free_a
        .iter()
        .map(|&i| a.shape()[i])
        .chain(free_b.iter().map(|&j| b.shape()[j]))
        .collect();
    let data = out.into_raw_vec_and_offset().0;
    if shape.is_empty() {
        return DenseTensor::new(vec![1], data);
    }
    DenseTensor::new(shape, data)
}

/// Truncation policy for singular value decompositions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdTruncation {
    /// Singular values below `chi_rel · s_max` are discarded.
    pub chi_rel: f64,
    /// Optional hard cap on the retained count.
    pub max_bond: Option<usize>,
}

impl SvdTruncation {
    pub fn new(chi_rel: f64, max_bond: Option<usize>) -> Result<Self> {
        if !(chi_rel > 0.0 && chi_rel < 1.0) {
            return Err(Error::Validation(format!("chi must lie in (0, 1), got {chi_rel}")));
        }
        if max_bond == Some(0) {
            return Err(Error::Validation("max_bond must be ≥ 1".into()));
        }
        Ok(Self { chi_rel, max_bond })
    }

    /// Discards only exactly vanishing singular values.
    pub fn lossless() -> Self {
        Self {
            chi_rel: f64::MIN_POSITIVE,
            max_bond: None,
        }
    }

    /// Number of singular values (sorted descending) to keep.
    pub fn retained(&self, s: &[f64]) -> usize {
        let Some(&smax) = s.first() else {
            return 0;
        };
        let threshold = self.chi_rel * smax;
        let mut keep = s.iter().take_while(|&&x| x >= threshold).count().max(1);
        if let Some(cap) = self.max_bond {
            keep = keep.min(cap);
        }
        keep
    }
}

/// Truncated factorization `m ≈ u · diag(s) · v_dagger`.
#[derive(Debug, Clone)]
pub struct SvdSplit<M> {
    pub u: M,
    pub s: Vec<f64>,
    pub v_dagger: M,
    /// Root-sum-square of the discarded singular values: the Frobenius error
    /// of the reconstruction.
    pub discarded_weight: f64,
}

/// Scalars the SVD and MPS routines accept (`f64` and `C64`).
pub trait Scalar: Lapack<Real = f64> {}

impl Scalar for f64 {}
impl Scalar for C64 {}

pub(crate) fn svd_truncate_matrix<A: Scalar>(m: &Array2<A>, trunc: &SvdTruncation) -> Result<SvdSplit<Array2<A>>> {
    if m.iter().any(|z| !(z.re().is_finite() && z.im().is_finite())) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let (u, s, vt) = match m.svddc(JobSvd::Some) {
        Ok((Some(u), s, Some(vt))) => (u, s, vt),
        _ => match m.svd(true, true)? {
            (Some(u), s, Some(vt)) => {
                let k = s.len();
                (
                    u.slice_move(ndarray::s![.., ..k]),
                    s,
                    vt.slice_move(ndarray::s![..k, ..]),
                )
            }
            _ => return Err(Error::Linalg("SVD returned no singular vectors".into())),
        },
    };
    let s = s.to_vec();
    let keep = trunc.retained(&s);
    let discarded_weight = s[keep..].iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(SvdSplit {
        u: u.slice(ndarray::s![.., ..keep]).as_standard_layout().into_owned(),
        s: s[..keep].to_vec(),
        v_dagger: vt.slice(ndarray::s![..keep, ..]).as_standard_layout().into_owned(),
        discarded_weight,
    })
}

/// Truncated SVD of a rank-2 tensor.
pub fn svd_truncate(m: &DenseTensor, trunc: &SvdTruncation) -> Result<SvdSplit<DenseTensor>> {
    let split = svd_truncate_matrix(&m.to_matrix()?, trunc)?;
    Ok(SvdSplit {
        u: DenseTensor::from_matrix(split.u),
        s: split.s,
        v_dagger: DenseTensor::from_matrix(split.v_dagger),
        discarded_weight: split.discarded_weight,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixProductState<A = C64> {
    cores: Vec<Array3<A>>,
}

impl MatrixProductState<C64> {
    pub fn new(cores: Vec<DenseTensor>) -> Result<Self> {
        let cores = cores
            .into_iter()
            .map(|c| {
                c.into_array()
                    .into_dimensionality()
                    .map_err(|_| Error::Shape("MPS cores must be rank 3".into()))
            })
            .collect::<Result<Vec<Array3<C64>>>>()?;
        Self::from_cores(cores)
    }

    pub fn core(&self, k: usize) -> DenseTensor {
        DenseTensor::from_array(self.cores[k].clone().into_dyn())
    }

    /// Contracts all bonds into the full tensor over the physical indices.
    pub fn contract_full(&self) -> DenseTensor {
        let shape = self.physical_extents();
        DenseTensor::new(shape, self.contract_raw()).expect("sizes agree")
    }
}

impl<A: Scalar> MatrixProductState<A> {
    pub(crate) fn from_cores(cores: Vec<Array3<A>>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::Shape("an MPS needs at least one core".into()));
        }
        if cores[0].shape()[0] != 1 || cores[cores.len() - 1].shape()[2] != 1 {
            return Err(Error::Shape("outer bonds of an MPS must have extent 1".into()));
        }
        for (k, pair) in cores.windows(2).enumerate() {
            if pair[0].shape()[2] != pair[1].shape()[0] {
                return Err(Error::Shape(format!(
                    "bond {k}: right extent {} != left extent {}",
                    pair[0].shape()[2],
                    pair[1].shape()[0]
                )));
            }
        }
        let cores = cores
            .into_iter()
            .map(|c| if c.is_standard_layout() { c } else { c.as_standard_layout().into_owned() })
            .collect();
        Ok(Self { cores })
    }

    /// Product state from one physical vector per site.
    pub fn product(vectors: &[Vec<A>]) -> Result<Self> {
        let cores = vectors
            .iter()
            .map(|v| Array3::from_shape_vec((1, v.len(), 1), v.clone()).map_err(|e| Error::Shape(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Self::from_cores(cores)
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn cores(&self) -> &[Array3<A>] {
        &self.cores
    }

    pub(crate) fn into_cores(self) -> Vec<Array3<A>> {
        self.cores
    }

    pub fn physical_extents(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[1]).collect()
    }

    /// Extents of the internal bonds (`len() − 1` entries).
    pub fn bond_extents(&self) -> Vec<usize> {
        self.cores.iter().skip(1).map(|c| c.shape()[0]).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_extents().into_iter().max().unwrap_or(1)
    }

    /// All amplitudes in row-major order over the physical indices.
    pub fn contract_raw(&self) -> Vec<A> {
        let mut acc: Array2<A> = self.cores[0]
            .view()
            .into_shape_with_order((self.cores[0].shape()[1], self.cores[0].shape()[2]))
            .expect("left boundary")
            .to_owned();
        for core in &self.cores[1..] {
            let (dl, d, dr) = core.dim();
            let cm = core.view().into_shape_with_order((dl, d * dr)).expect("contiguous");
            let next = acc.dot(&cm);
            let rows = next.shape()[0] * d;
            acc = next.into_shape_with_order((rows, dr)).expect("contiguous");
        }
        acc.into_raw_vec_and_offset().0
    }
}

/// Per-bond outcome of a compression sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    /// Discarded weight per internal bond, summed over both passes.
    pub per_bond: Vec<f64>,
    pub total: f64,
}

/// One left-to-right and one right-to-left truncated SVD pass.
///
/// Singular values are absorbed toward the sweep direction, so the result is
/// right-canonical with the norm carried by the first core.
pub fn sweep_compress<A: Scalar>(
    mps: MatrixProductState<A>,
    trunc: &SvdTruncation,
) -> Result<(MatrixProductState<A>, f64)> {
    let (out, report) = sweep_compress_report(mps, trunc)?;
    Ok((out, report.total))
}

pub fn sweep_compress_report<A: Scalar>(
    mps: MatrixProductState<A>,
    trunc: &SvdTruncation,
) -> Result<(MatrixProductState<A>, SweepReport)> {
    let mut cores = mps.into_cores();
    let n = cores.len();
    let mut per_bond = vec![0.0; n.saturating_sub(1)];

    for k in 0..n.saturating_sub(1) {
        let (dl, d, dr) = cores[k].dim();
        let m = cores[k]
            .view()
            .into_shape_with_order((dl * d, dr))
            .expect("contiguous")
            .to_owned();
        let split = svd_truncate_matrix(&m, trunc)?;
        per_bond[k] += split.discarded_weight;
        let r = split.s.len();
        cores[k] = split.u.into_shape_with_order((dl, d, r)).expect("sizes agree");
        let mut sv = split.v_dagger;
        for (mut row, s) in sv.axis_iter_mut(Axis(0)).zip(&split.s) {
            row.mapv_inplace(|z| z.mul_real(*s));
        }
        cores[k + 1] = absorb_left(&sv, &cores[k + 1]);
    }

    for k in (1..n).rev() {
        let (dl, d, dr) = cores[k].dim();
        let m = cores[k]
            .view()
            .into_shape_with_order((dl, d * dr))
            .expect("contiguous")
            .to_owned();
        let split = svd_truncate_matrix(&m, trunc)?;
        per_bond[k - 1] += split.discarded_weight;
        let r = split.s.len();
        cores[k] = split.v_dagger.into_shape_with_order((r, d, dr)).expect("sizes agree");
        let mut us = split.u;
        for (mut col, s) in us.axis_iter_mut(Axis(1)).zip(&split.s) {
            col.mapv_inplace(|z| z.mul_real(*s));
        }
        cores[k - 1] = absorb_right(&cores[k - 1], &us);
    }

    let total = per_bond.iter().sum();
    Ok((
        MatrixProductState::from_cores(cores)?,
        SweepReport { per_bond, total },
    ))
}

/// `m · core` over the left bond of `core`.
pub(crate) fn absorb_left<A: Scalar>(m: &Array2<A>, core: &Array3<A>) -> Array3<A> {
    let (dl, d, dr) = core.dim();
    let cm = core.view().into_shape_with_order((dl, d * dr)).expect("contiguous");
    let out = m.dot(&cm);
    let r = out.shape()[0];
    out.into_shape_with_order((r, d, dr)).expect("sizes agree")
}

/// `core · m` over the right bond of `core`.
pub(crate) fn absorb_right<A: Scalar>(core: &Array3<A>, m: &Array2<A>) -> Array3<A> {
    let (dl, d, dr) = core.dim();
    let cm = core.view().into_shape_with_order((dl * d, dr)).expect("contiguous");
    let out = cm.dot(m);
    let r = out.shape()[1];
    out.into_shape_with_order((dl, d, r)).expect("sizes agree")
}

/// Writes one `step,bond_index,extent,discarded_weight` row per bond.
pub fn write_bond_profile<W: Write>(
    mut w: W,
    step: usize,
    mps: &MatrixProductState<impl Scalar>,
    report: &SweepReport,
) -> io::Result<()> {
    for (i, extent) in mps.bond_extents().into_iter().enumerate() {
        let dw = report.per_bond.get(i).copied().unwrap_or(0.0);
        writeln!(w, "{step},{i},{extent},{dw}")?;
    }
    Ok(())
}
