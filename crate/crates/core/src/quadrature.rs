//! Panelled adaptive Gauss–Kronrod quadrature.
//!
//! Integrals over long frequency ranges with oscillatory kernels are split
//! into panels no wider than a caller-supplied width; each panel is refined
//! by bisection with a 21-point Gauss–Kronrod rule until its share of the
//! absolute tolerance is met. The panel decomposition depends only on the
//! inputs, so results are deterministic.

use num_complex::Complex;

use crate::{Error, Real, Result};

// 21-point Kronrod abscissae on [-1, 1] (positive half, descending), the
// odd-indexed ones being the 10-point Gauss abscissae.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_452_950,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_246,
];

/// Values that can be integrated: real and complex scalars and vectors of
/// them (integrated componentwise, error measured in the max-norm).
pub trait QuadValue<T: Real>: Clone + Send {
    fn zeroed_like(&self) -> Self;
    fn axpy(&mut self, w: T, other: &Self);
    fn scale(&mut self, w: T);
    fn dist(&self, other: &Self) -> T;
}

impl<T: Real> QuadValue<T> for T {
    fn zeroed_like(&self) -> Self {
        T::zero()
    }
    fn axpy(&mut self, w: T, other: &Self) {
        *self += w * *other;
    }
    fn scale(&mut self, w: T) {
        *self *= w;
    }
    fn dist(&self, other: &Self) -> T {
        (*self - *other).abs()
    }
}

impl<T: Real> QuadValue<T> for Complex<T> {
    fn zeroed_like(&self) -> Self {
        Complex::new(T::zero(), T::zero())
    }
    fn axpy(&mut self, w: T, other: &Self) {
        self.re += w * other.re;
        self.im += w * other.im;
    }
    fn scale(&mut self, w: T) {
        self.re *= w;
        self.im *= w;
    }
    fn dist(&self, other: &Self) -> T {
        (*self - *other).norm()
    }
}

impl<T: Real, V: QuadValue<T>> QuadValue<T> for Vec<V> {
    fn zeroed_like(&self) -> Self {
        self.iter().map(QuadValue::zeroed_like).collect()
    }
    fn axpy(&mut self, w: T, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            a.axpy(w, b);
        }
    }
    fn scale(&mut self, w: T) {
        for a in self.iter_mut() {
            a.scale(w);
        }
    }
    fn dist(&self, other: &Self) -> T {
        self.iter()
            .zip(other)
            .map(|(a, b)| a.dist(b))
            .fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions<T> {
    /// Absolute tolerance on the whole integral.
    pub abs_tol: T,
    /// Maximum bisection depth per panel.
    pub max_depth: usize,
    /// Lower bound on the number of panels over the integration range.
    pub min_panels: usize,
    /// Every panel is split into this many equal sub-panels; 2 halves the
    /// panel width (used for refinement checks).
    pub subdivision: usize,
}

impl<T: Real> Default for QuadratureOptions<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-10),
            max_depth: 40,
            min_panels: 64,
            subdivision: 1,
        }
    }
}

impl<T: Real> QuadratureOptions<T> {
    pub fn with_tolerance(mut self, abs_tol: T) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn refined(mut self, factor: usize) -> Self {
        self.subdivision *= factor.max(1);
        self
    }
}

/// An integral together with its error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<V, T> {
    pub value: V,
    pub error: T,
}

/// Panel width that resolves `cos(ω s)` for all `s ≤ scale`.
pub fn oscillatory_panel_width<T: Real>(scale: T) -> T {
    T::PI() / (T::lit(4.0) * scale)
}

/// Applies the 21-point Gauss–Kronrod rule on `[a, b]`.
pub fn gauss_kronrod<T, V, F>(f: &F, a: T, b: T) -> (V, T)
where
    T: Real,
    V: QuadValue<T>,
    F: Fn(T) -> V,
{
    let center = T::lit(0.5) * (a + b);
    let half = T::lit(0.5) * (b - a);
    let fc = f(center);
    let mut kronrod = fc.clone();
    kronrod.scale(T::lit(WGK[10]));
    let mut gauss = fc.zeroed_like();
    for i in 0..10 {
        let dx = half * T::lit(XGK[i]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod.axpy(T::lit(WGK[i]), &f1);
        kronrod.axpy(T::lit(WGK[i]), &f2);
        if i % 2 == 1 {
            let wg = T::lit(WG[i / 2]);
            gauss.axpy(wg, &f1);
            gauss.axpy(wg, &f2);
        }
    }
    kronrod.scale(half);
    gauss.scale(half);
    let err = kronrod.dist(&gauss);
    (kronrod, err)
}

fn bisect<T, V, F>(
    f: &F,
    a: T,
    b: T,
    whole: (V, T),
    tol: T,
    depth: usize,
    max_depth: usize,
) -> (V, T)
where
    T: Real,
    V: QuadValue<T>,
    F: Fn(T) -> V,
{
    let (value, err) = whole;
    if err <= tol || depth >= max_depth || !err.is_finite() {
        return (value, err);
    }
    let mid = T::lit(0.5) * (a + b);
    if mid <= a || mid >= b {
        return (value, err);
    }
    let left = gauss_kronrod(f, a, mid);
    let right = gauss_kronrod(f, mid, b);
    let half_tol = T::lit(0.5) * tol;
    let (mut lv, le) = bisect(f, a, mid, left, half_tol, depth + 1, max_depth);
    let (rv, re) = bisect(f, mid, b, right, half_tol, depth + 1, max_depth);
    lv.axpy(T::one(), &rv);
    (lv, le + re)
}

/// Integrates `f` over `[a, b]` using panels no wider than `max_width`.
///
/// Returns a [`Error::NumericalAccuracy`] carrying the achieved error
/// estimate if the summed panel errors exceed `opts.abs_tol`.
pub fn integrate_panels<T, V, F>(
    f: F,
    a: T,
    b: T,
    max_width: T,
    opts: &QuadratureOptions<T>,
) -> Result<Estimate<V, T>>
where
    T: Real,
    V: QuadValue<T>,
    F: Fn(T) -> V,
{
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Domain(format!(
            "integration range [{a}, {b}] is not a finite interval"
        )));
    }
    let length = b - a;
    let mut panels = opts.min_panels.max(1);
    if max_width > T::zero() && max_width.is_finite() {
        let needed = (length / max_width).ceil().to_f64_lossy();
        if needed.is_finite() && needed > panels as f64 {
            panels = needed as usize;
        }
    }
    panels *= opts.subdivision.max(1);
    let width = length / T::from_usize(panels);
    let panel_tol = opts.abs_tol / T::from_usize(panels);

    let mut total: Option<V> = None;
    let mut error = T::zero();
    for p in 0..panels {
        let lo = a + width * T::from_usize(p);
        let hi = if p + 1 == panels {
            b
        } else {
            a + width * T::from_usize(p + 1)
        };
        let est = gauss_kronrod(&f, lo, hi);
        let (v, e) = bisect(&f, lo, hi, est, panel_tol, 0, opts.max_depth);
        error += e;
        match total.as_mut() {
            Some(t) => t.axpy(T::one(), &v),
            None => total = Some(v),
        }
    }
    let value = total.expect("at least one panel");
    if !(error <= opts.abs_tol) {
        return Err(Error::NumericalAccuracy {
            context: format!("quadrature over [{a}, {b}] with {panels} panels"),
            achieved: error.to_f64_lossy(),
            requested: opts.abs_tol.to_f64_lossy(),
        });
    }
    Ok(Estimate { value, error })
}

/// Adaptive quadrature on `[a, b]` without an oscillation-driven panel width.
pub fn integrate<T, V, F>(f: F, a: T, b: T, opts: &QuadratureOptions<T>) -> Result<Estimate<V, T>>
where
    T: Real,
    V: QuadValue<T>,
    F: Fn(T) -> V,
{
    integrate_panels(f, a, b, T::infinity(), opts)
}
