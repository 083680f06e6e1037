//! Truncated Fourier series on T and T² with strip widths.
//!
//! `TrigPoly1` stores modes `-N..=N`; `TrigPoly2` stores the ℓ¹ diamond
//! `|k1| + |k2| <= N`. The sharp norm is `Σ ‖ĉ(k)‖ e^{2π|k|h}`.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rustfft::FftPlanner;

use crate::algebra3::{cexp, op_norm, CAlg, CMat, C64};
use crate::error::{Error, Result};

const WIDTH_SLACK: f64 = 1e-12;

/// Coefficient spaces: scalars, complexified algebra elements, 3×3 matrices.
pub trait Coef:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    const DIM: usize;
    fn zero() -> Self;
    fn scale(&self, s: C64) -> Self;
    fn conj(&self) -> Self;
    /// Euclidean for scalars and algebra elements, spectral for matrices.
    fn norm(&self) -> f64;
    fn comp(&self, i: usize) -> C64;
    fn from_comps(f: impl FnMut(usize) -> C64) -> Self;
    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }
    /// Cheap upper bound used for thresholds (max-abs of components).
    fn max_abs(&self) -> f64 {
        (0..Self::DIM).map(|i| self.comp(i).norm()).fold(0.0, f64::max)
    }
}

impl Coef for C64 {
    const DIM: usize = 1;
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn scale(&self, s: C64) -> Self {
        self * s
    }
    fn conj(&self) -> Self {
        C64::conj(self)
    }
    fn norm(&self) -> f64 {
        C64::norm(*self)
    }
    fn comp(&self, _i: usize) -> C64 {
        *self
    }
    fn from_comps(mut f: impl FnMut(usize) -> C64) -> Self {
        f(0)
    }
}

impl Coef for CAlg {
    const DIM: usize = 3;
    fn zero() -> Self {
        CAlg::ZERO
    }
    fn scale(&self, s: C64) -> Self {
        CAlg::scale(self, s)
    }
    fn conj(&self) -> Self {
        CAlg::conj(self)
    }
    fn norm(&self) -> f64 {
        CAlg::norm(self)
    }
    fn comp(&self, i: usize) -> C64 {
        self.0[i]
    }
    fn from_comps(mut f: impl FnMut(usize) -> C64) -> Self {
        CAlg([f(0), f(1), f(2)])
    }
}

impl Coef for CMat {
    const DIM: usize = 9;
    fn zero() -> Self {
        CMat::zeros()
    }
    fn scale(&self, s: C64) -> Self {
        self * s
    }
    fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }
    fn norm(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            op_norm(self)
        }
    }
    fn comp(&self, i: usize) -> C64 {
        self[(i / 3, i % 3)]
    }
    fn from_comps(mut f: impl FnMut(usize) -> C64) -> Self {
        CMat::from_fn(|i, j| f(3 * i + j))
    }
    fn is_zero(&self) -> bool {
        self.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

#[inline]
pub fn cis(t: f64) -> C64 {
    C64::new(t.cos(), t.sin())
}

/// `e^{2πikz}` from the product `k·z`.
#[inline]
pub fn mode_phase(k: f64, z: C64) -> C64 {
    (C64::new(0.0, 2.0 * PI * k) * z).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Neumaier {
    sum: C64,
    comp: C64,
}

impl Neumaier {
    fn new() -> Self {
        Neumaier { sum: C64::new(0.0, 0.0), comp: C64::new(0.0, 0.0) }
    }
    fn add(&mut self, x: C64) {
        let (s, c) = two_sum(self.sum.re, x.re);
        let (t, d) = two_sum(self.sum.im, x.im);
        self.sum = C64::new(s, t);
        self.comp += C64::new(c, d);
    }
    fn value(&self) -> C64 {
        self.sum + self.comp
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = if a.abs() >= b.abs() { (a - s) + b } else { (b - s) + a };
    (s, err)
}

/// Diagnostics of a discrete Fourier fit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitDiag {
    /// Norm sum of DFT bins beyond the cutoff.
    pub discarded: f64,
    /// Norm sum of kept modes with `|k| > 3N/4`.
    pub top_quarter: f64,
}

impl FitDiag {
    pub fn aliasing(&self) -> f64 {
        self.discarded.max(self.top_quarter)
    }
}

/// Trig polynomial on T: `Σ_{|k|<=N} ĉ(k) e^{2πikx}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly1<T: Coef> {
    pub h: f64,
    n: usize,
    coef: Vec<T>,
    pub real: bool,
}

impl<T: Coef> TrigPoly1<T> {
    pub fn zeros(n: usize, h: f64) -> Self {
        TrigPoly1 { h, n, coef: vec![T::zero(); 2 * n + 1], real: true }
    }

    pub fn constant(c: T, h: f64) -> Self {
        TrigPoly1 { h, n: 0, coef: vec![c], real: false }
    }

    pub fn single_mode(k: i64, c: T, h: f64) -> Self {
        let mut p = Self::zeros(k.unsigned_abs() as usize, h);
        p.real = false;
        p.set(k, c);
        p
    }

    pub fn from_coefs(coef: Vec<T>, h: f64, real: bool) -> Self {
        assert!(coef.len() % 2 == 1, "coefficient vector must have odd length");
        TrigPoly1 { h, n: coef.len() / 2, coef, real }
    }

    pub fn cutoff(&self) -> usize {
        self.n
    }

    pub fn coefs(&self) -> &[T] {
        &self.coef
    }

    pub fn get(&self, k: i64) -> T {
        if k.unsigned_abs() as usize > self.n {
            T::zero()
        } else {
            self.coef[(k + self.n as i64) as usize]
        }
    }

    pub fn set(&mut self, k: i64, c: T) {
        if k.unsigned_abs() as usize > self.n {
            self.resize(k.unsigned_abs() as usize);
        }
        let n = self.n as i64;
        self.coef[(k + n) as usize] = c;
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, &T)> {
        let n = self.n as i64;
        self.coef.iter().enumerate().map(move |(i, c)| (i as i64 - n, c))
    }

    /// Changes the storage cutoff, padding with zeros or dropping modes.
    pub fn resize(&mut self, n: usize) {
        let mut out = vec![T::zero(); 2 * n + 1];
        let m = self.n.min(n) as i64;
        for k in -m..=m {
            out[(k + n as i64) as usize] = self.get(k);
        }
        self.n = n;
        self.coef = out;
    }

    /// Smallest cutoff holding every coefficient above `tol` in max-abs.
    pub fn trim(&mut self, tol: f64) {
        let m = self.modes().filter(|(_, c)| c.max_abs() > tol).map(|(k, _)| k.unsigned_abs() as usize).max().unwrap_or(0);
        if m < self.n {
            self.resize(m);
        }
    }

    pub fn with_width(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn map<U: Coef>(&self, f: impl Fn(&T) -> U) -> TrigPoly1<U> {
        TrigPoly1 { h: self.h, n: self.n, coef: self.coef.iter().map(f).collect(), real: self.real }
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.map(|c| c.scale(s));
        out.real = self.real && s.im == 0.0;
        out
    }

    pub fn sharp_norm(&self, h: f64) -> Result<f64> {
        if h > self.h + WIDTH_SLACK {
            return Err(Error::WidthExceeded { requested: h, available: self.h });
        }
        Ok(self.sharp_norm_unchecked(h))
    }

    pub fn sharp_norm_unchecked(&self, h: f64) -> f64 {
        self.modes().map(|(k, c)| c.norm() * (2.0 * PI * k.abs() as f64 * h).exp()).sum()
    }

    /// Keeps `|k| < n`.
    pub fn truncate(&self, n: usize) -> Self {
        let mut out = self.clone();
        if n == 0 {
            return Self { coef: vec![T::zero()], n: 0, ..out };
        }
        out.resize((n - 1).min(self.n));
        out
    }

    /// Keeps `|k| >= n`.
    pub fn tail(&self, n: usize) -> Self {
        let mut out = self.clone();
        for (i, c) in out.coef.iter_mut().enumerate() {
            if ((i as i64 - self.n as i64).unsigned_abs() as usize) < n {
                *c = T::zero();
            }
        }
        out
    }

    pub fn eval(&self, z: C64) -> T {
        let mut acc: Vec<Neumaier> = vec![Neumaier::new(); T::DIM];
        for (k, c) in self.modes() {
            if c.is_zero() {
                continue;
            }
            let e = mode_phase(k as f64, z);
            for (i, a) in acc.iter_mut().enumerate() {
                a.add(c.comp(i) * e);
            }
        }
        T::from_comps(|i| acc[i].value())
    }

    pub fn eval_real(&self, x: f64) -> T {
        self.eval(C64::new(x, 0.0))
    }

    pub fn shift_arg(&self, sigma: C64) -> Self {
        let mut out = self.clone();
        for (i, c) in out.coef.iter_mut().enumerate() {
            let k = i as f64 - self.n as f64;
            *c = c.scale(mode_phase(k, sigma));
        }
        out.real = self.real && sigma.im == 0.0;
        out
    }

    pub fn derivative(&self) -> Self {
        let mut out = self.clone();
        for (i, c) in out.coef.iter_mut().enumerate() {
            let k = i as f64 - self.n as f64;
            *c = c.scale(C64::new(0.0, 2.0 * PI * k));
        }
        out
    }

    /// Enforces `ĉ(−k) = conj ĉ(k)` by averaging.
    pub fn symmetrize(&mut self) {
        let n = self.n as i64;
        for k in 0..=n {
            let a = self.get(k);
            let b = self.get(-k).conj();
            let m = (a + b).scale(C64::new(0.5, 0.0));
            self.set(k, m);
            self.set(-k, m.conj());
        }
        self.real = true;
    }

    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n as i64;
        (0..=n).map(|k| (self.get(k) - self.get(-k).conj()).norm()).fold(0.0, f64::max)
    }

    /// Values at `x_j = j/m` via an inverse FFT.
    pub fn grid_values(&self, m: usize) -> Vec<T> {
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_inverse(m);
        let mut comps: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); m]; T::DIM];
        for (k, c) in self.modes() {
            let bin = k.rem_euclid(m as i64) as usize;
            for (i, buf) in comps.iter_mut().enumerate() {
                buf[bin] += c.comp(i);
            }
        }
        for buf in comps.iter_mut() {
            fft.process(buf);
        }
        (0..m).map(|j| T::from_comps(|i| comps[i][j])).collect()
    }

    /// Discrete Fourier fit of samples on `x_j = j/M`.
    pub fn fit(samples: &[T], n: usize, h: f64) -> Result<(Self, FitDiag)> {
        let m = samples.len();
        if m < 2 * n + 2 {
            return Err(Error::GridTooCoarse { grid: m, cutoff: n });
        }
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(m);
        let mut comps: Vec<Vec<C64>> =
            (0..T::DIM).map(|i| samples.iter().map(|s| s.comp(i)).collect()).collect();
        for buf in comps.iter_mut() {
            fft.process(buf);
        }
        let inv = 1.0 / m as f64;
        let bin_coef = |k: i64| -> T {
            let b = k.rem_euclid(m as i64) as usize;
            T::from_comps(|i| comps[i][b] * inv)
        };
        let mut out = Self::zeros(n, h);
        out.real = false;
        for k in -(n as i64)..=(n as i64) {
            out.set(k, bin_coef(k));
        }
        let mut discarded = 0.0;
        for b in 0..m as i64 {
            let k = if b <= (m as i64) / 2 { b } else { b - m as i64 };
            if k.unsigned_abs() as usize > n {
                discarded += bin_coef(k).norm();
            }
        }
        let q = (3 * n) / 4;
        let top_quarter = out.modes().filter(|(k, _)| k.unsigned_abs() as usize > q).map(|(_, c)| c.norm()).sum();
        Ok((out, FitDiag { discarded, top_quarter }))
    }

    /// Sup of the pointwise norm over the two boundary lines `Im z = ±h'`, sampled.
    pub fn sup_on_strip(&self, h: f64, samples: usize) -> f64 {
        let mut best: f64 = 0.0;
        for j in 0..samples {
            let x = j as f64 / samples as f64;
            for y in [-h, 0.0, h] {
                best = best.max(self.eval(C64::new(x, y)).norm());
            }
        }
        best
    }
}

impl<T: Coef> Add for &TrigPoly1<T> {
    type Output = TrigPoly1<T>;
    fn add(self, o: &TrigPoly1<T>) -> TrigPoly1<T> {
        let n = self.n.max(o.n);
        let mut out = TrigPoly1::zeros(n, self.h.min(o.h));
        out.real = self.real && o.real;
        for k in -(n as i64)..=(n as i64) {
            out.set(k, self.get(k) + o.get(k));
        }
        out
    }
}

impl<T: Coef> Sub for &TrigPoly1<T> {
    type Output = TrigPoly1<T>;
    fn sub(self, o: &TrigPoly1<T>) -> TrigPoly1<T> {
        let n = self.n.max(o.n);
        let mut out = TrigPoly1::zeros(n, self.h.min(o.h));
        out.real = self.real && o.real;
        for k in -(n as i64)..=(n as i64) {
            out.set(k, self.get(k) - o.get(k));
        }
        out
    }
}

/// Cauchy product under a bilinear `op`, cut at `cap` modes when given.
pub fn convolve1<A: Coef, B: Coef, C: Coef>(
    f: &TrigPoly1<A>,
    g: &TrigPoly1<B>,
    cap: Option<usize>,
    op: impl Fn(&A, &B) -> C,
) -> TrigPoly1<C> {
    let full = f.n + g.n;
    let n = cap.map_or(full, |c| c.min(full));
    let mut out = TrigPoly1::<C>::zeros(n, f.h.min(g.h));
    out.real = f.real && g.real;
    let ni = n as i64;
    for (i, a) in f.modes() {
        if a.is_zero() {
            continue;
        }
        for (j, b) in g.modes() {
            let k = i + j;
            if k.abs() > ni || b.is_zero() {
                continue;
            }
            let idx = (k + ni) as usize;
            out.coef[idx] += op(a, b);
        }
    }
    out
}

/// Pointwise matrix product.
pub fn product(f: &TrigPoly1<CMat>, g: &TrigPoly1<CMat>) -> TrigPoly1<CMat> {
    convolve1(f, g, None, |a, b| a * b)
}

pub fn product_scalar(f: &TrigPoly1<C64>, g: &TrigPoly1<C64>) -> TrigPoly1<C64> {
    convolve1(f, g, None, |a, b| a * b)
}

/// Pointwise Lie bracket of algebra-valued series.
pub fn bracket1(f: &TrigPoly1<CAlg>, g: &TrigPoly1<CAlg>, cap: Option<usize>) -> TrigPoly1<CAlg> {
    convolve1(f, g, cap, |a, b| a.bracket(b))
}

fn pow2_at_least(n: usize) -> usize {
    n.next_power_of_two().max(16)
}

/// Group-valued `exp(F)` by sampling, pointwise exponentiation and refitting.
/// The cutoff doubles until the aliasing indicator drops below `1e-12` or reaches 4096.
pub fn exp_of(f: &TrigPoly1<CAlg>) -> TrigPoly1<CMat> {
    let mut n = (2 * f.n).max(8);
    loop {
        let m = pow2_at_least(2 * n + 2);
        let vals: Vec<CMat> = f.grid_values(m).iter().map(cexp).collect();
        let (mut fit, diag) = TrigPoly1::fit(&vals, n, f.h).expect("grid sized from cutoff");
        fit.real = f.real;
        if diag.aliasing() < 1e-12 || n >= 4096 {
            if f.real {
                fit.symmetrize();
            }
            let top = fit.coefs().iter().map(|c| c.max_abs()).fold(0.0, f64::max);
            fit.trim(1e-15 * top);
            return fit;
        }
        n *= 2;
    }
}

/// Trig polynomial on T² over the ℓ¹ diamond `|k1|+|k2| <= N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly2<T: Coef> {
    pub h: f64,
    n: usize,
    coef: Vec<T>,
    pub real: bool,
}

impl<T: Coef> TrigPoly2<T> {
    pub fn zeros(n: usize, h: f64) -> Self {
        let side = 2 * n + 1;
        TrigPoly2 { h, n, coef: vec![T::zero(); side * side], real: true }
    }

    pub fn constant(c: T, h: f64) -> Self {
        let mut p = Self::zeros(0, h);
        p.coef[0] = c;
        p.real = false;
        p
    }

    pub fn single_mode(k: (i64, i64), c: T, h: f64) -> Self {
        let mut p = Self::zeros(l1(k), h);
        p.real = false;
        p.set(k, c);
        p
    }

    pub fn cutoff(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, k: (i64, i64)) -> usize {
        let n = self.n as i64;
        let side = 2 * n + 1;
        ((k.0 + n) * side + (k.1 + n)) as usize
    }

    pub fn get(&self, k: (i64, i64)) -> T {
        if l1(k) > self.n {
            T::zero()
        } else {
            self.coef[self.idx(k)]
        }
    }

    pub fn set(&mut self, k: (i64, i64), c: T) {
        if l1(k) > self.n {
            self.resize(l1(k));
        }
        let i = self.idx(k);
        self.coef[i] = c;
    }

    pub fn add_at(&mut self, k: (i64, i64), c: T) {
        if l1(k) > self.n {
            self.resize(l1(k));
        }
        let i = self.idx(k);
        self.coef[i] += c;
    }

    /// Modes of the diamond in lexicographic order.
    pub fn modes(&self) -> impl Iterator<Item = ((i64, i64), T)> + '_ {
        diamond(self.n).map(move |k| (k, self.coef[self.idx(k)]))
    }

    pub fn nonzero_modes(&self) -> impl Iterator<Item = ((i64, i64), T)> + '_ {
        self.modes().filter(|(_, c)| !c.is_zero())
    }

    pub fn resize(&mut self, n: usize) {
        let mut out = Self::zeros(n, self.h);
        out.real = self.real;
        for k in diamond(self.n.min(n)) {
            let i = out.idx(k);
            out.coef[i] = self.get(k);
        }
        *self = out;
    }

    /// Smallest cutoff holding every coefficient above `tol` in max-abs.
    pub fn trim(&mut self, tol: f64) {
        let mut m = 0;
        for (k, c) in self.modes() {
            if c.max_abs() > tol {
                m = m.max(l1(k));
            }
        }
        if m < self.n {
            self.resize(m);
        }
    }

    /// Zeros modes whose weight `|c|e^{2π|k|h}` is below `tol`, then shrinks the cutoff.
    pub fn trim_weighted(&mut self, h: f64, tol: f64) {
        let n = self.n;
        for k in diamond(n) {
            let i = self.idx(k);
            let c = self.coef[i];
            if !c.is_zero() && c.norm() * (2.0 * PI * h * l1(k) as f64).exp() < tol {
                self.coef[i] = T::zero();
            }
        }
        self.trim(0.0);
    }

    pub fn map<U: Coef>(&self, f: impl Fn(&T) -> U) -> TrigPoly2<U> {
        TrigPoly2 { h: self.h, n: self.n, coef: self.coef.iter().map(f).collect(), real: self.real }
    }

    pub fn map_modes(&self, f: impl Fn((i64, i64), &T) -> T) -> Self {
        let mut out = self.clone();
        for k in diamond(self.n) {
            let i = self.idx(k);
            out.coef[i] = f(k, &self.coef[i]);
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.map(|c| c.scale(s));
        out.real = self.real && s.im == 0.0;
        out
    }

    pub fn sharp_norm(&self, h: f64) -> Result<f64> {
        if h > self.h + WIDTH_SLACK {
            return Err(Error::WidthExceeded { requested: h, available: self.h });
        }
        Ok(self.sharp_norm_unchecked(h))
    }

    pub fn sharp_norm_unchecked(&self, h: f64) -> f64 {
        self.nonzero_modes().map(|(k, c)| c.norm() * (2.0 * PI * l1(k) as f64 * h).exp()).sum()
    }

    /// Log of the sharp norm, safe when the weights overflow.
    pub fn log_sharp_norm(&self, h: f64) -> f64 {
        let terms: Vec<f64> = self
            .nonzero_modes()
            .map(|(k, c)| c.norm().ln() + 2.0 * PI * l1(k) as f64 * h)
            .collect();
        log_sum_exp(&terms)
    }

    /// Keeps `|k| < n`.
    pub fn truncate(&self, n: usize) -> Self {
        if n == 0 {
            return Self::zeros(0, self.h);
        }
        let mut out = self.clone();
        out.resize((n - 1).min(self.n));
        out
    }

    /// Keeps `|k| >= n`.
    pub fn tail(&self, n: usize) -> Self {
        self.map_modes(|k, c| if l1(k) < n { T::zero() } else { *c })
    }

    pub fn eval(&self, z: (C64, C64)) -> T {
        let mut acc: Vec<Neumaier> = vec![Neumaier::new(); T::DIM];
        for (k, c) in self.nonzero_modes() {
            let e = mode_phase(k.0 as f64, z.0) * mode_phase(k.1 as f64, z.1);
            for (i, a) in acc.iter_mut().enumerate() {
                a.add(c.comp(i) * e);
            }
        }
        T::from_comps(|i| acc[i].value())
    }

    pub fn shift_arg(&self, sigma: (C64, C64)) -> Self {
        let mut out = self.map_modes(|k, c| c.scale(mode_phase(k.0 as f64, sigma.0) * mode_phase(k.1 as f64, sigma.1)));
        out.real = self.real && sigma.0.im == 0.0 && sigma.1.im == 0.0;
        out
    }

    /// Directional derivative along `ω`.
    pub fn derivative_along(&self, omega: (f64, f64)) -> Self {
        self.map_modes(|k, c| c.scale(C64::new(0.0, 2.0 * PI * (k.0 as f64 * omega.0 + k.1 as f64 * omega.1))))
    }

    pub fn symmetrize(&mut self) {
        for k in diamond(self.n) {
            if k < (0, 0) {
                continue;
            }
            let m = (self.get(k) + self.get((-k.0, -k.1)).conj()).scale(C64::new(0.5, 0.0));
            self.set(k, m);
            self.set((-k.0, -k.1), m.conj());
        }
        self.real = true;
    }

    pub fn symmetry_defect(&self) -> f64 {
        diamond(self.n)
            .map(|k| (self.get(k) - self.get((-k.0, -k.1)).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Values on the `m × m` grid `(j1/m, j2/m)`, row-major in `j1`.
    pub fn grid_values(&self, m: usize) -> Vec<T> {
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_inverse(m);
        let mut out = vec![T::zero(); m * m];
        let mut comps: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); m * m]; T::DIM];
        for (k, c) in self.nonzero_modes() {
            let b = k.0.rem_euclid(m as i64) as usize * m + k.1.rem_euclid(m as i64) as usize;
            for (i, buf) in comps.iter_mut().enumerate() {
                buf[b] += c.comp(i);
            }
        }
        for buf in comps.iter_mut() {
            fft2(buf, m, &*fft);
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o = T::from_comps(|i| comps[i][j]);
        }
        out
    }

    pub fn fit(samples: &[T], m: usize, n: usize, h: f64) -> Result<(Self, FitDiag)> {
        if m < 2 * n + 2 || samples.len() != m * m {
            return Err(Error::GridTooCoarse { grid: m, cutoff: n });
        }
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(m);
        let mut comps: Vec<Vec<C64>> =
            (0..T::DIM).map(|i| samples.iter().map(|s| s.comp(i)).collect()).collect();
        for buf in comps.iter_mut() {
            fft2(buf, m, &*fft);
        }
        let inv = 1.0 / (m * m) as f64;
        let mut out = Self::zeros(n, h);
        out.real = false;
        let mut discarded = 0.0;
        for b0 in 0..m {
            for b1 in 0..m {
                let k0 = if b0 <= m / 2 { b0 as i64 } else { b0 as i64 - m as i64 };
                let k1 = if b1 <= m / 2 { b1 as i64 } else { b1 as i64 - m as i64 };
                let c = T::from_comps(|i| comps[i][b0 * m + b1] * inv);
                if l1((k0, k1)) <= n {
                    out.set((k0, k1), c);
                } else {
                    discarded += c.norm();
                }
            }
        }
        let q = (3 * n) / 4;
        let top_quarter = out.modes().filter(|(k, _)| l1(*k) > q).map(|(_, c)| c.norm()).sum();
        Ok((out, FitDiag { discarded, top_quarter }))
    }
}

fn fft2(buf: &mut [C64], m: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in buf.chunks_mut(m) {
        fft.process(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); m];
    for j in 0..m {
        for i in 0..m {
            col[i] = buf[i * m + j];
        }
        fft.process(&mut col);
        for i in 0..m {
            buf[i * m + j] = col[i];
        }
    }
}

impl<T: Coef> Add for &TrigPoly2<T> {
    type Output = TrigPoly2<T>;
    fn add(self, o: &TrigPoly2<T>) -> TrigPoly2<T> {
        let mut out = self.clone();
        if o.n > out.n {
            out.resize(o.n);
        }
        for (k, c) in o.nonzero_modes() {
            out.add_at(k, c);
        }
        out.h = self.h.min(o.h);
        out.real = self.real && o.real;
        out
    }
}

impl<T: Coef> Sub for &TrigPoly2<T> {
    type Output = TrigPoly2<T>;
    fn sub(self, o: &TrigPoly2<T>) -> TrigPoly2<T> {
        let mut out = self.clone();
        if o.n > out.n {
            out.resize(o.n);
        }
        for (k, c) in o.nonzero_modes() {
            out.add_at(k, -c);
        }
        out.h = self.h.min(o.h);
        out.real = self.real && o.real;
        out
    }
}

impl<T: Coef> Mul<C64> for &TrigPoly2<T> {
    type Output = TrigPoly2<T>;
    fn mul(self, s: C64) -> TrigPoly2<T> {
        self.scale(s)
    }
}

pub fn l1(k: (i64, i64)) -> usize {
    (k.0.unsigned_abs() + k.1.unsigned_abs()) as usize
}

pub fn diamond(n: usize) -> impl Iterator<Item = (i64, i64)> {
    let n = n as i64;
    (-n..=n).flat_map(move |k0| {
        let r = n - k0.abs();
        (-r..=r).map(move |k1| (k0, k1))
    })
}

/// Cauchy product on T² under `op`, cut at `cap`.
pub fn convolve2<A: Coef, B: Coef, C: Coef>(
    f: &TrigPoly2<A>,
    g: &TrigPoly2<B>,
    cap: Option<usize>,
    op: impl Fn(&A, &B) -> C,
) -> TrigPoly2<C> {
    let full = f.n + g.n;
    let n = cap.map_or(full, |c| c.min(full));
    let mut out = TrigPoly2::<C>::zeros(n, f.h.min(g.h));
    out.real = f.real && g.real;
    let fa: Vec<_> = f.nonzero_modes().collect();
    let gb: Vec<_> = g.nonzero_modes().collect();
    for (i, a) in &fa {
        for (j, b) in &gb {
            let k = (i.0 + j.0, i.1 + j.1);
            if l1(k) > n {
                continue;
            }
            let idx = out.idx(k);
            out.coef[idx] += op(a, b);
        }
    }
    out
}

pub fn bracket2(f: &TrigPoly2<CAlg>, g: &TrigPoly2<CAlg>, cap: Option<usize>) -> TrigPoly2<CAlg> {
    convolve2(f, g, cap, |a, b| a.bracket(b))
}

pub fn product2(f: &TrigPoly2<CMat>, g: &TrigPoly2<CMat>, cap: Option<usize>) -> TrigPoly2<CMat> {
    convolve2(f, g, cap, |a, b| a * b)
}

/// Matrix form of an algebra-valued series.
pub fn to_matrix2(f: &TrigPoly2<CAlg>) -> TrigPoly2<CMat> {
    f.map(|c| c.matrix())
}

pub fn to_matrix1(f: &TrigPoly1<CAlg>) -> TrigPoly1<CMat> {
    f.map(|c| c.matrix())
}

/// `exp(F)` on T² by sampling on a square grid and refitting.
pub fn exp_of2(f: &TrigPoly2<CAlg>) -> TrigPoly2<CMat> {
    let mut n = (2 * f.n).max(8);
    loop {
        let m = pow2_at_least(2 * n + 2);
        let vals: Vec<CMat> = f.grid_values(m).iter().map(cexp).collect();
        let (mut fit, diag) = TrigPoly2::fit(&vals, m, n, f.h).expect("grid sized from cutoff");
        fit.real = f.real;
        if diag.aliasing() < 1e-12 || n >= 256 {
            if f.real {
                fit.symmetrize();
            }
            let top = fit.modes().map(|(_, c)| c.max_abs()).fold(0.0, f64::max);
            fit.trim(1e-15 * top);
            return fit;
        }
        n *= 2;
    }
}

/// `exp(X)` by its power series in coefficient space; for small `X`.
pub fn exp_series2(x: &TrigPoly2<CAlg>, cap: usize, tol: f64) -> TrigPoly2<CMat> {
    let xm = to_matrix2(x);
    let mut acc = TrigPoly2::constant(CMat::identity(), x.h);
    acc.real = x.real;
    let mut term = acc.clone();
    for m in 1..60 {
        term = product2(&term, &xm, Some(cap)).scale(C64::new(1.0 / m as f64, 0.0));
        acc = &acc + &term;
        if term.nonzero_modes().map(|(_, c)| c.max_abs()).fold(0.0, f64::max) < tol {
            break;
        }
    }
    acc
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}
