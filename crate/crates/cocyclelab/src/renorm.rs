//! Renormalization of cocycles as commuting pairs of skew-products.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::algebra3::{alg_exp, cmat_from_real, real_part, rot_log, rot_log_hint, AlgVec, CMat, RMat, Rot, C64};
use crate::arithmetic::{cf_expand, AlphaSpec, CFData};
use crate::cocycle::{iterate, lyapunov, normal_form_poly, Cocycle};
use crate::error::{Error, Result};
use crate::fourier::{Coef, FitDiag, TrigPoly1};

/// `x ↦ A_word(scale · x)` for the underlying cocycle.
#[derive(Debug, Clone)]
pub struct LineMap {
    pub cocycle: Arc<Cocycle>,
    pub word: i64,
    pub scale: f64,
}

impl LineMap {
    pub fn eval(&self, z: C64) -> CMat {
        iterate(&self.cocycle, self.word, z * self.scale)
    }

    pub fn eval_real(&self, x: f64) -> RMat {
        real_part(&self.eval(C64::new(x, 0.0)))
    }

    /// Same value through `A_{w−k}(y + kα) A_k(y)`.
    pub fn eval_split(&self, z: C64, k: i64) -> CMat {
        let y = z * self.scale;
        let c = &self.cocycle;
        iterate(c, self.word - k, y + C64::new(k as f64 * c.alpha, 0.0)) * iterate(c, k, y)
    }
}

/// Generators `(γ₁, M₁)` and `(γ₂, M₂)` of a ℤ²-action.
#[derive(Debug, Clone)]
pub struct CommutingPair {
    pub gamma: [f64; 2],
    pub maps: [LineMap; 2],
    pub n: usize,
    pub commutation_residual: f64,
}

/// Real window used for normalization checks.
pub const WINDOW: (f64, f64) = (-1.0, 2.0);

impl CommutingPair {
    pub fn m1(&self, z: C64) -> CMat {
        self.maps[0].eval(z)
    }

    pub fn m2(&self, z: C64) -> CMat {
        self.maps[1].eval(z)
    }

    /// `sup_x ‖M₁(x+γ₂)M₂(x) − M₂(x+γ₁)M₁(x)‖` over 33 window points.
    pub fn commutation_defect(&self) -> f64 {
        let (lo, hi) = WINDOW;
        (0..33)
            .into_par_iter()
            .map(|i| {
                let z = C64::new(lo + (hi - lo) * i as f64 / 32.0, 0.0);
                let l = self.m1(z + self.gamma[1]) * self.m2(z);
                let r = self.m2(z + self.gamma[0]) * self.m1(z);
                (l - r).norm()
            })
            .reduce(|| 0.0, f64::max)
    }
}

fn cf_for(c: &Cocycle, n: usize) -> Result<CFData> {
    cf_expand(&c.alpha_spec, n + 1).map_err(|e| match e {
        Error::RationalInput { index } | Error::PrecisionExhausted { depth: index } => {
            Error::DepthExceeded { requested: n, available: index }
        }
        other => other,
    })
}

/// The `n`-th renormalization around `x₀ = 0`, before normalization.
pub fn renormalize_raw(c: &Cocycle, n: usize) -> Result<CommutingPair> {
    let cf = cf_for(c, n)?;
    renormalize_with(c, &cf, n)
}

fn renormalize_with(c: &Cocycle, cf: &CFData, n: usize) -> Result<CommutingPair> {
    let ni = n as isize;
    let sign = |m: isize| if m.rem_euclid(2) == 0 { 1 } else { -1 };
    let beta = cf.beta_signed(ni - 1);
    let arc = Arc::new(c.clone());
    let m1 = LineMap { cocycle: arc.clone(), word: sign(ni - 1) * cf.q_signed(ni - 1), scale: beta };
    let m2 = LineMap { cocycle: arc, word: sign(ni) * cf.q_signed(ni), scale: beta };
    let gamma2 = if n == 0 { c.alpha } else { cf.alpha_n[n] };
    let mut pair = CommutingPair { gamma: [1.0, gamma2], maps: [m1, m2], n, commutation_residual: 0.0 };
    pair.commutation_residual = pair.commutation_defect();
    if pair.commutation_residual > 1e-8 {
        return Err(Error::Assertion(format!("commutation residual {:.2e}", pair.commutation_residual)));
    }
    Ok(pair)
}

/// A map `B` with `B(x+1) M₁(x) B(x)⁻¹ = I`.
#[derive(Debug, Clone)]
pub enum Normalizer {
    /// `B(x) = exp(−P(x²−x)/2 − Qx)` for `M₁(x) = exp(Px + Q)` with `[P, Q] = 0`.
    Closed { p: AlgVec, q: AlgVec },
    Numeric(NumericNormalizer),
}

impl Normalizer {
    pub fn eval(&self, x: f64) -> RMat {
        match self {
            Normalizer::Closed { p, q } => {
                let v = -(0.5 * (x * x - x)) * *p - x * *q;
                *alg_exp(v).matrix()
            }
            Normalizer::Numeric(n) => n.eval(x),
        }
    }
}

/// Sigmoid-telescoped Newton normalizer, evaluated on integer lattices `x + ℤ`.
#[derive(Debug, Clone)]
pub struct NumericNormalizer {
    m1: LineMap,
    /// Commuting seed `exp(−P(x²−x)/2 − Qx)`.
    p: AlgVec,
    q: AlgVec,
    sigma: f64,
    pub layers: usize,
}

fn sigmoid(t: f64, sigma: f64) -> f64 {
    let s = t / sigma;
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

struct Lattice<'a> {
    nz: &'a NumericNormalizer,
    x: f64,
    reach: i64,
    m1: HashMap<i64, RMat>,
    b: Vec<HashMap<i64, RMat>>,
    r: Vec<HashMap<i64, AlgVec>>,
}

impl<'a> Lattice<'a> {
    fn new(nz: &'a NumericNormalizer, x: f64) -> Self {
        let reach = (40.0 * nz.sigma).ceil() as i64 + 1;
        Lattice {
            nz,
            x,
            reach,
            m1: HashMap::new(),
            b: vec![HashMap::new(); nz.layers + 1],
            r: vec![HashMap::new(); nz.layers + 1],
        }
    }

    fn y(&self, m: i64) -> f64 {
        self.x + m as f64
    }

    fn m1(&mut self, m: i64) -> RMat {
        if let Some(v) = self.m1.get(&m) {
            return *v;
        }
        let v = self.nz.m1.eval_real(self.y(m));
        self.m1.insert(m, v);
        v
    }

    fn b(&mut self, k: usize, m: i64) -> RMat {
        if let Some(v) = self.b[k].get(&m) {
            return *v;
        }
        let v = if k == 0 {
            let y = self.y(m);
            *alg_exp(-(0.5 * (y * y - y)) * self.nz.p - y * self.nz.q).matrix()
        } else {
            let e = self.e(k - 1, m);
            alg_exp(e).matrix() * self.b(k - 1, m)
        };
        self.b[k].insert(m, v);
        v
    }

    fn r(&mut self, k: usize, m: i64) -> AlgVec {
        if let Some(v) = self.r[k].get(&m) {
            return *v;
        }
        let res = self.b(k, m + 1) * self.m1(m) * self.b(k, m).transpose();
        let v = rot_log(&Rot::new(res)).unwrap_or_else(|_| AlgVec::from_matrix(&res));
        self.r[k].insert(m, v);
        v
    }

    /// Solves `e(y+1) − e(y) = −r(y)` by two-sided telescoping.
    fn e(&mut self, k: usize, m: i64) -> AlgVec {
        let sigma = self.nz.sigma;
        let y = self.y(m);
        let mut acc = AlgVec::ZERO;
        let mut j = 0i64;
        while y - (j as f64) > -(self.reach as f64) {
            let w = sigmoid(y - j as f64, sigma);
            acc = acc - w * self.r(k, m - j - 1);
            j += 1;
        }
        let mut j = 1i64;
        while y + (j as f64) < self.reach as f64 {
            let w = 1.0 - sigmoid(y + j as f64, sigma);
            acc = acc + w * self.r(k, m + j - 1);
            j += 1;
        }
        acc
    }
}

impl NumericNormalizer {
    pub fn eval(&self, x: f64) -> RMat {
        Lattice::new(self, x).b(self.layers, 0)
    }

    /// `‖B(x+1)M₁(x)B(x)⁻¹ − I‖` at `x`.
    fn residual_at(&self, x: f64) -> f64 {
        let mut l = Lattice::new(self, x);
        let b1 = l.b(self.layers, 1);
        let b0 = l.b(self.layers, 0);
        (b1 * l.m1(0) * b0.transpose() - RMat::identity()).norm()
    }
}

fn residual_grid() -> Vec<f64> {
    let (lo, hi) = WINDOW;
    (0..25).map(|i| lo + (hi - lo) * i as f64 / 24.0).collect()
}

/// Fits `log M₁(x) ≈ Px + Q` along a hinted log path on `[0, 1]`.
fn linear_log_fit(m1: &LineMap) -> Result<(AlgVec, AlgVec)> {
    let k = 33;
    let mut path = Vec::with_capacity(k);
    let mut prev = AlgVec::ZERO;
    for i in 0..k {
        let x = i as f64 / (k - 1) as f64;
        let m = m1.eval_real(x);
        prev = rot_log_hint(&Rot::new(m), prev).map_err(|_| Error::NotNearIdentity { distance: (m - RMat::identity()).norm() })?;
        path.push((x, prev));
    }
    let a0 = path[0].1;
    let mx = 0.5;
    let sxx: f64 = path.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let mean = (1.0 / k as f64) * path.iter().fold(AlgVec::ZERO, |s, (_, a)| s + *a);
    let p = (1.0 / sxx) * path.iter().fold(AlgVec::ZERO, |s, (x, a)| s + (x - mx) * (*a - mean));
    if p.norm() < 0.5 {
        return Ok((AlgVec::ZERO, a0));
    }
    let axis = (1.0 / p.norm()) * p;
    let q = mean - mx * p;
    Ok((p, q.dot(&axis) * axis))
}

/// Numerical normalizer for the first generator: commuting seed, then telescoped Newton layers.
pub fn numeric_normalizer(pair: &CommutingPair, tol: f64, strip: f64) -> Result<NumericNormalizer> {
    let (p, q) = linear_log_fit(&pair.maps[0])?;
    let sigma = 1.1 * strip.max(0.05) / PI;
    let mut nz = NumericNormalizer { m1: pair.maps[0].clone(), p, q, sigma, layers: 0 };
    let xs = residual_grid();
    let eval_res = |nz: &NumericNormalizer| xs.par_iter().map(|&x| nz.residual_at(x)).reduce(|| 0.0, f64::max);
    let mut res = eval_res(&nz);
    if res > 0.5 {
        return Err(Error::NotNearIdentity { distance: res });
    }
    while res >= tol {
        if nz.layers >= 10 {
            return Err(Error::NoConvergence { residual: res });
        }
        nz.layers += 1;
        let next = eval_res(&nz);
        if next > 0.5 * res && next >= tol {
            return Err(Error::NoConvergence { residual: next });
        }
        res = next;
    }
    Ok(nz)
}

/// `(α_n, Ã)` with `Ã(x) = B(x+γ₂) M₂(x) B(x)⁻¹` fitted as a 1-periodic polynomial.
#[derive(Debug, Clone)]
pub struct Representative {
    pub n: usize,
    pub alpha_n: f64,
    pub a: TrigPoly1<CMat>,
    pub normalizer: Normalizer,
    pub fit: FitDiag,
    pub h: f64,
    pub periodicity_defect: f64,
    pub normalization_residual: f64,
    pub commutation_residual: f64,
    alpha_spec: AlphaSpec,
}

impl Representative {
    pub fn to_cocycle(&self) -> Cocycle {
        Cocycle::new_unchecked(self.alpha_spec.clone(), self.alpha_n, self.a.clone(), self.h)
    }

    /// Sup of `‖Ã − Ã(0)‖` over `[0,1)`, sampled at 64 points.
    pub fn nonconstant_part(&self) -> f64 {
        let a0 = self.a.eval_real(0.0);
        (0..64).map(|i| (self.a.eval_real(i as f64 / 64.0) - a0).norm()).fold(0.0, f64::max)
    }
}

fn rep_alpha_spec(cf: &CFData, n: usize) -> AlphaSpec {
    let mut q = vec![0u64];
    q.extend_from_slice(&cf.a[(n + 1).min(cf.a.len())..]);
    AlphaSpec::Cf { quotients: q, period: None }
}

/// Normalizes `pair` with `B`, fitting `Ã` at cutoffs 64, 128, … until the tail indicator is below `1e−10`.
pub fn normalize_with(pair: &CommutingPair, normalizer: Normalizer, fit_cutoff: Option<usize>) -> Result<Representative> {
    let g2 = pair.gamma[1];
    let atilde = |x: f64| -> CMat {
        let b0 = normalizer.eval(x);
        let b1 = normalizer.eval(x + g2);
        cmat_from_real(&(b1 * pair.maps[1].eval_real(x) * b0.transpose()))
    };
    let normalization_residual = residual_grid()
        .par_iter()
        .map(|&x| {
            let r = normalizer.eval(x + 1.0) * pair.maps[0].eval_real(x) * normalizer.eval(x).transpose();
            (r - RMat::identity()).norm()
        })
        .reduce(|| 0.0, f64::max);
    let periodicity_defect = (0..16)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 / 16.0 - 0.5;
            (atilde(x + 1.0) - atilde(x)).norm()
        })
        .reduce(|| 0.0, f64::max);
    if periodicity_defect > 1e-8 {
        return Err(Error::Assertion(format!("representative periodicity defect {periodicity_defect:.2e}")));
    }
    let c = &pair.maps[0].cocycle;
    let beta = pair.maps[0].scale;
    let h = (c.h / beta).min(1.0);
    let mut cutoff = fit_cutoff.unwrap_or(64);
    let (poly, diag) = loop {
        let m = 4 * cutoff;
        let samples: Vec<CMat> = (0..m).into_par_iter().map(|i| atilde(i as f64 / m as f64)).collect();
        let (mut poly, diag) = TrigPoly1::fit(&samples, cutoff, h)?;
        poly.real = true;
        poly.symmetrize();
        let top = poly.coefs().iter().map(|c| c.max_abs()).fold(0.0, f64::max);
        poly.trim(1e-13 * top);
        if fit_cutoff.is_some() || diag.aliasing() < 1e-10 || cutoff >= 512 {
            break (poly, diag);
        }
        cutoff *= 2;
    };
    let cf = cf_for(c, pair.n)?;
    Ok(Representative {
        n: pair.n,
        alpha_n: g2,
        a: poly,
        normalizer,
        fit: diag,
        h,
        periodicity_defect,
        normalization_residual,
        commutation_residual: pair.commutation_residual,
        alpha_spec: rep_alpha_spec(&cf, pair.n),
    })
}

/// Numerical normalization; requires `M₁` near a constant on the window.
pub fn normalize(pair: &CommutingPair, tol: f64) -> Result<Representative> {
    let strip = pair.maps[0].cocycle.h.min(0.2);
    let nz = numeric_normalizer(pair, tol, strip)?;
    normalize_with(pair, Normalizer::Numeric(nz), None)
}

/// Closed-form normalizer when `c` is tagged as `exp(2π(dx + c0) J1)`.
pub fn closed_normalizer(c: &Cocycle, pair: &CommutingPair) -> Option<Normalizer> {
    let (d, c0) = c.nf_tag?;
    let dd = AlgVec::j1(2.0 * PI * d as f64);
    let cc = AlgVec::j1(2.0 * PI * c0);
    let b1 = pair.maps[0].word as f64;
    let beta = pair.maps[0].scale;
    // A_b(y) = exp(bDy + b(b−1)αD/2 + bC)
    let p = (b1 * beta) * dd;
    let q = (b1 * (b1 - 1.0) * c.alpha / 2.0) * dd + b1 * cc;
    Some(Normalizer::Closed { p, q })
}

/// Representative of the `n`-th renormalization.
pub fn representative(c: &Cocycle, n: usize, fit_cutoff: Option<usize>) -> Result<Representative> {
    let pair = renormalize_raw(c, n)?;
    match closed_normalizer(c, &pair) {
        Some(nz) => normalize_with(&pair, nz, fit_cutoff),
        None => {
            let strip = c.h.min(0.2);
            let nz = numeric_normalizer(&pair, 1e-11, strip)?;
            normalize_with(&pair, Normalizer::Numeric(nz), fit_cutoff)
        }
    }
}

/// Closed-form renormalization of `exp(2π(dx + c0) J1)`: `(G(α), exp(−Dx − D(1/(2α) + 1/2) − C/α))`.
///
/// Returns the new frequency, the new `(d, c0)` and the polynomial.
pub fn normalform_renorm_closed(alpha: f64, d: i64, c0: f64, h: f64) -> (f64, (i64, f64), TrigPoly1<CMat>) {
    let ga = (1.0 / alpha).fract();
    let c1 = -(d as f64) * (1.0 / (2.0 * alpha) + 0.5) - c0 / alpha;
    let c1 = c1.rem_euclid(1.0);
    (ga, (-d, c1), normal_form_poly(-d, c1, h))
}

/// Sup distance on `T` from `rep` to `exp(2π(dx + c0 + kα_n)J1)`, minimized over `|k| ≤ kmax`.
///
/// Conjugating by `exp(2πkxJ1)` moves `c0` by `kα_n`, so representatives of
/// deep renormalizations match the iterated closed form only up to such a shift.
pub fn closed_form_distance(rep: &Representative, d: i64, c0: f64, kmax: i64) -> (i64, f64) {
    let xs: Vec<f64> = (0..256).map(|i| i as f64 / 256.0).collect();
    let vals: Vec<CMat> = xs.iter().map(|&x| rep.a.eval_real(x)).collect();
    (-kmax..=kmax)
        .into_par_iter()
        .map(|k| {
            let poly = normal_form_poly(d, (c0 + k as f64 * rep.alpha_n).rem_euclid(1.0), rep.h);
            let dist = xs.iter().zip(&vals).map(|(&x, v)| (v - poly.eval_real(x)).norm()).fold(0.0, f64::max);
            (k, dist)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.abs().cmp(&b.0.abs())))
        .unwrap_or((0, f64::INFINITY))
}

/// `max_i max(|γᵢ − γᵢ'|, sup ‖Mᵢ − Mᵢ'‖)` on `[lo, hi] × i[−h, h]`.
pub fn pair_distance(p1: &CommutingPair, p2: &CommutingPair, h: f64, window: (f64, f64)) -> f64 {
    let pts: Vec<C64> = (0..17)
        .flat_map(|i| {
            let x = window.0 + (window.1 - window.0) * i as f64 / 16.0;
            [-1.0, -0.5, 0.0, 0.5, 1.0].map(move |t| C64::new(x, t * h))
        })
        .collect();
    let mut d: f64 = 0.0;
    for g in 0..2 {
        d = d.max((p1.gamma[g] - p2.gamma[g]).abs());
        let s = pts
            .par_iter()
            .map(|&z| (p1.maps[g].eval(z) - p2.maps[g].eval(z)).norm())
            .reduce(|| 0.0, f64::max);
        d = d.max(s);
    }
    d
}

/// `(L¹(α_n, Ã_ε), L¹(α, A_{β_{n−1}ε}) / β_{n−1})`.
pub fn accel_scaling_check(c: &Cocycle, rep: &Representative, eps: f64, iters: usize, grid: usize) -> Result<(f64, f64)> {
    let cf = cf_for(c, rep.n)?;
    let beta = cf.beta_signed(rep.n as isize - 1);
    let lhs = lyapunov(&rep.to_cocycle(), 1, eps, iters, grid)?.0;
    let rhs = lyapunov(c, 1, beta * eps, iters, grid)?.0 / beta;
    Ok((lhs, rhs))
}

/// Hinted log helper used to track the constant part of a representative.
pub fn constant_part(rep: &Representative) -> Result<AlgVec> {
    let m = real_part(&rep.a.get(0));
    rot_log_hint(&Rot::new(m), AlgVec::ZERO)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::{acceleration, default_eps_grid, random_perturbation};
    use crate::fourier::exp_of;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn golden() -> AlphaSpec {
        AlphaSpec::golden()
    }

    fn sup_dist(a: &TrigPoly1<CMat>, b: &TrigPoly1<CMat>) -> f64 {
        (0..1000).map(|i| (a.eval_real(i as f64 / 1000.0) - b.eval_real(i as f64 / 1000.0)).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn raw_pair_examples() {
        let c = Cocycle::normal_form(golden(), 1, 0.2, 0.2).unwrap();
        let p0 = renormalize_raw(&c, 0).unwrap();
        assert_eq!((p0.maps[0].word, p0.maps[1].word), (0, 1));
        assert_eq!(p0.gamma, [1.0, c.alpha]);
        let z = C64::new(0.3, 0.01);
        assert!((p0.m2(z) - c.eval(z)).norm() < 1e-15);
        let p1 = renormalize_raw(&c, 1).unwrap();
        assert_eq!((p1.maps[0].word.abs(), p1.maps[1].word.abs()), (1, 1));
        let g = (1.0 / c.alpha).fract();
        assert!((p1.gamma[1] - g).abs() < 1e-14);
        assert!(p1.commutation_residual < 1e-12);
        // second map in closed form: A_{-1}(αx) = exp(−(Dα(x−1) + C))
        let x = 0.37;
        let want = alg_exp(-(AlgVec::j1(2.0 * PI * c.alpha * (x - 1.0)) + AlgVec::j1(2.0 * PI * 0.2)));
        assert!((p1.maps[1].eval_real(x) - want.matrix()).norm() < 1e-13);
        for n in 2..7 {
            let p = renormalize_raw(&c, n).unwrap();
            assert!(p.commutation_residual < 1e-10, "{n}");
        }
    }

    #[test]
    fn word_refactoring_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let phi = random_perturbation(&mut rng, 5, 0.3, 0.05, 0.2);
        let c = Cocycle::perturbed_normal_form(golden(), 1, 0.1, &phi, 0.2).unwrap();
        let p = renormalize_raw(&c, 5).unwrap();
        for g in &p.maps {
            for k in [-3, 0, 2, 7] {
                let z = C64::new(0.4, 0.02);
                assert!((g.eval(z) - g.eval_split(z, k)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn normalize_trivial_and_constant() {
        let c = Cocycle::normal_form(golden(), 0, 0.3, 0.2).unwrap();
        // n = 0: M₁ ≡ I
        let p0 = renormalize_raw(&c, 0).unwrap();
        let mut c_untagged = c.clone();
        c_untagged.nf_tag = None;
        let r0 = normalize(&renormalize_raw(&c_untagged, 0).unwrap(), 1e-12).unwrap();
        assert!(sup_dist(&r0.a, &c.a) < 1e-12);
        if let Normalizer::Numeric(nz) = &r0.normalizer {
            assert_eq!(nz.layers, 0);
        }
        // constant M₁ = exp(a): B(x) = exp(−x a)
        let p1 = renormalize_raw(&c_untagged, 1).unwrap();
        let nz = numeric_normalizer(&p1, 1e-12, 0.2).unwrap();
        let a = rot_log(&Rot::new(p1.maps[0].eval_real(0.0))).unwrap();
        for x in [-0.7, 0.2, 1.4] {
            assert!((nz.eval(x) - alg_exp(-x * a).matrix()).norm() < 1e-12);
        }
        let _ = p0;
    }

    #[test]
    fn closed_normalizer_identity() {
        for d in [1i64, 2, -1] {
            let c = Cocycle::normal_form(golden(), d, 0.3, 0.2).unwrap();
            let pair = renormalize_raw(&c, 1).unwrap();
            let nz = closed_normalizer(&c, &pair).unwrap();
            // Υ(αx) = J(x+1)⁻¹ J(x) with Υ = A
            for i in 0..1000 {
                let x = -1.0 + 3.0 * i as f64 / 1000.0;
                let lhs = real_part(&c.eval(C64::new(c.alpha * x, 0.0)));
                let rhs = nz.eval(x + 1.0).transpose() * nz.eval(x);
                assert!((lhs - rhs).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn deep_representatives_match_up_to_shift() {
        let c = Cocycle::normal_form(golden(), 1, 0.3, 0.2).unwrap();
        let (mut a, mut d, mut c0) = (c.alpha, 1, 0.3);
        let mut shifts = Vec::new();
        for n in 1..=6 {
            (a, (d, c0), _) = normalform_renorm_closed(a, d, c0, 0.2);
            let rep = representative(&c, n, None).unwrap();
            let (k, dist) = closed_form_distance(&rep, d, c0, 64);
            assert!(dist < 1e-6, "n={n}: {dist:e}");
            shifts.push(k);
        }
        assert_eq!(&shifts[..3], &[0, 0, 0]);
        assert_eq!(&shifts[3..], &[-2, -7, -19]);
    }

    #[test]
    fn representative_matches_closed_form() {
        let h = 0.2;
        let c = Cocycle::normal_form(golden(), 1, 0.3, h).unwrap();
        let rep = representative(&c, 1, None).unwrap();
        let (ga, (d1, _), closed) = normalform_renorm_closed(c.alpha, 1, 0.3, h);
        assert!((rep.alpha_n - ga).abs() < 1e-14);
        assert_eq!(d1, -1);
        assert!(sup_dist(&rep.a, &closed) < 1e-6);
        assert!(rep.periodicity_defect < 1e-8);
        let (_, (dd, _), _) = normalform_renorm_closed(ga, d1, 0.1, h);
        assert_eq!(dd, 1);
        let (g0, (d0, c0), p) = normalform_renorm_closed(c.alpha, 0, 0.25, h);
        assert!((g0 - ga).abs() < 1e-15);
        assert_eq!(d0, 0);
        assert!((c0 - (-0.25 / c.alpha).rem_euclid(1.0)).abs() < 1e-15);
        assert_eq!(p.cutoff(), 0);
    }

    #[test]
    fn representative_keeps_acceleration() {
        let h = 0.2;
        let c = Cocycle::normal_form(golden(), 1, 0.3, h).unwrap();
        let rep = representative(&c, 2, None).unwrap();
        let rc = rep.to_cocycle();
        let r = acceleration(&rc, &default_eps_grid(rep.h.min(0.2)), 800, 8).unwrap();
        assert_eq!(r.snapped, vec![1, 0, -1]);
    }

    #[test]
    fn scaling_check_normal_form() {
        let c = Cocycle::normal_form(golden(), 1, 0.3, 0.2).unwrap();
        let rep0 = representative(&c, 0, None).unwrap();
        let (l0, r0) = accel_scaling_check(&c, &rep0, 0.05, 500, 8).unwrap();
        assert!((l0 - r0).abs() < 1e-12);
        let rep = representative(&c, 1, None).unwrap();
        let (l, r) = accel_scaling_check(&c, &rep, 0.05, 1000, 8).unwrap();
        assert!((l - r).abs() < 0.02 * r.abs(), "{l} {r}");
        assert!((l - 2.0 * PI * 0.05).abs() < 1e-3);
    }

    #[test]
    fn degree_zero_representatives_flatten() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = 0.2;
        let phi = random_perturbation(&mut rng, 5, 0.3, 0.01, h);
        let c = Cocycle::perturbed_normal_form(golden(), 0, 0.3, &phi, h).unwrap();
        let mut parts = vec![];
        for n in [1usize, 3, 5] {
            let rep = representative(&c, n, None).unwrap();
            assert!(rep.normalization_residual < 1e-9, "{}", rep.normalization_residual);
            parts.push(rep.nonconstant_part());
        }
        assert!(parts[2] < parts[0], "{parts:?}");
    }

    #[test]
    fn distance_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mk = |rng: &mut ChaCha8Rng| {
            let phi = random_perturbation(rng, 3, 0.3, 0.05, 0.2);
            let c = Cocycle::perturbed_normal_form(golden(), 1, 0.2, &phi, 0.2).unwrap();
            renormalize_raw(&c, 1).unwrap()
        };
        let (a, b, cc) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let w = (-0.5, 1.0);
        assert_eq!(pair_distance(&a, &a, 0.05, w), 0.0);
        assert!(pair_distance(&a, &cc, 0.05, w) <= pair_distance(&a, &b, 0.05, w) + pair_distance(&b, &cc, 0.05, w) + 1e-14);
    }

    #[test]
    fn conjugate_cocycles_same_representative_snaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let h = 0.2;
        let c = Cocycle::normal_form(golden(), 1, 0.3, h).unwrap();
        let bpoly = exp_of(&random_perturbation(&mut rng, 3, 0.3, 0.02, h));
        let cb = c.conjugate(&bpoly).unwrap();
        let r1 = representative(&c, 1, None).unwrap();
        let r2 = representative(&cb, 1, None).unwrap();
        let a1 = acceleration(&r1.to_cocycle(), &default_eps_grid(0.1), 800, 8).unwrap();
        let a2 = acceleration(&r2.to_cocycle(), &default_eps_grid(0.1), 800, 8).unwrap();
        assert_eq!(a1.snapped, a2.snapped);
    }
}
