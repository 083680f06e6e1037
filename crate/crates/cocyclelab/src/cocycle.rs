//! Quasi-periodic SO(3) cocycles and their conjugacy invariants.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra3::{basis, cmat_from_real, compound2, op_norm, AlgVec, CAlg, CMat, C64};
use crate::arithmetic::AlphaSpec;
use crate::error::{Error, Result};
use crate::fourier::{exp_of, product, Coef, TrigPoly1};

const RESCALE_EVERY: usize = 32;
pub const SNAP_THRESHOLD: f64 = 0.25;

/// `(x, v) ↦ (x + α, A(x) v)`.
#[derive(Debug, Clone)]
pub struct Cocycle {
    pub alpha_spec: AlphaSpec,
    pub alpha: f64,
    pub a: TrigPoly1<CMat>,
    pub h: f64,
    /// `(d, c0)` when built as `exp(2π(dx + c0) J1)`.
    pub nf_tag: Option<(i64, f64)>,
    /// `(d, c0)` when built as `exp(2π(dx + c0) J1) · exp(φ)`.
    pub base_tag: Option<(i64, f64)>,
    flat: Vec<[C64; 9]>,
    da: Vec<[C64; 9]>,
}

impl Cocycle {
    /// Wraps `a`, checking orthogonality on a 256-point grid to `1e-10`.
    pub fn new(alpha_spec: AlphaSpec, a: TrigPoly1<CMat>, h: f64) -> Result<Self> {
        let alpha = alpha_spec.to_f64()?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Input(format!("frequency {alpha} outside (0,1)")));
        }
        let c = Self::new_unchecked(alpha_spec, alpha, a, h);
        let defect = c.orthogonality_defect(256);
        if defect > 1e-10 {
            return Err(Error::Input(format!("cocycle is not SO(3)-valued (defect {defect:.2e})")));
        }
        Ok(c)
    }

    pub fn new_unchecked(alpha_spec: AlphaSpec, alpha: f64, a: TrigPoly1<CMat>, h: f64) -> Self {
        let flat = flatten(&a);
        let da = flatten(&a.derivative());
        Cocycle { alpha_spec, alpha, a, h, nf_tag: None, base_tag: None, flat, da }
    }

    /// `exp(2π(dx + c0) J1)`.
    pub fn normal_form(alpha_spec: AlphaSpec, d: i64, c0: f64, h: f64) -> Result<Self> {
        let mut c = Self::new(alpha_spec, normal_form_poly(d, c0, h), h)?;
        c.nf_tag = Some((d, c0));
        c.base_tag = Some((d, c0));
        Ok(c)
    }

    /// `exp(2π(dx + c0) J1) · exp(φ(x))`.
    pub fn perturbed_normal_form(alpha_spec: AlphaSpec, d: i64, c0: f64, phi: &TrigPoly1<CAlg>, h: f64) -> Result<Self> {
        let mut a = product(&normal_form_poly(d, c0, h), &exp_of(phi));
        a.h = h;
        a.symmetrize();
        let mut c = Self::new(alpha_spec, a, h)?;
        c.base_tag = Some((d, c0));
        Ok(c)
    }

    pub fn orthogonality_defect(&self, grid: usize) -> f64 {
        (0..grid)
            .map(|j| {
                let m = self.eval(C64::new(j as f64 / grid as f64, 0.0));
                let r = m.map(|z| z.re);
                let im = m.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
                (r.transpose() * r - nalgebra::Matrix3::identity()).norm().max(im)
            })
            .fold(0.0, f64::max)
    }

    #[inline]
    pub fn eval(&self, z: C64) -> CMat {
        eval_flat(&self.flat, z)
    }

    #[inline]
    pub fn eval_derivative(&self, z: C64) -> CMat {
        eval_flat(&self.da, z)
    }

    /// Complexified copy `x ↦ A(x + iε)`.
    pub fn complexified(&self, eps: f64) -> Cocycle {
        let mut a = self.a.shift_arg(C64::new(0.0, eps));
        a.h = (self.h - eps).max(0.0);
        Self::new_unchecked(self.alpha_spec.clone(), self.alpha, a, a_width(self.h, eps))
    }

    /// `B(x + α) A(x) B(x)⁻¹` for SO(3)-valued `B`.
    pub fn conjugate(&self, b: &TrigPoly1<CMat>) -> Result<Cocycle> {
        let binv = b.map(|m| m.transpose());
        let shifted = b.shift_arg(C64::new(self.alpha, 0.0));
        let mut a = product(&product(&shifted, &self.a), &binv);
        a.h = self.h.min(b.h);
        a.symmetrize();
        Cocycle::new(self.alpha_spec.clone(), a, self.h.min(b.h))
    }
}

fn a_width(h: f64, eps: f64) -> f64 {
    (h - eps).max(0.0)
}

fn flatten(p: &TrigPoly1<CMat>) -> Vec<[C64; 9]> {
    p.coefs().iter().map(|m| std::array::from_fn(|i| m.comp(i))).collect()
}

#[inline]
fn eval_flat(flat: &[[C64; 9]], z: C64) -> CMat {
    let n = (flat.len() / 2) as i64;
    let w = (C64::new(0.0, 2.0 * PI) * z).exp();
    let mut acc = flat[n as usize];
    if n > 0 {
        let winv = (C64::new(0.0, -2.0 * PI) * z).exp();
        let mut wp = C64::new(1.0, 0.0);
        let mut wm = C64::new(1.0, 0.0);
        for k in 1..=n {
            // reseed every 16 powers to keep the recurrence error flat
            if k % 16 == 0 {
                wp = (C64::new(0.0, 2.0 * PI * k as f64) * z).exp();
                wm = (C64::new(0.0, -2.0 * PI * k as f64) * z).exp();
            } else {
                wp *= w;
                wm *= winv;
            }
            let cp = &flat[(n + k) as usize];
            let cm = &flat[(n - k) as usize];
            for i in 0..9 {
                acc[i] += cp[i] * wp + cm[i] * wm;
            }
        }
    }
    CMat::from_fn(|i, j| acc[3 * i + j])
}

/// Fourier series of `exp(2π(dx + c0) J1)`.
pub fn normal_form_poly(d: i64, c0: f64, h: f64) -> TrigPoly1<CMat> {
    let j1 = cmat_from_real(&basis(1));
    let j1sq = j1 * j1;
    let half = C64::new(0.5, 0.0);
    let mut p = TrigPoly1::zeros(d.unsigned_abs() as usize, h);
    // exp(θJ1) = (I + J1²) + sinθ J1 − cosθ J1²
    let phase = crate::fourier::cis(2.0 * PI * c0);
    let plus = (-j1sq * half + j1 * C64::new(0.0, -0.5)) * phase;
    if d == 0 {
        let r = crate::algebra3::alg_exp(AlgVec::j1(2.0 * PI * c0));
        p.set(0, cmat_from_real(r.matrix()));
    } else {
        p.set(0, CMat::identity() + j1sq);
        p.set(d, plus);
        p.set(-d, plus.conj());
    }
    p.real = true;
    p
}

/// `A_n(z) = A(z + (n−1)α) ⋯ A(z)`, with `A_{−n}(z) = A_n(z − nα)⁻¹`.
pub fn iterate(c: &Cocycle, n: i64, z: C64) -> CMat {
    if n >= 0 {
        let mut m = CMat::identity();
        for j in 0..n {
            m = c.eval(z + C64::new(j as f64 * c.alpha, 0.0)) * m;
        }
        m
    } else {
        let m = iterate(c, -n, z + C64::new(n as f64 * c.alpha, 0.0));
        m.try_inverse().expect("cocycle values are invertible")
    }
}

/// `A_n(z)` as `(M, s)` with `A_n = e^s M`, rescaled every 32 factors.
pub fn iterate_scaled(c: &Cocycle, n: usize, z: C64) -> (CMat, f64) {
    let mut m = CMat::identity();
    let mut log = 0.0;
    for j in 0..n {
        m = c.eval(z + C64::new(j as f64 * c.alpha, 0.0)) * m;
        if (j + 1) % RESCALE_EVERY == 0 {
            let s = m.norm();
            m /= C64::new(s, 0.0);
            log += s.ln();
        }
    }
    (m, log)
}

/// `log ‖Λ^k A_n(z)‖` for `k = 1, 2, 3` along one orbit.
fn orbit_log_norms(c: &Cocycle, n: usize, z: C64) -> [f64; 3] {
    let mut m1 = CMat::identity();
    let mut m2 = CMat::identity();
    let (mut l1, mut l2, mut l3) = (0.0, 0.0, 0.0);
    for j in 0..n {
        let a = c.eval(z + C64::new(j as f64 * c.alpha, 0.0));
        m1 = a * m1;
        m2 = compound2(&a) * m2;
        l3 += a.determinant().norm().ln();
        if (j + 1) % RESCALE_EVERY == 0 {
            let s1 = m1.norm();
            m1 /= C64::new(s1, 0.0);
            l1 += s1.ln();
            let s2 = m2.norm();
            m2 /= C64::new(s2, 0.0);
            l2 += s2.ln();
        }
    }
    [l1 + op_norm(&m1).ln(), l2 + op_norm(&m2).ln(), l3]
}

fn grid_point(j: usize, grid: usize) -> f64 {
    j as f64 / grid as f64
}

/// Finite-`n` Lyapunov estimates `L^1, L^2, L^3` at width `ε`, with grid standard errors.
pub fn lyapunov_all(c: &Cocycle, eps: f64, n: usize, grid: usize) -> ([f64; 3], [f64; 3]) {
    let vals: Vec<[f64; 3]> = (0..grid)
        .into_par_iter()
        .map(|j| orbit_log_norms(c, n, C64::new(grid_point(j, grid), eps)))
        .collect();
    let mut mean = [0.0; 3];
    let mut se = [0.0; 3];
    for k in 0..3 {
        let xs: Vec<f64> = vals.iter().map(|v| v[k] / n as f64).collect();
        let m = xs.iter().sum::<f64>() / grid as f64;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (grid.max(2) - 1) as f64;
        mean[k] = m;
        se[k] = (var / grid as f64).sqrt();
    }
    (mean, se)
}

/// `L^k(α, A_ε)` estimate and its standard error.
pub fn lyapunov(c: &Cocycle, k: usize, eps: f64, n: usize, grid: usize) -> Result<(f64, f64)> {
    if !(1..=3).contains(&k) {
        return Err(Error::Input(format!("exterior order {k} not in 1..=3")));
    }
    if n == 0 || grid == 0 {
        return Err(Error::Input("n and grid must be positive".into()));
    }
    let (m, s) = lyapunov_all(c, eps, n, grid);
    Ok((m[k - 1], s[k - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InvariantKind {
    Lyapunov,
    Acceleration,
    Degree,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EstimatorMeta {
    pub n: usize,
    pub grid: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub eps_grid: Vec<f64>,
    /// `L^1, L^2` per ε.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lyapunov_per_eps: Vec<[f64; 2]>,
    /// Fit residuals per ε for `k = 1, 2`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fit_residuals: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_variance: Option<f64>,
}

/// Raw estimate, integer snap and residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub kind: InvariantKind,
    pub raw: Vec<f64>,
    pub snapped: Vec<i64>,
    pub residual: f64,
    /// Snap accepted (`residual < 0.25`).
    pub snap_ok: bool,
    pub meta: EstimatorMeta,
}

impl InvariantReport {
    pub fn new(kind: InvariantKind, raw: Vec<f64>, meta: EstimatorMeta) -> Self {
        let mut raw = raw;
        if kind != InvariantKind::Lyapunov {
            raw.sort_by(|a, b| b.partial_cmp(a).unwrap());
        }
        let mut snapped: Vec<i64> = raw.iter().map(|x| x.round() as i64).collect();
        if kind != InvariantKind::Lyapunov && snapped.len() == 3 {
            // entries sum to zero: ω₃ = −ω₁ − ω₂
            snapped[2] = -snapped[0] - snapped[1];
        }
        let residual = raw.iter().zip(&snapped).map(|(r, s)| (r - *s as f64).abs()).fold(0.0, f64::max);
        InvariantReport { kind, raw, snapped, residual, snap_ok: residual < SNAP_THRESHOLD, meta }
    }
}

/// Default ε-grid: 8 log-spaced points in `[h/16, h/2]`.
pub fn default_eps_grid(h: f64) -> Vec<f64> {
    let (lo, hi) = (h / 16.0, h / 2.0);
    (0..8).map(|i| lo * (hi / lo).powf(i as f64 / 7.0)).collect()
}

/// Least-squares line; returns `(slope, intercept, r2, residuals)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64, Vec<f64>) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let res: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - (icpt + slope * a)).collect();
    let ss_res: f64 = res.iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let scale = y.iter().map(|b| b.abs()).fold(0.0, f64::max).max(1.0);
    let r2 = if ss_tot < 1e-20 * scale * scale { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, icpt, r2, res)
}

/// Acceleration vector from slopes of `L^1, L^2` against `2πε`.
pub fn acceleration(c: &Cocycle, eps_grid: &[f64], n: usize, grid: usize) -> Result<InvariantReport> {
    if eps_grid.len() < 3 {
        return Err(Error::Input("acceleration needs at least 3 ε-points".into()));
    }
    if eps_grid.iter().any(|&e| e <= 0.0 || e > c.h + 1e-12) {
        return Err(Error::Input(format!("ε-grid must lie in (0, {}]", c.h)));
    }
    let ls: Vec<[f64; 2]> = eps_grid
        .iter()
        .map(|&e| {
            let (m, _) = lyapunov_all(c, e, n, grid);
            [m[0], m[1]]
        })
        .collect();
    let x: Vec<f64> = eps_grid.iter().map(|e| 2.0 * PI * e).collect();
    let (s1, _, r1, res1) = linear_fit(&x, &ls.iter().map(|l| l[0]).collect::<Vec<_>>());
    let (s2, _, r2, res2) = linear_fit(&x, &ls.iter().map(|l| l[1]).collect::<Vec<_>>());
    let r2min = r1.min(r2);
    if r2min < 0.99 {
        return Err(Error::PoorFit { r2: r2min });
    }
    let w1 = s1;
    let w2 = s2 - s1;
    let w3 = -w1 - w2;
    let meta = EstimatorMeta {
        n,
        grid,
        eps_grid: eps_grid.to_vec(),
        lyapunov_per_eps: ls,
        fit_residuals: res1.iter().zip(&res2).map(|(a, b)| [*a, *b]).collect(),
        r2: Some([r1, r2]),
        grid_variance: None,
    };
    Ok(InvariantReport::new(InvariantKind::Acceleration, vec![w1, w2, w3], meta))
}

/// Per-point Cesàro-averaged `(1/n) A_n(x)⁻¹ ∂A_n(x)` along the orbit of `x`.
pub fn degree_field(c: &Cocycle, n: usize, x: f64) -> AlgVec {
    let mut frame = nalgebra::Matrix3::<f64>::identity();
    let mut sum = AlgVec::ZERO;
    let mut cesaro = AlgVec::ZERO;
    for j in 0..n {
        let z = C64::new(x + j as f64 * c.alpha, 0.0);
        let a = c.eval(z).map(|w| w.re);
        let da = c.eval_derivative(z).map(|w| w.re);
        let small_a = a.transpose() * da;
        // Ad(A_j(x)⁻¹) a(x + jα)
        let term = AlgVec::from_matrix(&(frame.transpose() * small_a * frame));
        sum = sum + term;
        cesaro = cesaro + (1.0 / (j + 1) as f64) * sum;
        frame = a * frame;
        if (j + 1) % RESCALE_EVERY == 0 {
            frame = crate::algebra3::Rot::new(frame).matrix().to_owned();
        }
    }
    (1.0 / n as f64) * cesaro
}

/// Dynamical degree `(m, 0, −m)` from the grid average of `‖D_n(x)‖/2π`.
pub fn degree(c: &Cocycle, n: usize, grid: usize) -> Result<InvariantReport> {
    if n == 0 || grid == 0 {
        return Err(Error::Input("n and grid must be positive".into()));
    }
    let vals: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|j| degree_field(c, n, grid_point(j, grid)).norm() / (2.0 * PI))
        .collect();
    let m = vals.iter().sum::<f64>() / grid as f64;
    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / grid as f64;
    if var > SNAP_THRESHOLD {
        return Err(Error::SlowConvergence { variance: var });
    }
    let meta = EstimatorMeta { n, grid, grid_variance: Some(var), ..Default::default() };
    Ok(InvariantReport::new(InvariantKind::Degree, vec![m, 0.0, -m], meta))
}

/// Seeded real perturbation with modes `|k| ≤ cutoff`, decay `e^{−2π|k|decay}` and `‖φ‖_h = size`.
pub fn random_perturbation<R: rand::Rng>(rng: &mut R, cutoff: usize, decay: f64, size: f64, h: f64) -> TrigPoly1<CAlg> {
    let mut p = TrigPoly1::zeros(cutoff, h);
    for k in 0..=cutoff as i64 {
        let s = (-2.0 * PI * decay * k as f64).exp();
        let mut v = CAlg::from_comps(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * s);
        if k == 0 {
            v = CAlg::from_comps(|i| C64::new(v.0[i].re, 0.0));
        }
        p.set(k, v);
        p.set(-k, v.conj());
    }
    p.real = true;
    let n = p.sharp_norm_unchecked(h);
    if n > 0.0 {
        p = p.scale(C64::new(size / n, 0.0));
    }
    p
}
