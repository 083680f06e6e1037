//! KAM iteration for linear systems `ẋ = (C + F(θ))x`, `θ̇ = ω` on T².

use std::f64::consts::PI;

use ode_solvers::{Dop853, SVector, System};
use serde::Serialize;

use crate::algebra3::{adjoint_c, alg_exp, cmat_from_real, real_part, rot_log_hint, AlgVec, CAlg, CMat, RMat, Rot, C64};
use crate::arithmetic::{resonant_lattice, CFData};
use crate::error::{Error, Result};
use crate::fourier::{bracket2, diamond, exp_series2, l1, product2, Coef, TrigPoly1, TrigPoly2};

/// Constant part, perturbation and frame of a quasi-periodic linear system.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub alpha: f64,
    pub c: AlgVec,
    pub f: TrigPoly2<CAlg>,
    pub h: f64,
    /// `C = 2πρJ1` once diagonalized.
    pub rho: f64,
    /// Accumulated constant rotation that diagonalized `C`.
    pub frame: RMat,
}

/// `R` with `Ad(R) v = ‖v‖ J1`.
pub fn diagonalizing_rotation(v: AlgVec) -> RMat {
    let n = v.norm();
    if n == 0.0 {
        return RMat::identity();
    }
    let u = (1.0 / n) * v;
    let e1 = AlgVec::new(1.0, 0.0, 0.0);
    // ad_w is the cross product in J-coordinates, so exp(w) rotates about w
    let axis = u.bracket(&e1);
    let s = axis.norm();
    let c = u.dot(&e1);
    if s < 1e-15 {
        if c > 0.0 {
            return RMat::identity();
        }
        return *alg_exp(AlgVec::new(0.0, PI, 0.0)).matrix();
    }
    *alg_exp((s.atan2(c) / s) * axis).matrix()
}

fn ad_const(r: &RMat, f: &TrigPoly2<CAlg>) -> TrigPoly2<CAlg> {
    let rot = Rot::new(*r);
    f.map(|c| adjoint_c(&rot, c))
}

impl LinearSystem {
    /// Builds the system and rotates `C` onto `2πρJ1`.
    pub fn new(alpha: f64, c: AlgVec, f: TrigPoly2<CAlg>, h: f64) -> Self {
        let mut s = LinearSystem { alpha, c, f, h, rho: 0.0, frame: RMat::identity() };
        s.f.real = true;
        s.rediagonalize();
        s
    }

    pub fn omega(&self) -> (f64, f64) {
        (self.alpha, 1.0)
    }

    pub fn eps(&self) -> f64 {
        self.f.log_sharp_norm(self.h).exp()
    }

    /// Rotates the frame so that `C = 2πρJ1`; returns the rotation applied.
    pub fn rediagonalize(&mut self) -> RMat {
        let r = diagonalizing_rotation(self.c);
        let rot = Rot::new(r);
        self.c = crate::algebra3::adjoint(&rot, self.c);
        self.c = AlgVec::new(self.c.a1, 0.0, 0.0);
        self.rho = self.c.a1 / (2.0 * PI);
        self.f = ad_const(&r, &self.f);
        self.frame = r * self.frame;
        r
    }

    /// `C + F` as one series with `C` at mode 0.
    pub fn total(&self) -> TrigPoly2<CAlg> {
        let mut t = self.f.clone();
        t.add_at((0, 0), self.c.complexify());
        t
    }
}

fn dot(k: (i64, i64), omega: (f64, f64)) -> f64 {
    k.0 as f64 * omega.0 + k.1 as f64 * omega.1
}

/// Resonant sets `Λ₁ᶜ`, `Λ₂ᶜ` at smallness `ε`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SplitIndex {
    pub eps: f64,
    pub rho: f64,
    pub omega: (f64, f64),
    /// `2ε^{1/4}`.
    pub thr1: f64,
    /// `ε^{1/4}`.
    pub thr2: f64,
}

impl SplitIndex {
    pub fn new(eps: f64, rho: f64, omega: (f64, f64)) -> Self {
        let e4 = eps.powf(0.25);
        SplitIndex { eps, rho, omega, thr1: 2.0 * e4, thr2: e4 }
    }

    pub fn in_lambda1(&self, k: (i64, i64)) -> bool {
        dot(k, self.omega).abs() >= self.thr1
    }

    pub fn in_lambda2(&self, k: (i64, i64)) -> bool {
        (dot(k, self.omega) - self.rho).abs() >= self.thr2
    }

    /// `w̄` at `k` pairs with `w` at `−k`.
    fn in_lambda2_bar(&self, k: (i64, i64)) -> bool {
        (dot(k, self.omega) + self.rho).abs() >= self.thr2
    }

    /// `Λ₁ᶜ` and `Λ₂ᶜ` inside the ball `|k| < radius`.
    pub fn resonant_sets(&self, radius: f64) -> (Vec<(i64, i64)>, Vec<(i64, i64)>) {
        let n = radius.ceil().max(1.0) as usize;
        let ball: Vec<_> = diamond(n).filter(|&k| (l1(k) as f64) < radius).collect();
        let l1c = ball.iter().copied().filter(|&k| !self.in_lambda1(k)).collect();
        let l2c = ball.iter().copied().filter(|&k| !self.in_lambda2(k)).collect();
        (l1c, l2c)
    }
}

fn w_parts(c: &CAlg) -> (C64, C64) {
    let i = C64::new(0.0, 1.0);
    (c.0[1] + i * c.0[2], c.0[1] - i * c.0[2])
}

fn from_w_parts(f: C64, w: C64, wb: C64) -> CAlg {
    let i = C64::new(0.0, 1.0);
    CAlg::new(f, (w + wb) * 0.5, (w - wb) / (2.0 * i))
}

/// Partition `F = F_nre + F_re` by `Λ₁` for the J1-part and `Λ₂` for the `w = f₂ + i f₃` part.
pub fn split(f: &TrigPoly2<CAlg>, eps: f64, rho: f64, omega: (f64, f64)) -> (TrigPoly2<CAlg>, TrigPoly2<CAlg>) {
    let idx = SplitIndex::new(eps, rho, omega);
    let mut nre = TrigPoly2::zeros(f.cutoff(), f.h);
    let mut re = TrigPoly2::zeros(f.cutoff(), f.h);
    nre.real = f.real;
    re.real = f.real;
    let zero = C64::new(0.0, 0.0);
    for (k, c) in f.nonzero_modes() {
        let f1 = c.0[0];
        let (fn1, fr1) = if idx.in_lambda1(k) { (f1, zero) } else { (zero, f1) };
        let a = idx.in_lambda2(k);
        let b = idx.in_lambda2_bar(k);
        let (n_c, r_c) = if a == b {
            let pair = (c.0[1], c.0[2]);
            if a {
                (CAlg::new(fn1, pair.0, pair.1), CAlg::new(fr1, zero, zero))
            } else {
                (CAlg::new(fn1, zero, zero), CAlg::new(fr1, pair.0, pair.1))
            }
        } else {
            let (w, wb) = w_parts(&c);
            if a {
                (from_w_parts(fn1, w, zero), from_w_parts(fr1, zero, wb))
            } else {
                (from_w_parts(fn1, zero, wb), from_w_parts(fr1, w, zero))
            }
        };
        nre.set(k, n_c);
        re.set(k, r_c);
    }
    (nre, re)
}

/// Solves `∂_ω Y − [C, Y] = F_nre` for `C = 2πρJ1`.
pub fn homological_solve(f_nre: &TrigPoly2<CAlg>, rho: f64, omega: (f64, f64), eps: f64) -> Result<TrigPoly2<CAlg>> {
    let idx = SplitIndex::new(eps, rho, omega);
    let mut y = TrigPoly2::zeros(f_nre.cutoff(), f_nre.h);
    y.real = f_nre.real;
    let zero = C64::new(0.0, 0.0);
    for (k, c) in f_nre.nonzero_modes() {
        let kw = dot(k, omega);
        let f1 = if c.0[0] != zero {
            if kw.abs() < 0.9 * idx.thr1 {
                return Err(Error::DivisorUnderflow { k, divisor: kw.abs(), threshold: idx.thr1 });
            }
            c.0[0] / C64::new(0.0, 2.0 * PI * kw)
        } else {
            zero
        };
        let (w, wb) = w_parts(&c);
        let w_y = if w != zero {
            let d = kw - rho;
            if d.abs() < 0.9 * idx.thr2 {
                return Err(Error::DivisorUnderflow { k, divisor: d.abs(), threshold: idx.thr2 });
            }
            w / C64::new(0.0, 2.0 * PI * d)
        } else {
            zero
        };
        let wb_y = if wb != zero {
            let d = kw + rho;
            if d.abs() < 0.9 * idx.thr2 {
                return Err(Error::DivisorUnderflow { k, divisor: d.abs(), threshold: idx.thr2 });
            }
            wb / C64::new(0.0, 2.0 * PI * d)
        } else {
            zero
        };
        y.set(k, from_w_parts(f1, w_y, wb_y));
    }
    if y.real {
        y.symmetrize();
    }
    Ok(y)
}

/// `∂_ω Y − [C, Y]`.
pub fn homological_operator(y: &TrigPoly2<CAlg>, c: AlgVec, omega: (f64, f64)) -> TrigPoly2<CAlg> {
    let cc = TrigPoly2::constant(c.complexify(), y.h);
    let br = bracket2(&cc, y, None);
    &y.derivative_along(omega) - &br
}

/// `Ad(e^Y) X + ∂_ω(e^Y) e^{−Y}` by Lie series in coefficient space.
pub fn lie_conjugate(x: &TrigPoly2<CAlg>, y: &TrigPoly2<CAlg>, omega: (f64, f64), h: f64, cap: usize) -> TrigPoly2<CAlg> {
    let floor = x.log_sharp_norm(h).max(y.log_sharp_norm(h)) + (1e-19f64).ln();
    let mut acc = x.clone();
    let mut t = x.clone();
    for m in 1..40 {
        t = &bracket2(y, &t, Some(cap)) * C64::new(1.0 / m as f64, 0.0);
        acc = &acc + &t;
        if t.log_sharp_norm(h) < floor {
            break;
        }
    }
    let mut u = y.derivative_along(omega);
    acc = &acc + &u;
    for j in 1..40 {
        u = &bracket2(y, &u, Some(cap)) * C64::new(1.0 / (j + 1) as f64, 0.0);
        acc = &acc + &u;
        if u.log_sharp_norm(h) < floor {
            break;
        }
    }
    acc.real = x.real && y.real;
    acc
}

/// Relative weight below which coefficients are dropped; far under the round-off floor.
const TRIM_REL: f64 = 1e-20;

fn mean_split(total: TrigPoly2<CAlg>) -> (AlgVec, TrigPoly2<CAlg>) {
    let m = total.get((0, 0));
    let c = m.re();
    let mut f = total;
    f.set((0, 0), CAlg::from_comps(|i| C64::new(0.0, m.0[i].im)));
    (c, f)
}

/// `(B(C+F) + ∂_ωB) B⁻¹` for SO(3)-valued `B`; the mean mode becomes `C₊`.
///
/// The frame is left unchanged and `ρ` is set to `‖C₊‖/2π`.
pub fn conjugate_system(sys: &LinearSystem, b: &TrigPoly2<CMat>) -> LinearSystem {
    let omega = sys.omega();
    let x = sys.total().map(|c| c.matrix());
    let bt = b.map(|m| m.transpose());
    let bx = product2(b, &x, None);
    let sum = &bx + &b.derivative_along(omega);
    let out = product2(&sum, &bt, None);
    let mut total = out.map(CAlg::from_cmat);
    total.real = sys.f.real;
    let (c, f) = mean_split(total);
    LinearSystem { alpha: sys.alpha, c, f, h: sys.h, rho: c.norm() / (2.0 * PI), frame: sys.frame }
}

/// Outcome of the non-resonant elimination.
#[derive(Debug, Clone)]
pub struct NreOutcome {
    pub sys: LinearSystem,
    /// Generators of the conjugation `B = e^{−Y_m} ⋯ e^{−Y_1}`.
    pub ys: Vec<TrigPoly2<CAlg>>,
    pub y_norm: f64,
    pub h_norm: f64,
    pub nre_residual: f64,
    pub inner_iterations: usize,
    /// `‖F‖ ≤ 10⁻⁸η²` with `η = πε^{1/4}`.
    pub precondition_ok: bool,
    pub y_bound_ok: bool,
    pub h_bound_ok: bool,
}

/// Removes the non-resonant part of `F` by conjugations `e^{−Y}`.
///
/// The inner loop stops once the non-resonant residual is below `inner_tol`
/// (default `1e−2‖F‖²`), stops contracting, or after 8 iterations.
pub fn nre_step(sys: &LinearSystem, eps: f64, inner_tol: Option<f64>, cap: usize) -> Result<NreOutcome> {
    let omega = sys.omega();
    let h = sys.h;
    let eta = PI * eps.powf(0.25);
    let f_norm = sys.eps();
    let precondition_ok = f_norm <= 1e-8 * eta * eta;
    let spec_tol = 1e-2 * f_norm * f_norm;
    let tol = inner_tol.unwrap_or(spec_tol);
    let mut cur = sys.clone();
    let mut ys = Vec::new();
    let (mut nre, _) = split(&cur.f, eps, cur.rho, omega);
    let mut res = nre.log_sharp_norm(h).exp();
    let mut iters = 0;
    while res > tol && iters < 8 {
        let mut y = homological_solve(&nre, cur.rho, omega, eps)?;
        y.trim_weighted(h, TRIM_REL * f_norm);
        let neg = &y * C64::new(-1.0, 0.0);
        let total = lie_conjugate(&cur.total(), &neg, omega, h, cap);
        let mut f = total;
        f.add_at((0, 0), (-cur.c).complexify());
        f.real = true;
        f.trim_weighted(h, TRIM_REL * f_norm);
        let (nre_next, _) = split(&f, eps, cur.rho, omega);
        let next = nre_next.log_sharp_norm(h).exp();
        if !(next < 0.1 * res) && inner_tol.is_some() {
            // round-off floor reached
            if next < res {
                cur.f = f;
                ys.push(y);
                nre = nre_next;
                res = next;
                iters += 1;
            }
            break;
        }
        cur.f = f;
        ys.push(y);
        nre = nre_next;
        res = next;
        iters += 1;
    }
    if res > spec_tol && res > tol {
        return Err(Error::InnerLoopStall { residual: res });
    }
    let _ = nre;
    let y_norm: f64 = ys.iter().map(|y| y.log_sharp_norm(h).exp()).sum();
    let (_, re) = split(&cur.f, eps, cur.rho, omega);
    let h_norm = re.log_sharp_norm(h).exp();
    Ok(NreOutcome {
        sys: cur,
        y_norm,
        h_norm,
        nre_residual: res,
        inner_iterations: iters,
        precondition_ok,
        y_bound_ok: y_norm <= 10.0 / eta * f_norm * (1.0 + 1e-12),
        h_bound_ok: h_norm <= 2.0 * f_norm * (1.0 + 1e-12),
        ys,
    })
}

/// `Q(θ) = exp(−2π⟨k⋆, θ⟩ J1)` as a series.
pub fn rotation_poly(kstar: (i64, i64), h: f64) -> TrigPoly2<CMat> {
    let j1 = cmat_from_real(&crate::algebra3::basis(1));
    let j1sq = j1 * j1;
    let n = l1(kstar);
    let mut q = TrigPoly2::zeros(n, h);
    q.real = true;
    if kstar == (0, 0) {
        q.set((0, 0), CMat::identity());
        return q;
    }
    let half = C64::new(0.5, 0.0);
    let inv2i = C64::new(0.0, -0.5);
    q.set((0, 0), CMat::identity() + j1sq);
    // e^{it} with t = −2π⟨k⋆,θ⟩ is the mode −k⋆
    q.set((-kstar.0, -kstar.1), j1 * inv2i - j1sq * half);
    q.set(kstar, -(j1 * inv2i) - j1sq * half);
    q
}

/// Outcome of the rotation that moves the resonant site `k⋆` to 0.
#[derive(Debug, Clone)]
pub struct RotationOutcome {
    pub sys: LinearSystem,
    /// `‖C₁‖ ≤ 2πε^{1/4}`.
    pub c1_ok: bool,
    /// `‖F₁‖#_{h/3} ≤ 2ε`.
    pub f1_ok: bool,
}

/// Conjugation by `Q = exp(−2π⟨k⋆,θ⟩J1)`: `C₁ = 2π(ρ − ⟨k⋆,ω⟩)J1`, `ŵ(k) ↦ ŵ(k + k⋆)`.
pub fn rotation_step(sys: &LinearSystem, kstar: (i64, i64), eps: f64) -> RotationOutcome {
    let omega = sys.omega();
    let zero = C64::new(0.0, 0.0);
    let n = sys.f.cutoff() + l1(kstar);
    let mut f = TrigPoly2::zeros(n, sys.h);
    f.real = sys.f.real;
    for (k, c) in sys.f.nonzero_modes() {
        let (w, wb) = w_parts(&c);
        f.add_at(k, CAlg::new(c.0[0], zero, zero));
        f.add_at((k.0 - kstar.0, k.1 - kstar.1), from_w_parts(zero, w, zero));
        f.add_at((k.0 + kstar.0, k.1 + kstar.1), from_w_parts(zero, zero, wb));
    }
    let rho1 = sys.rho - dot(kstar, omega);
    let c1 = AlgVec::j1(2.0 * PI * rho1);
    let c1_ok = c1.norm() <= 2.0 * PI * eps.powf(0.25) * (1.0 + 1e-12);
    let f1_ok = f.log_sharp_norm(sys.h / 3.0) <= (2.0 * eps).ln() + 1e-12;
    RotationOutcome { sys: LinearSystem { alpha: sys.alpha, c: c1, f, h: sys.h, rho: rho1, frame: sys.frame }, c1_ok, f1_ok }
}

struct LineOde {
    g: TrigPoly1<CAlg>,
    g0: RMat,
    g0v: AlgVec,
    tau: f64,
}

/// Matrix entries plus time; the solver is only reliable on autonomous systems.
type State = SVector<f64, 10>;

fn to_state(m: &RMat) -> State {
    State::from_fn(|i, _| if i < 9 { m[(i / 3, i % 3)] } else { 0.0 })
}

fn from_state(s: &State) -> RMat {
    RMat::from_fn(|i, j| s[3 * i + j])
}

impl System<f64, State> for LineOde {
    fn system(&self, _x: f64, y: &State, dy: &mut State) {
        let t = y[9];
        let g = real_part(&self.g.eval(C64::new(self.tau * t, 0.0)).matrix());
        let e = *alg_exp(-t * self.g0v).matrix();
        let m = e * (g - self.g0) * e.transpose() * from_state(y);
        *dy = to_state(&m);
        dy[9] = 1.0;
    }
}

/// Floquet conjugation of a line-supported system to a constant one.
#[derive(Debug, Clone)]
pub struct FloquetOutcome {
    pub b: TrigPoly2<CMat>,
    pub c: AlgVec,
    /// `sup ‖∂_ωB + BF − CB‖` on a 16×16 grid.
    pub residual: f64,
    /// `(‖B‖#_h, exp(((|q|+|p|)h/|τ|)‖F‖#_h))`.
    pub norm_bound: (f64, f64),
}

/// Reduces `ẋ = F(θ)x` with `F` on `ℤ(q,−p)` to `ẏ = Cy` with `y = B(θ)x`.
pub fn floquet_reduce(f: &TrigPoly2<CAlg>, q: i64, p: i64, alpha: f64) -> Result<FloquetOutcome> {
    let h = f.h;
    let omega = (alpha, 1.0);
    let mut lmax = 0i64;
    for (k, c) in f.nonzero_modes() {
        if c.max_abs() == 0.0 {
            continue;
        }
        if k.0 * p + k.1 * q != 0 {
            return Err(Error::LemmaViolated { q, p, k });
        }
        let l = if q != 0 { k.0 / q } else { -k.1 / p };
        lmax = lmax.max(l.abs());
    }
    let tau = q as f64 * alpha - p as f64;
    if tau == 0.0 {
        return Err(Error::DegenerateDenominator { value: tau });
    }
    let g0v = f.get((0, 0)).re();
    let fnorm = f.log_sharp_norm(h).exp();
    let bound = ((q.abs() + p.abs()) as f64 * h / tau.abs() * fnorm).exp();
    if lmax == 0 {
        let mut b = TrigPoly2::constant(CMat::identity(), h);
        b.real = true;
        return Ok(FloquetOutcome { b, c: g0v, residual: 0.0, norm_bound: (1.0, bound) });
    }
    let mut g = TrigPoly1::zeros(lmax as usize, h);
    for l in -lmax..=lmax {
        g.set(l, f.get((l * q, -l * p)));
    }
    g.real = true;
    let period = 1.0 / tau.abs();
    let g0 = g0v.matrix();
    let ode = LineOde { g, g0, g0v, tau };
    let mut cutoff = 16usize;
    let mut last_aliasing = f64::INFINITY;
    loop {
        let m = 4 * cutoff;
        let dx = period / m as f64;
        let end = period + 0.5 * dx;
        let y0 = to_state(&RMat::identity());
        let mut stepper = Dop853::new(ode_clone(&ode), 0.0, end, dx, y0, 1e-13, 1e-15);
        stepper.integrate().map_err(|e| Error::Assertion(format!("ODE integration failed: {e:?}")))?;
        let xs = stepper.x_out();
        let ys = stepper.y_out();
        if xs.len() < m + 1 {
            return Err(Error::Assertion("dense output shorter than grid".into()));
        }
        let phi = |i: usize| -> RMat { alg_exp(ys[i][9] * g0v).matrix() * from_state(&ys[i]) };
        let mono = phi(m);
        let angle = Rot::new(mono).matrix().trace().clamp(-1.0, 3.0);
        let theta = ((angle - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        if (PI - theta).abs() < 1e-6 {
            return Err(Error::MonodromyLogAtCut { angle: theta });
        }
        let logm = rot_log_hint(&Rot::new(mono), period * g0v)?;
        let c = (1.0 / period) * logm;
        // B(φ) = (Φ(s) e^{−Cs})⁻¹ at s = φ/τ mod period
        let samples: Vec<CMat> = (0..m)
            .map(|j| {
                let i = if tau > 0.0 { j } else { (m - j) % m };
                let s = ys[i][9];
                let b1 = phi(i) * alg_exp(-s * c).matrix();
                cmat_from_real(&b1.transpose())
            })
            .collect();
        let (mut fit, diag) = TrigPoly1::fit(&samples, cutoff, h)?;
        fit.real = true;
        fit.symmetrize();
        let al = diag.aliasing();
        // the integrator's noise floor stops further gains
        if al < 1e-11 || al > 0.5 * last_aliasing || cutoff >= 256 {
            let top = fit.modes().map(|(_, c)| c.max_abs()).fold(0.0, f64::max);
            fit.trim(1e-15 * top);
            let mut b = TrigPoly2::zeros(fit.cutoff() * (q.unsigned_abs() + p.unsigned_abs()) as usize, h);
            b.real = true;
            for (l, coef) in fit.modes() {
                b.set((l * q, -l * p), *coef);
            }
            let residual = floquet_residual(&b, f, c, omega);
            let bn = b.log_sharp_norm(h).exp();
            return Ok(FloquetOutcome { b, c, residual, norm_bound: (bn, bound) });
        }
        last_aliasing = al;
        cutoff *= 2;
    }
}

fn ode_clone(o: &LineOde) -> LineOde {
    LineOde { g: o.g.clone(), g0: o.g0, g0v: o.g0v, tau: o.tau }
}

/// `sup ‖∂_ωB + BF − CB‖` on a 16×16 real grid.
pub fn floquet_residual(b: &TrigPoly2<CMat>, f: &TrigPoly2<CAlg>, c: AlgVec, omega: (f64, f64)) -> f64 {
    let db = b.derivative_along(omega);
    let cm = cmat_from_real(&c.matrix());
    let mut worst: f64 = 0.0;
    for i in 0..16 {
        for j in 0..16 {
            let z = (C64::new(i as f64 / 16.0, 0.0), C64::new(j as f64 / 16.0, 0.0));
            let bz = b.eval(z);
            let r = db.eval(z) + bz * f.eval(z).matrix() - cm * bz;
            worst = worst.max(r.norm());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Trivial,
    Case1,
    Case2,
}

/// Boolean condition with a log-space margin (positive when it holds).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CondCheck {
    pub holds: bool,
    pub margin: f64,
}

impl CondCheck {
    fn from_margin(margin: f64) -> Self {
        CondCheck { holds: margin >= 0.0, margin }
    }
}

/// One line of the KAM trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct KamStepRecord {
    pub n: usize,
    pub q: i64,
    pub p: i64,
    pub q_plus: i64,
    pub kind: StepKind,
    pub h: f64,
    pub h_plus: f64,
    pub eps: f64,
    pub eps_plus: f64,
    pub b_norm: f64,
    pub rho: f64,
    pub c: [f64; 3],
    pub k_star: Option<(i64, i64)>,
    pub cond1: CondCheck,
    pub cond2: CondCheck,
    pub cond3: CondCheck,
    /// `ε₊(‖B‖#_{h₊})^{2L} ≤ ε² e^{−q₊h₊}`.
    pub estimate: Option<CondCheck>,
    pub lambda_relation: Option<bool>,
    /// Truncated resonant content after the rotation sits on `ℤ(q,−p)`.
    pub support_on_line: Option<bool>,
    /// `Λ₁ᶜ` sites in the ball off `ℤ(q,−p)`.
    pub offline_lambda1_sites: usize,
    pub nre_precondition: Option<bool>,
    pub inner_iterations: usize,
    pub nre_bounds_ok: Option<bool>,
    pub rotation_bounds_ok: Option<bool>,
    pub floquet_residual: Option<f64>,
}

/// Trajectory and final system of a KAM run.
#[derive(Debug, Clone)]
pub struct KamRun {
    pub records: Vec<KamStepRecord>,
    pub system: LinearSystem,
    /// Accumulated conjugation at the final width.
    pub b: TrigPoly2<CMat>,
}

pub const KAM_FLOOR: f64 = 1e-14;

fn cond1(eps: f64, h: f64, q: i64, q_plus: i64, l: usize) -> CondCheck {
    let le = eps.ln();
    let lower = le + 0.5 * q_plus as f64 * h;
    let lf = l as f64;
    let cap = (-100.0 * lf * (10.0 * lf).ln()).min(4.0 * (lf + 1.0) * h.ln()).min(-0.5 * q as f64 * h);
    CondCheck::from_margin(lower.min(cap - le))
}

fn exp_poly(y: &TrigPoly2<CAlg>, cap: usize) -> TrigPoly2<CMat> {
    exp_series2(y, cap, 1e-20)
}

/// Seeded real perturbation on `T²` with decay `e^{−2π|k|decay}` and `‖F‖#_h = size`.
pub fn random_field<R: rand::Rng>(rng: &mut R, cutoff: usize, decay: f64, size: f64, h: f64) -> TrigPoly2<CAlg> {
    let mut f = TrigPoly2::zeros(cutoff, h);
    for k in diamond(cutoff) {
        if k < (0, 0) {
            continue;
        }
        let s = (-2.0 * PI * decay * l1(k) as f64).exp();
        let mut c = CAlg::from_comps(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * s);
        if k == (0, 0) {
            c = CAlg::from_comps(|i| C64::new(c.0[i].re, 0.0));
        }
        f.set(k, c);
        f.set((-k.0, -k.1), c.conj());
    }
    f.real = true;
    let norm = f.log_sharp_norm(h).exp();
    if norm > 0.0 {
        f = &f * C64::new(size / norm, 0.0);
    }
    f
}

/// Runs the KAM iteration from step 0 with convergents of `cf`.
pub fn kam_iterate(sys: &LinearSystem, cf: &CFData, l: usize, max_steps: usize) -> Result<KamRun> {
    let mut cur = sys.clone();
    let mut records = Vec::new();
    let mut b_acc = TrigPoly2::constant(cmat_from_real(&RMat::identity()), sys.h);
    b_acc.real = true;
    for n in 0..max_steps {
        if n + 1 >= cf.q.len() {
            return Err(Error::DepthExceeded { requested: n + 1, available: cf.q.len() - 1 });
        }
        let eps = cur.eps();
        if eps < KAM_FLOOR {
            break;
        }
        let (q, p, q_plus) = (cf.q_i64(n), cf.p_i64(n), cf.q_i64(n + 1));
        let h = cur.h;
        let c1 = cond1(eps, h, q, q_plus, l);
        let beta = cf.beta[n];
        let c2 = CondCheck::from_margin(((1.0 / q_plus as f64) / beta).ln().min((beta * 2.0 * q_plus as f64).ln()));
        let c3 = match resonant_lattice(cur.alpha, q, p, q_plus) {
            Ok(_) => CondCheck { holds: true, margin: 0.0 },
            Err(Error::LemmaViolated { .. }) => CondCheck { holds: false, margin: -1.0 },
            Err(e) => return Err(e),
        };
        let mut rec = KamStepRecord {
            n,
            q,
            p,
            q_plus,
            kind: StepKind::Trivial,
            h,
            h_plus: h,
            eps,
            eps_plus: eps,
            b_norm: 1.0,
            rho: cur.rho,
            c: cur.c.to_array(),
            k_star: None,
            cond1: c1,
            cond2: c2,
            cond3: c3,
            estimate: None,
            lambda_relation: None,
            support_on_line: None,
            offline_lambda1_sites: 0,
            nre_precondition: None,
            inner_iterations: 0,
            nre_bounds_ok: None,
            rotation_bounds_ok: None,
            floquet_residual: None,
        };
        if eps.ln() <= -0.5 * q_plus as f64 * h {
            records.push(rec);
            continue;
        }
        if !c3.holds {
            return Err(Error::LemmaViolated { q, p, k: (0, 0) });
        }
        let radius = q_plus as f64 / 6.0;
        let active = radius.ceil() as usize;
        let storage = 4 * active;
        let h_plus = h / (6.0 * (l as f64 + 2.0));
        let omega = cur.omega();
        let log_target = 2.0 * eps.ln() - q_plus as f64 * h_plus;

        let nre = nre_step(&cur, eps, Some(0.0), storage)?;
        rec.nre_precondition = Some(nre.precondition_ok);
        rec.inner_iterations = nre.inner_iterations;
        rec.nre_bounds_ok = Some(nre.y_bound_ok && nre.h_bound_ok);
        let mut b_step = TrigPoly2::constant(CMat::identity(), h);
        for y in &nre.ys {
            let mut y = y * C64::new(-1.0, 0.0);
            // B is only measured at the new width
            y.trim_weighted(h_plus, 1e-18);
            let e = exp_poly(&y, storage);
            b_step = product2(&e, &b_step, Some(storage));
            b_step.trim_weighted(h_plus, 1e-18);
        }
        let after = nre.sys;
        let idx = SplitIndex::new(eps, after.rho, omega);
        let (lam1c, lam2c) = idx.resonant_sets(radius);
        let on_line = |k: (i64, i64)| k.0 * p + k.1 * q == 0;
        rec.offline_lambda1_sites = lam1c.iter().filter(|&&k| !on_line(k)).count();

        let (next, b_rest, kind) = if lam2c.is_empty() {
            // Case 1: abelian removal of the J1 line modes in the ball
            let mut y1 = TrigPoly2::zeros(after.f.cutoff(), h);
            y1.real = true;
            let zero = C64::new(0.0, 0.0);
            for (k, c) in after.f.nonzero_modes() {
                if k != (0, 0) && on_line(k) && (l1(k) as f64) < radius && !idx.in_lambda1(k) {
                    y1.set(k, CAlg::new(c.0[0] / C64::new(0.0, 2.0 * PI * dot(k, omega)), zero, zero));
                }
            }
            let neg = &y1 * C64::new(-1.0, 0.0);
            let total = lie_conjugate(&after.total(), &neg, omega, h, storage);
            let (c, f) = mean_split(total);
            let sys1 = LinearSystem { alpha: after.alpha, c, f, h: h_plus, rho: 0.0, frame: after.frame };
            (sys1, exp_poly(&neg, storage), StepKind::Case1)
        } else {
            // Case 2: rotate the closest resonant site to 0, then Floquet on the line part
            let kstar = *lam2c
                .iter()
                .min_by(|a, b| {
                    l1(**a).cmp(&l1(**b)).then(
                        (dot(**a, omega) - after.rho).abs().partial_cmp(&(dot(**b, omega) - after.rho).abs()).unwrap(),
                    )
                })
                .unwrap();
            rec.k_star = Some(kstar);
            rec.lambda_relation = Some(
                lam2c.iter().all(|k| !idx.in_lambda1((k.0 - kstar.0, k.1 - kstar.1))),
            );
            let rot = rotation_step(&after, kstar, eps);
            rec.rotation_bounds_ok = Some(rot.c1_ok && rot.f1_ok);
            let f1 = rot.sys.f.clone();
            let mut line = TrigPoly2::zeros(active, h);
            line.real = true;
            let mut rest = f1.clone();
            // content is resonant when it matters at the step's precision
            let budget = log_target + (1e-3f64).ln();
            let mut support_ok = true;
            for (k, c) in f1.nonzero_modes() {
                if (l1(k) as f64) >= radius {
                    continue;
                }
                if on_line(k) {
                    line.set(k, c);
                    rest.set(k, CAlg::ZERO);
                } else {
                    let resonant = !idx.in_lambda1(k);
                    let weight = c.norm().ln() + 2.0 * PI * l1(k) as f64 * h_plus;
                    if resonant && weight > budget {
                        support_ok = false;
                    }
                }
            }
            rec.support_on_line = Some(support_ok);
            line.add_at((0, 0), rot.sys.c.complexify());
            let fl = floquet_reduce(&line, q, p, cur.alpha)?;
            rec.floquet_residual = Some(fl.residual);
            let is_identity = fl.b.cutoff() == 0 && (fl.b.get((0, 0)) - CMat::identity()).norm() == 0.0;
            let f_plus = if is_identity {
                rest
            } else {
                let rm = rest.map(|c| c.matrix());
                let bt = fl.b.map(|m| m.transpose());
                product2(&product2(&fl.b, &rm, Some(storage)), &bt, Some(storage)).map(CAlg::from_cmat)
            };
            let sys1 = LinearSystem { alpha: cur.alpha, c: fl.c, f: f_plus, h: h_plus, rho: 0.0, frame: after.frame };
            let qpoly = rotation_poly(kstar, h);
            let bpart = product2(&fl.b, &qpoly, None);
            (sys1, bpart, StepKind::Case2)
        };
        let mut next = next;
        next.f.real = true;
        let scale = next.eps();
        next.f.trim_weighted(h_plus, TRIM_REL * scale);
        let r = next.rediagonalize();
        let rpoly = TrigPoly2::constant(cmat_from_real(&r), h);
        let b_total = product2(&rpoly, &product2(&b_rest, &b_step, None), None);
        let eps_plus = next.eps();
        let b_norm = b_total.log_sharp_norm(h_plus).exp();
        rec.kind = kind;
        rec.h_plus = h_plus;
        rec.eps_plus = eps_plus;
        rec.b_norm = b_norm;
        rec.rho = next.rho;
        rec.c = next.c.to_array();
        let lhs = eps_plus.ln() + 2.0 * l as f64 * b_norm.ln();
        rec.estimate = Some(CondCheck::from_margin(log_target - lhs));
        b_acc = product2(&b_total, &b_acc, Some(storage));
        b_acc.trim_weighted(h_plus, 1e-18);
        b_acc.h = h_plus;
        records.push(rec);
        cur = next;
    }
    Ok(KamRun { records, system: cur, b: b_acc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra3::adjoint;
    use crate::arithmetic::{cf_expand, AlphaSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn sup_diff(a: &TrigPoly2<CAlg>, b: &TrigPoly2<CAlg>, h: f64) -> f64 {
        (a - b).log_sharp_norm(h).exp()
    }

    #[test]
    fn diagonalizing_rotation_aligns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let v = AlgVec::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let r = diagonalizing_rotation(v);
            let w = adjoint(&Rot::new(r), v);
            assert!((w - AlgVec::new(v.norm(), 0.0, 0.0)).norm() < 1e-12);
        }
        let v = AlgVec::new(-1.0, 0.0, 0.0);
        let w = adjoint(&Rot::new(diagonalizing_rotation(v)), v);
        assert!((w - AlgVec::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn split_examples() {
        let a = golden();
        let om = (a, 1.0);
        let eps = 1e-6;
        let mut f = TrigPoly2::zeros(3, 0.5);
        f.set((3, 0), CAlg::new(C64::new(1e-7, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
        let (nre, re) = split(&f, eps, 0.3, om);
        assert_eq!(nre, f);
        assert!(re.nonzero_modes().all(|(_, c)| c.is_zero()));
        let g = TrigPoly2::constant(AlgVec::j1(1e-7).complexify(), 0.5);
        let (nre, re) = split(&g, eps, 0.3, om);
        assert_eq!(re, g);
        assert!(nre.nonzero_modes().all(|(_, c)| c.is_zero()));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = random_field(&mut rng, 12, 0.2, 1e-3, 0.5);
        // ρ so that some w-modes are resonant and their w̄ partners are not
        let (nre, re) = split(&r, 1e-4, 0.2918, om);
        assert!(sup_diff(&(&nre + &re), &r, 0.5) <= 1e-16 * r.log_sharp_norm(0.5).exp());
        assert!(nre.symmetry_defect() < 1e-20 && re.symmetry_defect() < 1e-20);
    }

    #[test]
    fn homological_examples() {
        let a = golden();
        let om = (a, 1.0);
        let eps = 1e-6;
        let rho = 0.3;
        let zero = TrigPoly2::<CAlg>::zeros(2, 0.5);
        assert!(homological_solve(&zero, rho, om, eps).unwrap().nonzero_modes().all(|(_, c)| c.is_zero()));
        // single J1 mode
        let k = (2, -1);
        let mut f = TrigPoly2::zeros(3, 0.5);
        let cf = C64::new(0.3, -0.2);
        f.set(k, CAlg::new(cf, C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
        f.set((-k.0, -k.1), CAlg::new(cf.conj(), C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
        f.real = true;
        let y = homological_solve(&f, rho, om, eps).unwrap();
        let want = cf / C64::new(0.0, 2.0 * PI * dot(k, om));
        assert!((y.get(k).0[0] - want).norm() < 1e-15);
        let c = AlgVec::j1(2.0 * PI * rho);
        let back = homological_operator(&y, c, om);
        assert!(sup_diff(&back, &f, 0.5) < 1e-14 * f.log_sharp_norm(0.5).exp());
        // random non-resonant input
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_field(&mut rng, 8, 0.3, 1e-6, 0.5);
        let (nre, _) = split(&r, eps, rho, om);
        let y = homological_solve(&nre, rho, om, eps).unwrap();
        let back = homological_operator(&y, c, om);
        let nn = nre.log_sharp_norm(0.5).exp();
        assert!(sup_diff(&back, &nre, 0.5) < 1e-12 * nn);
        assert!(y.log_sharp_norm(0.5).exp() <= nn / (PI * eps.powf(0.25)));
        // unsplit input underflows
        assert!(matches!(homological_solve(&r, rho, om, eps), Err(Error::DivisorUnderflow { .. })));
    }

    #[test]
    fn conjugation_examples() {
        let a = golden();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_field(&mut rng, 4, 0.3, 1e-3, 0.5);
        let sys = LinearSystem::new(a, AlgVec::j1(2.0 * PI * 0.3), f, 0.5);
        let id = TrigPoly2::constant(CMat::identity(), 0.5);
        let same = conjugate_system(&sys, &id);
        assert!(sup_diff(&same.total(), &sys.total(), 0.5) < 1e-15);
        let r = *alg_exp(AlgVec::new(0.3, -0.2, 0.5)).matrix();
        let rp = TrigPoly2::constant(cmat_from_real(&r), 0.5);
        let rc = conjugate_system(&sys, &rp);
        assert!(sup_diff(&rc.total(), &ad_const(&r, &sys.total()), 0.5) < 1e-15);
        // round trip with an analytic B
        let y = random_field(&mut rng, 3, 0.3, 0.05, 0.5);
        let b = exp_series2(&y, 40, 1e-20);
        let binv = exp_series2(&(&y * C64::new(-1.0, 0.0)), 40, 1e-20);
        let there = conjugate_system(&sys, &b);
        let back = conjugate_system(&there, &binv);
        assert!(sup_diff(&back.total(), &sys.total(), 0.1) < 1e-9);
        // Lie series agrees with the matrix route
        let lie = lie_conjugate(&sys.total(), &y, sys.omega(), 0.5, 40);
        assert!(sup_diff(&lie, &there.total(), 0.1) < 1e-9);
    }

    #[test]
    fn nre_step_quadratic() {
        let a = golden();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-6;
        let sys0 = LinearSystem::new(a, AlgVec::j1(2.0 * PI * 0.3), TrigPoly2::zeros(2, 0.5), 0.5);
        let out = nre_step(&sys0, eps, None, 40).unwrap();
        assert_eq!(out.inner_iterations, 0);
        let f = random_field(&mut rng, 5, 0.5, eps, 0.5);
        let sys = LinearSystem::new(a, AlgVec::j1(2.0 * PI * 0.3), f, 0.5);
        let out = nre_step(&sys, eps, None, 40).unwrap();
        assert!(out.nre_residual < 1e-2 * eps * eps);
        assert!(out.y_bound_ok && out.h_bound_ok);
        assert!(!out.precondition_ok);
        let deep = nre_step(&sys, eps, Some(0.0), 40).unwrap();
        assert!(deep.nre_residual < 1e-20, "{}", deep.nre_residual);
    }

    #[test]
    fn rotation_examples() {
        let a = golden();
        let om = (a, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = random_field(&mut rng, 4, 0.3, 1e-6, 0.5);
        let sys = LinearSystem::new(a, AlgVec::j1(2.0 * PI * 0.3), f, 0.5);
        let r0 = rotation_step(&sys, (0, 0), 1e-6);
        assert!(sup_diff(&r0.sys.f, &sys.f, 0.5) < 1e-20);
        let ks = (-6, 4);
        let r1 = rotation_step(&sys, ks, 1e-6);
        assert!((r1.sys.rho - (0.3 - dot(ks, om))).abs() < 1e-15);
        assert!(r1.c1_ok);
        let back = rotation_step(&r1.sys, (6, -4), 1e-6);
        assert!(sup_diff(&back.sys.f, &sys.f, 0.5) < 1e-20);
        assert!((back.sys.rho - 0.3).abs() < 1e-14);
        // matches conjugation by Q
        let q = rotation_poly(ks, 0.5);
        let viaq = conjugate_system(&sys, &q);
        let mut t1 = r1.sys.total();
        t1.resize(viaq.f.cutoff().max(t1.cutoff()));
        assert!(sup_diff(&viaq.total(), &t1, 0.1) < 1e-14);
    }

    #[test]
    fn floquet_examples() {
        let a = golden();
        let (q, p) = (5i64, 3i64);
        let tau = q as f64 * a - p as f64;
        let z = TrigPoly2::<CAlg>::zeros(0, 0.2);
        let out = floquet_reduce(&z, q, p, a).unwrap();
        assert_eq!(out.c, AlgVec::ZERO);
        let cst = TrigPoly2::constant(AlgVec::j1(0.4).complexify(), 0.2);
        let out = floquet_reduce(&cst, q, p, a).unwrap();
        assert!((out.c - AlgVec::j1(0.4)).norm() < 1e-15);
        // abelian closed form
        let delta = 0.05;
        let mut f = TrigPoly2::zeros(q as usize + p as usize, 0.2);
        let half = AlgVec::j1(delta / 2.0).complexify();
        f.set((q, -p), half);
        f.set((-q, p), half);
        f.real = true;
        let out = floquet_reduce(&f, q, p, a).unwrap();
        assert!(out.c.norm() < 1e-10);
        for i in 0..20 {
            let th = (i as f64 * 0.137, i as f64 * 0.291);
            let phi = q as f64 * th.0 - p as f64 * th.1;
            let want = alg_exp(AlgVec::j1(-delta / (2.0 * PI * tau) * (2.0 * PI * phi).sin()));
            let got = real_part(&out.b.eval((C64::new(th.0, 0.0), C64::new(th.1, 0.0))));
            assert!((got - want.matrix()).norm() < 1e-10);
        }
        assert!(out.residual < 1e-8);
        assert!(out.norm_bound.0 <= out.norm_bound.1);
        // off-line support is refused
        let mut bad = TrigPoly2::zeros(3, 0.2);
        bad.set((1, 1), half);
        assert!(matches!(floquet_reduce(&bad, q, p, a), Err(Error::LemmaViolated { .. })));
    }

    #[test]
    fn kam_trivial_and_contraction() {
        let a = golden();
        let cf = cf_expand(&AlphaSpec::golden(), 30).unwrap();
        let zero = LinearSystem::new(a, AlgVec::j1(2.0 * PI * 0.3), TrigPoly2::zeros(0, 0.5), 0.5);
        let run = kam_iterate(&zero, &cf, 4, 10).unwrap();
        assert!(run.records.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_field(&mut rng, 6, 0.75, 1e-6, 0.5);
        let sys = LinearSystem::new(a, AlgVec::j1(2.0 * PI * 0.3), f, 0.5);
        let run = kam_iterate(&sys, &cf, 4, 25).unwrap();
        let active: Vec<_> = run.records.iter().filter(|r| r.kind != StepKind::Trivial).collect();
        assert!(!active.is_empty() && active.len() <= 6);
        assert!(run.system.eps() < 1e-12, "{}", run.system.eps());
        for r in &active {
            assert!(r.estimate.unwrap().holds, "{r:?}");
            if r.kind == StepKind::Case2 {
                assert_eq!(r.support_on_line, Some(true));
                assert_eq!(r.lambda_relation, Some(true));
            }
        }
        assert_eq!(active[0].n, 9);
        assert_eq!(active[0].k_star, Some((-6, 4)));
    }
}
