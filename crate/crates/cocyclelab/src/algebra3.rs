//! SO(3), so(3) and their complexifications in the basis J1, J2, J3.
//!
//! Coordinates `(a1, a2, a3)` stand for `a1*J1 + a2*J2 + a3*J3` with
//!
//! ```text
//! J1 = [[0,1,0],[-1,0,0],[0,0,0]]
//! J2 = [[0,0,1],[0,0,0],[-1,0,0]]
//! J3 = [[0,0,0],[0,0,-1],[0,1,0]]
//! ```
//!
//! so that `[J1,J2]=J3`, `[J2,J3]=J1`, `[J3,J1]=J2` and the bracket is the
//! cross product of coordinate vectors.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Matrix3<C64>;
pub type RMat = Matrix3<f64>;

const DRIFT_TOL: f64 = 1e-13;
const CUT_TOL: f64 = 1e-7;

/// Basis element `J_s`, `s` in 1..=3.
pub fn basis(s: usize) -> RMat {
    let mut m = RMat::zeros();
    match s {
        1 => {
            m[(0, 1)] = 1.0;
            m[(1, 0)] = -1.0;
        }
        2 => {
            m[(0, 2)] = 1.0;
            m[(2, 0)] = -1.0;
        }
        3 => {
            m[(1, 2)] = -1.0;
            m[(2, 1)] = 1.0;
        }
        _ => panic!("basis index {s} out of range"),
    }
    m
}

pub fn bracket_mat(a: &RMat, b: &RMat) -> RMat {
    a * b - b * a
}

/// Real element of so(3) in J-coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlgVec {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl AlgVec {
    pub const ZERO: AlgVec = AlgVec { a1: 0.0, a2: 0.0, a3: 0.0 };

    pub fn new(a1: f64, a2: f64, a3: f64) -> Self {
        AlgVec { a1, a2, a3 }
    }

    pub fn j1(t: f64) -> Self {
        AlgVec::new(t, 0.0, 0.0)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        AlgVec::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.a1, self.a2, self.a3]
    }

    pub fn norm(&self) -> f64 {
        (self.a1 * self.a1 + self.a2 * self.a2 + self.a3 * self.a3).sqrt()
    }

    pub fn dot(&self, o: &AlgVec) -> f64 {
        self.a1 * o.a1 + self.a2 * o.a2 + self.a3 * o.a3
    }

    pub fn bracket(&self, o: &AlgVec) -> AlgVec {
        AlgVec::new(
            self.a2 * o.a3 - self.a3 * o.a2,
            self.a3 * o.a1 - self.a1 * o.a3,
            self.a1 * o.a2 - self.a2 * o.a1,
        )
    }

    pub fn matrix(&self) -> RMat {
        RMat::new(
            0.0, self.a1, self.a2, //
            -self.a1, 0.0, -self.a3, //
            -self.a2, self.a3, 0.0,
        )
    }

    /// Coordinates of the skew-symmetric part of `m`.
    pub fn from_matrix(m: &RMat) -> Self {
        AlgVec::new(
            0.5 * (m[(0, 1)] - m[(1, 0)]),
            0.5 * (m[(0, 2)] - m[(2, 0)]),
            0.5 * (m[(2, 1)] - m[(1, 2)]),
        )
    }

    pub fn complexify(&self) -> CAlg {
        CAlg([C64::new(self.a1, 0.0), C64::new(self.a2, 0.0), C64::new(self.a3, 0.0)])
    }

    // axis in the usual hat-map coordinates of R^3
    fn hat_axis(&self) -> [f64; 3] {
        [self.a3, self.a2, -self.a1]
    }

    fn from_hat_axis(w: [f64; 3]) -> Self {
        AlgVec::new(-w[2], w[1], w[0])
    }
}

impl Add for AlgVec {
    type Output = AlgVec;
    fn add(self, o: AlgVec) -> AlgVec {
        AlgVec::new(self.a1 + o.a1, self.a2 + o.a2, self.a3 + o.a3)
    }
}

impl Sub for AlgVec {
    type Output = AlgVec;
    fn sub(self, o: AlgVec) -> AlgVec {
        AlgVec::new(self.a1 - o.a1, self.a2 - o.a2, self.a3 - o.a3)
    }
}

impl Neg for AlgVec {
    type Output = AlgVec;
    fn neg(self) -> AlgVec {
        AlgVec::new(-self.a1, -self.a2, -self.a3)
    }
}

impl Mul<AlgVec> for f64 {
    type Output = AlgVec;
    fn mul(self, v: AlgVec) -> AlgVec {
        AlgVec::new(self * v.a1, self * v.a2, self * v.a3)
    }
}

/// Complexified algebra element, `Σ c_s J_s` with complex `c_s`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CAlg(pub [C64; 3]);

impl CAlg {
    pub const ZERO: CAlg = CAlg([C64 { re: 0.0, im: 0.0 }; 3]);

    pub fn new(a: C64, b: C64, c: C64) -> Self {
        CAlg([a, b, c])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn conj(&self) -> CAlg {
        CAlg([self.0[0].conj(), self.0[1].conj(), self.0[2].conj()])
    }

    pub fn re(&self) -> AlgVec {
        AlgVec::new(self.0[0].re, self.0[1].re, self.0[2].re)
    }

    pub fn scale(&self, s: C64) -> CAlg {
        CAlg([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn bracket(&self, o: &CAlg) -> CAlg {
        let a = &self.0;
        let b = &o.0;
        CAlg([
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ])
    }

    /// Bilinear square `Σ c_s^2`; the eigenvalues of the matrix form are `0, ±i sqrt(.)`.
    pub fn quad(&self) -> C64 {
        self.0[0] * self.0[0] + self.0[1] * self.0[1] + self.0[2] * self.0[2]
    }

    pub fn matrix(&self) -> CMat {
        let [a1, a2, a3] = self.0;
        let z = C64::new(0.0, 0.0);
        CMat::new(z, a1, a2, -a1, z, -a3, -a2, a3, z)
    }

    pub fn from_cmat(m: &CMat) -> Self {
        CAlg([
            (m[(0, 1)] - m[(1, 0)]) * 0.5,
            (m[(0, 2)] - m[(2, 0)]) * 0.5,
            (m[(2, 1)] - m[(1, 2)]) * 0.5,
        ])
    }
}

impl Add for CAlg {
    type Output = CAlg;
    fn add(self, o: CAlg) -> CAlg {
        CAlg([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for CAlg {
    fn add_assign(&mut self, o: CAlg) {
        for s in 0..3 {
            self.0[s] += o.0[s];
        }
    }
}

impl Sub for CAlg {
    type Output = CAlg;
    fn sub(self, o: CAlg) -> CAlg {
        CAlg([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl SubAssign for CAlg {
    fn sub_assign(&mut self, o: CAlg) {
        for s in 0..3 {
            self.0[s] -= o.0[s];
        }
    }
}

impl Neg for CAlg {
    type Output = CAlg;
    fn neg(self) -> CAlg {
        CAlg([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// A rotation matrix, kept on the group by polar re-projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot(RMat);

impl Rot {
    pub fn identity() -> Self {
        Rot(RMat::identity())
    }

    /// Wraps `m`, projecting onto SO(3) when `‖mᵀm − I‖ > 1e-13`.
    pub fn new(m: RMat) -> Self {
        let drift = (m.transpose() * m - RMat::identity()).norm();
        if drift > DRIFT_TOL {
            Rot(polar_project(&m))
        } else {
            Rot(m)
        }
    }

    pub fn matrix(&self) -> &RMat {
        &self.0
    }

    pub fn inverse(&self) -> Rot {
        Rot(self.0.transpose())
    }

    pub fn compose(&self, o: &Rot) -> Rot {
        Rot::new(self.0 * o.0)
    }

    pub fn to_cmat(&self) -> CMat {
        self.0.map(|x| C64::new(x, 0.0))
    }

    pub fn orthogonality_defect(&self) -> f64 {
        (self.0.transpose() * self.0 - RMat::identity()).norm()
    }
}

/// Nearest orthogonal matrix with determinant one.
pub fn polar_project(m: &RMat) -> RMat {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        // flip along the smallest singular direction
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let mut flip = RMat::identity();
        flip[(imin, imin)] = -1.0;
        r = u * flip * vt;
    }
    r
}

/// `exp` of the matrix form of `v` (Rodrigues).
pub fn alg_exp(v: AlgVec) -> Rot {
    let th2 = v.dot(&v);
    let (f1, f2) = rodrigues_coeffs_real(th2);
    let m = v.matrix();
    Rot::new(RMat::identity() + m * f1 + m * m * f2)
}

fn rodrigues_coeffs_real(th2: f64) -> (f64, f64) {
    if th2 < 1e-6 {
        let f1 = 1.0 - th2 / 6.0 + th2 * th2 / 120.0 - th2 * th2 * th2 / 5040.0;
        let f2 = 0.5 - th2 / 24.0 + th2 * th2 / 720.0 - th2 * th2 * th2 / 40320.0;
        (f1, f2)
    } else {
        let th = th2.sqrt();
        (th.sin() / th, (1.0 - th.cos()) / th2)
    }
}

/// `exp` of a complexified algebra element; valid off the real axis as well.
pub fn cexp(v: &CAlg) -> CMat {
    let th2 = v.quad();
    let (f1, f2) = if th2.norm() < 1e-4 {
        // entire series in th2
        let mut f1 = C64::new(0.0, 0.0);
        let mut f2 = C64::new(0.0, 0.0);
        let mut p = C64::new(1.0, 0.0);
        let mut fact_odd = 1.0; // (2n+1)!
        let mut fact_even = 2.0; // (2n+2)!
        for n in 0..8 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            f1 += p * (sign / fact_odd);
            f2 += p * (sign / fact_even);
            p *= th2;
            let k = 2.0 * n as f64;
            fact_odd *= (k + 2.0) * (k + 3.0);
            fact_even *= (k + 3.0) * (k + 4.0);
        }
        (f1, f2)
    } else {
        let th = th2.sqrt();
        (th.sin() / th, (C64::new(1.0, 0.0) - th.cos()) / th2)
    };
    let m = v.matrix();
    CMat::identity() + m * f1 + m * m * f2
}

/// Principal logarithm: angle in `[0, π)`.
pub fn rot_log(r: &Rot) -> Result<AlgVec> {
    log_impl(r, None)
}

/// Logarithm on the branch closest to `hint`; resolves the cut at angle π.
pub fn rot_log_hint(r: &Rot, hint: AlgVec) -> Result<AlgVec> {
    log_impl(r, Some(hint))
}

fn log_impl(r: &Rot, hint: Option<AlgVec>) -> Result<AlgVec> {
    let m = r.matrix();
    let skew = AlgVec::from_matrix(m);
    let s = skew.norm();
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);

    let principal: Option<AlgVec> = if theta < 1e-6 {
        let th2 = theta * theta;
        Some((1.0 + th2 / 6.0 + 7.0 * th2 * th2 / 360.0) * skew)
    } else if PI - theta > 1e-3 {
        Some((theta / theta.sin()) * skew)
    } else {
        None
    };

    let base = match principal {
        Some(v) => v,
        None => {
            // near π: axis from the symmetric part, sign from the antisymmetric part or the hint
            let sym = (m + m.transpose()) * 0.5 - RMat::identity() * c;
            let mut best = 0;
            for i in 1..3 {
                if sym[(i, i)] > sym[(best, best)] {
                    best = i;
                }
            }
            let col = sym.column(best);
            let nrm = col.norm();
            let mut n = [col[0] / nrm, col[1] / nrm, col[2] / nrm];
            let cand = AlgVec::from_hat_axis(n);
            let sign_ref = if s > 1e-12 { Some(skew) } else { hint };
            match sign_ref {
                Some(h) if cand.dot(&h) < 0.0 => {
                    n = [-n[0], -n[1], -n[2]];
                }
                Some(_) => {}
                None => return Err(Error::AngleAtCut { angle: theta }),
            }
            if hint.is_none() && PI - theta < CUT_TOL {
                return Err(Error::AngleAtCut { angle: theta });
            }
            theta * AlgVec::from_hat_axis(n)
        }
    };

    let h = match hint {
        None => return Ok(base),
        Some(h) => h,
    };
    // branch selection: candidates (θ + 2πm) n
    let (n_axis, th) = if theta < 1e-9 {
        if h.norm() < 1e-12 {
            return Ok(base);
        }
        let hn = h.norm();
        ((1.0 / hn) * h, 0.0)
    } else {
        ((1.0 / base.norm()) * base, base.norm())
    };
    let proj = n_axis.dot(&h);
    let m0 = ((proj - th) / (2.0 * PI)).round() as i64;
    let mut cands: Vec<(f64, AlgVec)> = (m0 - 2..=m0 + 2)
        .map(|m| {
            let v = (th + 2.0 * PI * m as f64) * n_axis;
            ((v - h).norm(), v)
        })
        .collect();
    cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if theta > 1e-9 && (cands[1].0 - cands[0].0).abs() < 1e-9 * (1.0 + cands[0].0) {
        return Err(Error::AngleAtCut { angle: theta });
    }
    Ok(cands[0].1)
}

/// `Ad(R) v = R v R⁻¹`.
pub fn adjoint(r: &Rot, v: AlgVec) -> AlgVec {
    let m = r.matrix();
    AlgVec::from_matrix(&(m * v.matrix() * m.transpose()))
}

/// `Ad(R)` acting on a complexified element.
pub fn adjoint_c(r: &Rot, v: &CAlg) -> CAlg {
    let m = r.to_cmat();
    CAlg::from_cmat(&(m * v.matrix() * m.transpose()))
}

/// `k`-th exterior power of a 3×3 complex matrix in the lexicographic basis.
pub fn compound(m: &CMat, k: usize) -> DMatrix<C64> {
    match k {
        1 => DMatrix::from_fn(3, 3, |i, j| m[(i, j)]),
        2 => {
            const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
            DMatrix::from_fn(3, 3, |i, j| {
                let (r0, r1) = PAIRS[i];
                let (c0, c1) = PAIRS[j];
                m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)]
            })
        }
        3 => DMatrix::from_element(1, 1, m.determinant()),
        _ => panic!("compound order {k} out of range"),
    }
}

/// Second exterior power as a fixed-size matrix (hot path of the Lyapunov estimator).
pub fn compound2(m: &CMat) -> CMat {
    const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
    CMat::from_fn(|i, j| {
        let (r0, r1) = PAIRS[i];
        let (c0, c1) = PAIRS[j];
        m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)]
    })
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m)[0]
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> [f64; 3] {
    let sv = m.singular_values();
    let mut v = [sv[0], sv[1], sv[2]];
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

pub fn op_norm_real(m: &RMat) -> f64 {
    m.singular_values().max()
}

/// Unitary frame `Q` and descending vector `d` with `v = Q · 2πi diag(d) · Q⁻¹`.
pub fn eig_frame(v: AlgVec) -> (CMat, [f64; 3]) {
    let r = v.norm();
    if r == 0.0 {
        return (CMat::identity(), [0.0, 0.0, 0.0]);
    }
    let w = v.hat_axis();
    let n = nalgebra::Vector3::new(w[0] / r, w[1] / r, w[2] / r);
    let seed = if n[0].abs() < 0.9 {
        nalgebra::Vector3::new(1.0, 0.0, 0.0)
    } else {
        nalgebra::Vector3::new(0.0, 1.0, 0.0)
    };
    let u1 = (seed - n * n.dot(&seed)).normalize();
    let u2 = n.cross(&u1);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let i = C64::new(0.0, 1.0);
    let col_plus = u1.map(|x| C64::new(x * s, 0.0)) - u2.map(|x| i * x * s);
    let col_zero = n.map(|x| C64::new(x, 0.0));
    let col_minus = u1.map(|x| C64::new(x * s, 0.0)) + u2.map(|x| i * x * s);
    let q = CMat::from_columns(&[col_plus, col_zero, col_minus]);
    let d = r / (2.0 * PI);
    (q, [d, 0.0, -d])
}

pub fn cmat_from_real(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn taylor_exp(m: &RMat) -> RMat {
        let mut acc = RMat::identity();
        let mut term = RMat::identity();
        for n in 1..=40 {
            term = term * m / n as f64;
            acc += term;
        }
        acc
    }

    fn rand_vec(rng: &mut ChaCha8Rng, scale: f64) -> AlgVec {
        AlgVec::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    #[test]
    fn bracket_table_holds_for_matrices() {
        let (j1, j2, j3) = (basis(1), basis(2), basis(3));
        assert_eq!(bracket_mat(&j1, &j2), j3);
        assert_eq!(bracket_mat(&j2, &j3), j1);
        assert_eq!(bracket_mat(&j3, &j1), j2);
    }

    #[test]
    fn coordinate_bracket_matches_matrix_bracket() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = rand_vec(&mut rng, 2.0);
            let b = rand_vec(&mut rng, 2.0);
            let lhs = a.bracket(&b).matrix();
            let rhs = bracket_mat(&a.matrix(), &b.matrix());
            assert!((lhs - rhs).norm() < 1e-14);
        }
    }

    #[test]
    fn jacobi_identity_on_basis() {
        let j = [basis(1), basis(2), basis(3)];
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let t = bracket_mat(&j[a], &bracket_mat(&j[b], &j[c]))
                        + bracket_mat(&j[b], &bracket_mat(&j[c], &j[a]))
                        + bracket_mat(&j[c], &bracket_mat(&j[a], &j[b]));
                    assert_eq!(t, RMat::zeros());
                }
            }
        }
    }

    #[test]
    fn exp_trivial_cases() {
        assert_eq!(*alg_exp(AlgVec::ZERO).matrix(), RMat::identity());
        let full = alg_exp(AlgVec::j1(2.0 * PI));
        assert!((full.matrix() - RMat::identity()).norm() < 1e-14);
    }

    #[test]
    fn exp_quarter_turn_matches_taylor() {
        let v = AlgVec::j1(PI / 2.0);
        let r = alg_exp(v);
        let expect = RMat::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r.matrix() - expect).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let v = rand_vec(&mut rng, 3.0);
            assert!((alg_exp(v).matrix() - taylor_exp(&v.matrix())).norm() < 1e-12);
        }
    }

    #[test]
    fn complex_exp_agrees_with_taylor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let v = CAlg([
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            ]);
            let m = v.matrix();
            let mut acc = CMat::identity();
            let mut term = CMat::identity();
            for n in 1..=60 {
                term = term * m / C64::new(n as f64, 0.0);
                acc += term;
            }
            assert!((cexp(&v) - acc).norm() < 1e-12);
            let tiny = v.scale(C64::new(1e-3, 0.0));
            let m = tiny.matrix();
            let approx = CMat::identity() + m + m * m * C64::new(0.5, 0.0) + m * m * m / C64::new(6.0, 0.0);
            assert!((cexp(&tiny) - approx).norm() < 1e-11);
        }
    }

    #[test]
    fn log_examples() {
        assert_eq!(rot_log(&Rot::identity()).unwrap(), AlgVec::ZERO);
        let v = rot_log(&alg_exp(AlgVec::j1(0.3))).unwrap();
        assert!((v - AlgVec::j1(0.3)).norm() < 1e-14);
    }

    #[test]
    fn log_about_third_axis_matches_axis_angle() {
        // rotation by 3.0 rad with J3 as its axis, written out by hand
        let (c, s) = (3.0f64.cos(), 3.0f64.sin());
        let m = RMat::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c);
        let v = rot_log(&Rot::new(m)).unwrap();
        let angle = ((m.trace() - 1.0) / 2.0).acos();
        assert!((v.norm() - angle).abs() < 1e-12);
        assert!((v - AlgVec::new(0.0, 0.0, 3.0)).norm() < 1e-12);
        assert!((alg_exp(v).matrix() - m).norm() < 1e-12);
    }

    #[test]
    fn log_refuses_at_cut_without_hint() {
        let r = alg_exp(AlgVec::new(0.0, PI, 0.0));
        assert!(matches!(rot_log(&r), Err(Error::AngleAtCut { .. })));
        let v = rot_log_hint(&r, AlgVec::new(0.0, 3.0, 0.0)).unwrap();
        assert!((v - AlgVec::new(0.0, PI, 0.0)).norm() < 1e-6);
        let w = rot_log_hint(&r, AlgVec::new(0.0, -3.0, 0.0)).unwrap();
        assert!((w - AlgVec::new(0.0, -PI, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn hinted_log_picks_far_branch() {
        let v = AlgVec::new(0.0, 0.0, 5.0);
        let r = alg_exp(v);
        assert!(rot_log(&r).unwrap().norm() < PI);
        let w = rot_log_hint(&r, AlgVec::new(0.0, 0.0, 4.8)).unwrap();
        assert!((w - v).norm() < 1e-12);
    }

    #[test]
    fn adjoint_examples() {
        let v = AlgVec::new(0.2, -0.4, 1.1);
        assert!((adjoint(&Rot::identity(), v) - v).norm() < 1e-15);
        let r = alg_exp(AlgVec::j1(0.77));
        assert!((adjoint(&r, AlgVec::j1(1.0)) - AlgVec::j1(1.0)).norm() < 1e-15);
        let r = alg_exp(AlgVec::j1(PI / 2.0));
        let direct = AlgVec::from_matrix(&(r.matrix() * basis(2) * r.matrix().transpose()));
        let got = adjoint(&r, AlgVec::new(0.0, 1.0, 0.0));
        assert!((got - direct).norm() < 1e-15);
        // exp(tJ1) J2 exp(-tJ1) = cos t J2 + sin t J3
        assert!((got - AlgVec::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn compound_examples() {
        let i2 = compound(&CMat::identity(), 2);
        assert_eq!(i2, DMatrix::identity(3, 3));
        let d = cmat_from_real(&RMat::from_diagonal(&nalgebra::Vector3::new(2.0, 3.0, 5.0)));
        let c = compound(&d, 2);
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(6.0, 0.0),
            C64::new(10.0, 0.0),
            C64::new(15.0, 0.0),
        ]));
        assert_eq!(c, expect);
        assert_eq!(compound(&d, 3)[(0, 0)], C64::new(30.0, 0.0));
    }

    #[test]
    fn compound_of_rotation_is_signed_cofactor() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let r = alg_exp(rand_vec(&mut rng, 3.0));
            let c = compound(&r.to_cmat(), 2);
            // pair (0,1),(0,2),(1,2) has complementary index 2,1,0
            let comp = [2usize, 1, 0];
            for i in 0..3 {
                for j in 0..3 {
                    let sign = if (comp[i] + comp[j]) % 2 == 0 { 1.0 } else { -1.0 };
                    let want = sign * r.matrix()[(comp[i], comp[j])];
                    assert!((c[(i, j)].re - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn compound_log_norm_is_sum_of_log_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let m = CMat::from_fn(|_, _| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)));
            let sv = singular_values(&m);
            let c2 = compound2(&m);
            let lhs = op_norm(&c2).ln();
            let rhs = sv[0].ln() + sv[1].ln();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn eig_frame_examples() {
        assert_eq!(eig_frame(AlgVec::ZERO).1, [0.0, 0.0, 0.0]);
        let (q, d) = eig_frame(AlgVec::j1(4.0 * PI));
        assert!((d[0] - 2.0).abs() < 1e-14 && d[1] == 0.0 && (d[2] + 2.0).abs() < 1e-14);
        let v = AlgVec::new(1.0, 2.0, -2.0);
        let v = (2.0 * PI / v.norm()) * v;
        let (q2, d2) = eig_frame(v);
        assert!((d2[0] - 1.0).abs() < 1e-14);
        for (q, d, v) in [(q, d, AlgVec::j1(4.0 * PI)), (q2, d2, v)] {
            let diag = CMat::from_diagonal(&nalgebra::Vector3::new(
                C64::new(0.0, 2.0 * PI * d[0]),
                C64::new(0.0, 2.0 * PI * d[1]),
                C64::new(0.0, 2.0 * PI * d[2]),
            ));
            let recon = q * diag * q.adjoint();
            assert!((recon - cmat_from_real(&v.matrix())).norm() < 1e-12);
            assert!((q.adjoint() * q - CMat::identity()).norm() < 1e-14);
        }
    }

    #[test]
    fn polar_projection_restores_group() {
        let r = alg_exp(AlgVec::new(0.3, 0.1, -0.5));
        let noisy = r.matrix() + RMat::from_fn(|i, j| 1e-9 * ((i * 3 + j) as f64 - 4.0));
        let p = Rot::new(noisy);
        assert!(p.orthogonality_defect() < 1e-14);
        assert!((p.matrix().determinant() - 1.0).abs() < 1e-14);
        assert!((p.matrix() - r.matrix()).norm() < 1e-8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn alg() -> impl Strategy<Value = AlgVec> {
            (-6.0..6.0f64, -6.0..6.0f64, -6.0..6.0f64).prop_map(|(a, b, c)| AlgVec::new(a, b, c))
        }

        fn cmat() -> impl Strategy<Value = CMat> {
            proptest::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 9)
                .prop_map(|v| CMat::from_fn(|i, j| C64::new(v[3 * i + j].0, v[3 * i + j].1)))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]
            #[test]
            fn exp_times_inverse_is_identity(v in alg(), w in alg()) {
                let r = alg_exp(v);
                prop_assert!((r.matrix() * r.inverse().matrix() - RMat::identity()).norm() < 1e-12);
                prop_assert!((adjoint(&r, w).norm() - w.norm()).abs() < 1e-12);
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]
            #[test]
            fn compound_is_multiplicative(a in cmat(), b in cmat(), k in 1usize..=3) {
                let lhs = compound(&(a * b), k);
                let rhs = compound(&a, k) * compound(&b, k);
                let scale = 1.0 + lhs.norm();
                prop_assert!((lhs - rhs).norm() / scale < 1e-10);
            }

            #[test]
            fn log_inverts_exp_below_pi(dir in alg(), t in 0.0..(PI - 0.01)) {
                prop_assume!(dir.norm() > 1e-3);
                let v = (t / dir.norm()) * dir;
                let w = rot_log(&alg_exp(v)).unwrap();
                prop_assert!((w - v).norm() < 1e-10);
            }
        }
    }
}
