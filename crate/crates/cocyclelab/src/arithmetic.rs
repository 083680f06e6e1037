//! Continued fractions, Diophantine checks and the resonant-lattice lemma.
//!
//! Partial quotients are computed exactly: quadratic surds by integer
//! arithmetic in Q(√d), decimals as exact rationals with an interval of
//! trust, and explicit quotient lists directly.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::{Integer, Roots};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PRECISION_BITS: u32 = 256;

/// Working precision from `COCYCLELAB_PRECISION_BITS`, default 256.
pub fn precision_bits() -> u32 {
    std::env::var("COCYCLELAB_PRECISION_BITS")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&b| b >= 64)
        .unwrap_or(DEFAULT_PRECISION_BITS)
}

/// Frequency input as it appears in cocycle specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AlphaSpec {
    Decimal { digits: String },
    /// `(a + b√d)/c`.
    Surd { a: i64, b: i64, d: i64, c: i64 },
    /// `[a0; a1, a2, ...]`; the last `period` entries repeat forever when given.
    Cf {
        quotients: Vec<u64>,
        #[serde(default)]
        period: Option<usize>,
    },
}

impl AlphaSpec {
    pub fn golden() -> Self {
        AlphaSpec::Surd { a: -1, b: 1, d: 5, c: 2 }
    }

    pub fn sqrt2_minus_1() -> Self {
        AlphaSpec::Surd { a: -1, b: 1, d: 2, c: 1 }
    }

    /// `e - 2 = [0; 1, 2, 1, 1, 4, 1, 1, 6, ...]`, truncated after `len` quotients.
    pub fn e_minus_2(len: usize) -> Self {
        let mut q = vec![0u64];
        let mut j = 1u64;
        while q.len() <= len {
            q.push(1);
            q.push(2 * j);
            q.push(1);
            j += 1;
        }
        q.truncate(len + 1);
        AlphaSpec::Cf { quotients: q, period: None }
    }

    /// Decimal string of `Σ_{n<=terms} 10^{-n!}`.
    pub fn liouville(terms: u32) -> Self {
        let mut last = 0usize;
        let mut digits = vec![b'0'; 1];
        let mut fact = 1usize;
        for n in 1..=terms as usize {
            fact *= n;
            last = last.max(fact);
            if digits.len() < fact {
                digits.resize(fact, b'0');
            }
            digits[fact - 1] = b'1';
        }
        digits.truncate(last);
        AlphaSpec::Decimal { digits: format!("0.{}", String::from_utf8(digits).unwrap()) }
    }

    pub fn to_f64(&self) -> Result<f64> {
        Ok(Alpha::parse(self)?.approx(precision_bits()).to_f64().unwrap_or(f64::NAN))
    }
}

/// A complete quotient `(P + √D)/Q` with `Q | D − P²`.
#[derive(Debug, Clone, PartialEq)]
struct QuadSurd {
    p: BigInt,
    d: BigInt,
    q: BigInt,
}

impl QuadSurd {
    fn new(a: i64, b: i64, d: i64, c: i64) -> Result<Self> {
        if c == 0 || d <= 0 || b == 0 {
            return Err(Error::Input(format!("degenerate surd ({a} + {b}√{d})/{c}")));
        }
        let (mut p, mut q) = if b > 0 { (BigInt::from(a), BigInt::from(c)) } else { (BigInt::from(-a), BigInt::from(-c)) };
        let mut dd = BigInt::from(b) * BigInt::from(b) * BigInt::from(d);
        if !(&dd - &p * &p).is_multiple_of(&q) {
            let qa = q.abs();
            p *= &qa;
            dd *= &qa * &qa;
            q *= &qa;
        }
        Ok(QuadSurd { p, d: dd, q })
    }

    /// `value >= m`, decided exactly.
    fn ge(&self, m: &BigInt) -> bool {
        let t = m * &self.q - &self.p;
        if self.q.is_positive() {
            !t.is_positive() || self.d >= &t * &t
        } else {
            !t.is_negative() && self.d <= &t * &t
        }
    }

    fn approx(&self, bits: u32) -> BigRational {
        let scale = BigInt::one() << bits;
        let s = (&self.d << (2 * bits)).sqrt();
        BigRational::new(&self.p * &scale + s, &self.q * &scale)
    }

    fn floor(&self) -> BigInt {
        let guess = self.approx(64).floor().to_integer();
        let mut m = guess - 2;
        while self.ge(&(&m + 1)) {
            m += 1;
        }
        while !self.ge(&m) {
            m -= 1;
        }
        m
    }

    /// `1/(x − a)` for `a = floor(x)`.
    fn gauss_step(&self, a: &BigInt) -> Self {
        let p1 = a * &self.q - &self.p;
        let q1 = (&self.d - &p1 * &p1) / &self.q;
        QuadSurd { p: p1, d: self.d.clone(), q: q1 }
    }
}

/// Exact frequency data.
#[derive(Debug, Clone)]
pub enum Alpha {
    Surd(QuadSurdPub),
    Rational(BigRational),
    Decimal { center: BigRational, radius: BigRational },
    Quotients { list: Vec<u64>, period: Option<usize> },
}

/// Opaque handle for a quadratic irrational.
#[derive(Debug, Clone)]
pub struct QuadSurdPub(QuadSurd);

impl Alpha {
    pub fn parse(spec: &AlphaSpec) -> Result<Self> {
        match spec {
            AlphaSpec::Surd { a, b, d, c } => {
                let r = (*d as u64).sqrt();
                if *d >= 0 && r * r == *d as u64 {
                    let num = BigInt::from(*a) + BigInt::from(*b) * BigInt::from(r);
                    return Ok(Alpha::Rational(BigRational::new(num, BigInt::from(*c))));
                }
                Ok(Alpha::Surd(QuadSurdPub(QuadSurd::new(*a, *b, *d, *c)?)))
            }
            AlphaSpec::Decimal { digits } => {
                let (center, places) = parse_decimal(digits)?;
                let radius = BigRational::new(BigInt::one(), BigInt::from(2) * BigInt::from(10).pow(places as u32));
                Ok(Alpha::Decimal { center, radius })
            }
            AlphaSpec::Cf { quotients, period } => {
                if quotients.is_empty() {
                    return Err(Error::Input("empty quotient list".into()));
                }
                if let Some(per) = period {
                    if *per == 0 || *per > quotients.len() - 1 {
                        return Err(Error::Input(format!("period {per} does not fit the quotient list")));
                    }
                }
                if quotients[1..].iter().any(|&a| a == 0) {
                    return Err(Error::Input("partial quotients after the first must be positive".into()));
                }
                Ok(Alpha::Quotients { list: quotients.clone(), period: *period })
            }
        }
    }

    /// Rational approximation to within `2^-bits`.
    pub fn approx(&self, bits: u32) -> BigRational {
        match self {
            Alpha::Surd(s) => s.0.approx(bits),
            Alpha::Rational(r) => r.clone(),
            Alpha::Decimal { center, .. } => center.clone(),
            Alpha::Quotients { list, period } => {
                // convergents until the denominator exceeds 2^(bits/2 + 1)
                let target = BigInt::one() << (bits / 2 + 1);
                let (mut p0, mut q0) = (BigInt::one(), BigInt::zero());
                let (mut p1, mut q1) = (BigInt::from(list[0]), BigInt::one());
                let mut n = 1;
                while let Some(a) = quotient_at(list, *period, n) {
                    let a = BigInt::from(a);
                    let p2 = &a * &p1 + &p0;
                    let q2 = &a * &q1 + &q0;
                    p0 = std::mem::replace(&mut p1, p2);
                    q0 = std::mem::replace(&mut q1, q2);
                    n += 1;
                    if q1 > target {
                        break;
                    }
                }
                BigRational::new(p1, q1)
            }
        }
    }
}

fn quotient_at(list: &[u64], period: Option<usize>, n: usize) -> Option<u64> {
    if n < list.len() {
        return Some(list[n]);
    }
    let per = period?;
    let start = list.len() - per;
    Some(list[start + (n - start) % per])
}

fn parse_decimal(s: &str) -> Result<(BigRational, usize)> {
    let s = s.trim().trim_end_matches('…').trim_end_matches("...");
    let (int_part, frac) = s.split_once('.').unwrap_or((s, ""));
    if int_part.is_empty() && frac.is_empty() {
        return Err(Error::Input(format!("cannot parse decimal '{s}'")));
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(Error::Input(format!("cannot parse decimal '{s}'")));
    }
    let digits = format!("{int_part}{frac}");
    let num: BigInt = digits.parse().map_err(|_| Error::Input(format!("cannot parse decimal '{s}'")))?;
    let den = BigInt::from(10).pow(frac.len() as u32);
    Ok((BigRational::new(num, den), frac.len()))
}

/// Continued-fraction expansion of a rational, terminating.
fn rational_cf(x: &BigRational, max: usize) -> Vec<BigInt> {
    let mut out = Vec::new();
    let mut x = x.clone();
    loop {
        let a = x.floor().to_integer();
        out.push(a.clone());
        let frac = &x - BigRational::from_integer(a);
        if frac.is_zero() || out.len() > max {
            return out;
        }
        x = frac.recip();
    }
}

/// Expansion data of `α ∈ (0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CFData {
    pub alpha: f64,
    /// Partial quotients `a_0 .. a_{depth+1}` with `a_0 = 0`.
    pub a: Vec<u64>,
    /// Convergents `p_n, q_n` for `n = 0 .. depth+1`.
    pub p: Vec<BigInt>,
    pub q: Vec<BigInt>,
    /// Gauss iterates `α_n`, `n = 0 .. depth`.
    pub alpha_n: Vec<f64>,
    /// `β_n = α_0 ⋯ α_n`.
    pub beta: Vec<f64>,
    pub depth: usize,
}

impl CFData {
    pub fn q_i64(&self, n: usize) -> i64 {
        self.q[n].to_i64().expect("denominator fits i64")
    }

    pub fn p_i64(&self, n: usize) -> i64 {
        self.p[n].to_i64().expect("numerator fits i64")
    }

    /// `q_{-1} = 0`, `p_{-1} = 1`.
    pub fn q_signed(&self, n: isize) -> i64 {
        if n < 0 {
            0
        } else {
            self.q_i64(n as usize)
        }
    }

    pub fn p_signed(&self, n: isize) -> i64 {
        if n < 0 {
            1
        } else {
            self.p_i64(n as usize)
        }
    }

    /// `β_{-1} = 1`.
    pub fn beta_signed(&self, n: isize) -> f64 {
        if n < 0 {
            1.0
        } else {
            self.beta[n as usize]
        }
    }

    /// `Q_n = (−1)^n [[p_{n−1}, −q_{n−1}], [−p_n, q_n]]`.
    pub fn q_matrix(&self, n: usize) -> [[BigInt; 2]; 2] {
        let s = if n % 2 == 0 { BigInt::one() } else { -BigInt::one() };
        let (pm, qm) = if n == 0 { (BigInt::one(), BigInt::zero()) } else { (self.p[n - 1].clone(), self.q[n - 1].clone()) };
        [[&s * pm, -&s * qm], [-&s * &self.p[n], &s * &self.q[n]]]
    }
}

/// `U(x) = [[0, 1], [1, −⌊1/x⌋]]` given the quotient.
pub fn u_matrix(a: u64) -> [[BigInt; 2]; 2] {
    [[BigInt::zero(), BigInt::one()], [BigInt::one(), -BigInt::from(a)]]
}

pub fn mat2_mul(x: &[[BigInt; 2]; 2], y: &[[BigInt; 2]; 2]) -> [[BigInt; 2]; 2] {
    let e = |i: usize, j: usize| &x[i][0] * &y[0][j] + &x[i][1] * &y[1][j];
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

pub fn cf_expand(spec: &AlphaSpec, depth: usize) -> Result<CFData> {
    cf_expand_bits(spec, depth, precision_bits())
}

pub fn cf_expand_bits(spec: &AlphaSpec, depth: usize, bits: u32) -> Result<CFData> {
    if depth < 1 {
        return Err(Error::Input("depth must be at least 1".into()));
    }
    let alpha = Alpha::parse(spec)?;
    let hp = alpha.approx(bits);
    let zero = BigRational::zero();
    let one = BigRational::one();
    if hp <= zero || hp >= one {
        return Err(Error::Input("frequency must lie in (0, 1)".into()));
    }
    let need = depth + 2;

    // partial quotients a_0..a_{depth+1} and α_n for n <= depth
    let (a, alpha_n): (Vec<u64>, Vec<f64>) = match &alpha {
        Alpha::Surd(s) => {
            let mut x = s.0.clone();
            let mut a = Vec::new();
            let mut an = Vec::new();
            for _ in 0..need {
                let f = x.floor();
                let frac = x.approx(bits) - BigRational::from_integer(f.clone());
                an.push(frac.to_f64().unwrap());
                a.push(f.to_u64().ok_or_else(|| Error::Input("quotient overflow".into()))?);
                x = x.gauss_step(&f);
            }
            an.truncate(depth + 1);
            (a, an)
        }
        Alpha::Rational(r) => {
            let terms = rational_cf(r, need);
            if terms.len() <= need {
                return Err(Error::RationalInput { index: terms.len() - 1 });
            }
            rational_quotients(r, need, depth)?
        }
        Alpha::Decimal { center, radius } => {
            let terms = rational_cf(center, need);
            if terms.len() <= need {
                return Err(Error::RationalInput { index: terms.len() - 1 });
            }
            let lo = rational_cf(&(center - radius), need + 2);
            let hi = rational_cf(&(center + radius), need + 2);
            let mut trusted = 0;
            while trusted < lo.len() - 1 && trusted < hi.len() - 1 && lo[trusted] == hi[trusted] {
                trusted += 1;
            }
            // quotients 0..trusted-1 are certain; a_{depth+1} is consumed downstream
            if trusted < need {
                return Err(Error::PrecisionExhausted { depth: trusted.saturating_sub(1) });
            }
            rational_quotients(center, need, depth)?
        }
        Alpha::Quotients { list, period } => {
            let mut a = Vec::new();
            for n in 0..need {
                match quotient_at(list, *period, n) {
                    Some(v) => a.push(v),
                    None => return Err(Error::RationalInput { index: n }),
                }
            }
            let an = (0..=depth)
                .map(|n| {
                    // α_n = [0; a_{n+1}, a_{n+2}, ...] by backward recursion
                    let mut t = 0.0f64;
                    let mut m = n + 120;
                    while m > n {
                        if let Some(v) = quotient_at(list, *period, m) {
                            t = 1.0 / (v as f64 + t);
                        }
                        m -= 1;
                    }
                    t
                })
                .collect();
            (a, an)
        }
    };
    if a[0] != 0 {
        return Err(Error::Input("frequency must lie in (0, 1)".into()));
    }

    let mut p = Vec::with_capacity(need);
    let mut q = Vec::with_capacity(need);
    let (mut pm2, mut qm2) = (BigInt::zero(), BigInt::one()); // n = -2 never used directly
    let (mut pm1, mut qm1) = (BigInt::one(), BigInt::zero()); // n = -1
    for (n, &an) in a.iter().enumerate() {
        let (pn, qn) = if n == 0 {
            (BigInt::zero(), BigInt::one())
        } else {
            let an = BigInt::from(an);
            (&an * &pm1 + &pm2, &an * &qm1 + &qm2)
        };
        pm2 = std::mem::replace(&mut pm1, pn.clone());
        qm2 = std::mem::replace(&mut qm1, qn.clone());
        p.push(pn);
        q.push(qn);
    }

    let mut beta = Vec::with_capacity(depth + 1);
    let mut prod = 1.0;
    for &x in &alpha_n {
        prod *= x;
        beta.push(prod);
    }

    let floor = 10.0 * (2.0f64).powi(-(bits as i32));
    for n in 0..=depth {
        if beta[n] < floor {
            return Err(Error::PrecisionExhausted { depth: n });
        }
        if alpha_n[n] <= 0.0 {
            return Err(Error::RationalInput { index: n });
        }
    }

    let data = CFData { alpha: hp.to_f64().unwrap(), a, p, q, alpha_n, beta, depth };
    verify_cf(&data, &hp, bits)?;
    Ok(data)
}

fn rational_quotients(r: &BigRational, need: usize, depth: usize) -> Result<(Vec<u64>, Vec<f64>)> {
    let mut x = r.clone();
    let mut a = Vec::new();
    let mut an = Vec::new();
    for n in 0..need {
        let f = x.floor().to_integer();
        let frac = &x - BigRational::from_integer(f.clone());
        a.push(f.to_u64().ok_or_else(|| Error::Input("quotient overflow".into()))?);
        if n <= depth {
            an.push(frac.to_f64().unwrap());
        }
        if frac.is_zero() {
            return Err(Error::RationalInput { index: n });
        }
        x = frac.recip();
    }
    Ok((a, an))
}

fn verify_cf(d: &CFData, hp: &BigRational, bits: u32) -> Result<()> {
    for n in 0..=d.depth {
        let b = d.beta[n];
        // β_n = 1/(q_{n+1} + α_{n+1} q_n), with α_{n+1} from the next Gauss step
        let qn = d.q[n].to_f64().unwrap();
        let qn1 = d.q[n + 1].to_f64().unwrap();
        let lo = 1.0 / (qn1 + qn);
        let hi = 1.0 / qn1;
        let tol = 1e-12;
        if !(b > lo * (1.0 - tol) && b < hi * (1.0 + tol)) {
            return Err(Error::Assertion(format!("beta bracket failed at n={n}: {lo} < {b} < {hi}")));
        }
        if n < d.depth {
            let via = 1.0 / (qn1 + d.alpha_n[n + 1] * qn);
            if ((via - b) / b).abs() > 1e-12 {
                return Err(Error::Assertion(format!("beta identity failed at n={n}")));
            }
        }
        // (−1)^n (q_n α − p_n) in high precision, while the approximation error is negligible
        let err_scale = qn * (2.0f64).powi(-(bits as i32));
        if err_scale < 1e-14 * b {
            let v = BigRational::from_integer(d.q[n].clone()) * hp - BigRational::from_integer(d.p[n].clone());
            let v = if n % 2 == 0 { v } else { -v };
            let v = v.to_f64().unwrap();
            if ((v - b) / b).abs() > 1e-12 {
                return Err(Error::Assertion(format!("beta sign identity failed at n={n}")));
            }
        }
    }
    Ok(())
}

/// Result of an exhaustive Diophantine check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcReport {
    pub pass: bool,
    /// Pair `(p, q)` minimizing `‖qα‖ q^τ`.
    pub worst: (i64, i64),
    /// `min_q ‖qα‖ q^τ / κ`; below 1 means failure.
    pub margin: f64,
}

/// Checks `‖qα − p‖ > κ/q^τ` for every `0 < q <= q_max`.
pub fn dc_check(spec: &AlphaSpec, kappa: f64, tau: f64, q_max: u64) -> Result<DcReport> {
    let bits = precision_bits().max(128);
    let alpha = Alpha::parse(spec)?;
    let hp = alpha.approx(bits);
    // fixed point α·2^bits
    let scale = BigInt::one() << bits;
    let fixed = (hp * BigRational::from_integer(scale.clone())).round().to_integer();
    let (sign, mag) = fixed.into_parts();
    if sign == Sign::Minus {
        return Err(Error::Input("negative frequency".into()));
    }
    let modulus = BigUint::one() << bits;
    let half = BigUint::one() << (bits - 1);
    let mut best = f64::INFINITY;
    let mut worst = (0, 1);
    let mut acc = BigUint::zero();
    let mut whole = 0i64;
    for q in 1..=q_max {
        acc += &mag;
        while acc >= modulus {
            acc -= &modulus;
            whole += 1;
        }
        // nearest integer p and distance
        let (dist, p) = if acc >= half { (&modulus - &acc, whole + 1) } else { (acc.clone(), whole) };
        let d = BigRational::new(BigInt::from(dist), BigInt::from(modulus.clone())).to_f64().unwrap();
        let score = d * (q as f64).powf(tau) / kappa;
        if score < best {
            best = score;
            worst = (p, q as i64);
        }
    }
    Ok(DcReport { pass: best > 1.0, worst, margin: best })
}

/// Enumerates `{k : |⟨k,ω⟩| < 1/(7q), |k| < q₊/6}` with `ω = (α, 1)` and checks
/// that it lies on the line `ℤ(q, −p)`.
pub fn resonant_lattice(alpha: f64, q: i64, p: i64, q_plus: i64) -> Result<Vec<(i64, i64)>> {
    let bound = q_plus as f64 / 6.0;
    let thr = 1.0 / (7.0 * q as f64);
    let r = bound.ceil() as i64;
    let mut out = Vec::new();
    for k1 in -r..=r {
        let rem = r - k1.abs();
        for k2 in -rem..=rem {
            if ((k1.abs() + k2.abs()) as f64) >= bound {
                continue;
            }
            if (k1 as f64 * alpha + k2 as f64).abs() < thr {
                if k1 * p + k2 * q != 0 {
                    return Err(Error::LemmaViolated { q, p, k: (k1, k2) });
                }
                out.push((k1, k2));
            }
        }
    }
    Ok(out)
}

/// Gauss map `{1/x}`.
pub fn gauss(x: f64) -> f64 {
    let y = 1.0 / x;
    y - y.floor()
}
