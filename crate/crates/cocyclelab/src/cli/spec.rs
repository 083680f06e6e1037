use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra3::{AlgVec, CAlg, CMat, C64};
use crate::arithmetic::AlphaSpec;
use crate::cocycle::{normal_form_poly, Cocycle};
use crate::error::{Error, Result};
use crate::fourier::{exp_of, product, TrigPoly1, TrigPoly2};
use crate::kam::{random_field, LinearSystem};

/// One Fourier mode `v e^{2πikx}`; `v` holds `(re, im)` for each of `J1, J2, J3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: i64,
    pub v: [[f64; 2]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode2 {
    pub k: [i64; 2],
    pub v: [[f64; 2]; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    #[default]
    ExpSum,
    Product,
}

/// `exp(2πd x J1) · exp(φ(x))`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Factor {
    #[serde(default)]
    pub d: i64,
    #[serde(default)]
    pub coefficients: Vec<Mode>,
}

/// JSON description of a cocycle.
///
/// `exp-sum` reads `d` and `coefficients`; `product` reads `factors`, multiplied left to right.
/// A mode `k > 0` without a `−k` partner is mirrored by conjugation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocycleSpec {
    pub alpha: AlphaSpec,
    #[serde(default)]
    pub form: Form,
    #[serde(default)]
    pub d: i64,
    #[serde(default)]
    pub coefficients: Vec<Mode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<Factor>,
    pub h: f64,
}

fn calg(v: &[[f64; 2]; 3]) -> CAlg {
    CAlg::new(C64::new(v[0][0], v[0][1]), C64::new(v[1][0], v[1][1]), C64::new(v[2][0], v[2][1]))
}

fn pair(c: &CAlg) -> [[f64; 2]; 3] {
    c.0.map(|z| [z.re, z.im])
}

fn close(a: &CAlg, b: &CAlg) -> bool {
    (*a - *b).norm() <= 1e-12 * (1.0 + a.norm().max(b.norm()))
}

/// Real so(3)-valued polynomial from a mode list.
pub fn modes_to_poly(modes: &[Mode], h: f64) -> Result<TrigPoly1<CAlg>> {
    let mut table: BTreeMap<i64, CAlg> = BTreeMap::new();
    for m in modes {
        if table.insert(m.k, calg(&m.v)).is_some() {
            return Err(Error::Input(format!("mode {} listed twice", m.k)));
        }
    }
    let cutoff = table.keys().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0);
    let mut p = TrigPoly1::zeros(cutoff, h);
    for (&k, v) in &table {
        match table.get(&-k) {
            Some(w) if !close(&w.conj(), v) => {
                return Err(Error::Input(format!("modes {k} and {} are not conjugate; the cocycle must be real", -k)));
            }
            _ => {}
        }
        p.set(k, *v);
        if !table.contains_key(&-k) {
            p.set(-k, v.conj());
        }
    }
    p.real = true;
    Ok(p)
}

pub fn poly_to_modes(p: &TrigPoly1<CAlg>) -> Vec<Mode> {
    p.modes().filter(|(k, v)| *k >= 0 && v.norm() > 0.0).map(|(k, v)| Mode { k, v: pair(v) }).collect()
}

impl CocycleSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: CocycleSpec = serde_json::from_str(text).map_err(|e| Error::Input(format!("cocycle spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Input(format!("width h = {} must be positive", self.h)));
        }
        match self.form {
            Form::ExpSum if !self.factors.is_empty() => Err(Error::Input("exp-sum spec carries factors".into())),
            Form::Product if !self.coefficients.is_empty() || self.d != 0 => {
                Err(Error::Input("product spec takes its data from factors".into()))
            }
            _ => Ok(()),
        }
    }

    /// `exp(2π(dx + c0) J1)`.
    pub fn normal_form(alpha: AlphaSpec, d: i64, c0: f64, h: f64) -> Self {
        let v = [[2.0 * PI * c0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        CocycleSpec { alpha, form: Form::ExpSum, d, coefficients: vec![Mode { k: 0, v }], factors: vec![], h }
    }

    /// `exp(2πdxJ1) · exp(φ)`.
    pub fn exp_sum(alpha: AlphaSpec, d: i64, phi: &TrigPoly1<CAlg>, h: f64) -> Self {
        CocycleSpec { alpha, form: Form::ExpSum, d, coefficients: poly_to_modes(phi), factors: vec![], h }
    }

    /// Spec of `e^{ψ(x+α)} A(x) e^{−ψ(x)}` as a product.
    pub fn conjugated(&self, psi: &TrigPoly1<CAlg>) -> Result<Self> {
        let alpha = self.alpha.to_f64()?;
        let mut shifted = psi.shift_arg(C64::new(alpha, 0.0));
        shifted.real = true;
        let neg = psi.scale(C64::new(-1.0, 0.0));
        let middle = match self.form {
            Form::ExpSum => vec![Factor { d: self.d, coefficients: self.coefficients.clone() }],
            Form::Product => self.factors.clone(),
        };
        let mut factors = vec![Factor { d: 0, coefficients: poly_to_modes(&shifted) }];
        factors.extend(middle);
        factors.push(Factor { d: 0, coefficients: poly_to_modes(&neg) });
        Ok(CocycleSpec { alpha: self.alpha.clone(), form: Form::Product, d: 0, coefficients: vec![], factors, h: self.h })
    }

    /// Canonical serialization hashed with SHA-256.
    pub fn digest(&self) -> String {
        digest_of(self)
    }

    /// `(d, φ)` for an exp-sum spec.
    pub fn exp_sum_parts(&self) -> Result<Option<(i64, TrigPoly1<CAlg>)>> {
        match self.form {
            Form::ExpSum => Ok(Some((self.d, modes_to_poly(&self.coefficients, self.h)?))),
            Form::Product => Ok(None),
        }
    }

    pub fn build(&self) -> Result<Cocycle> {
        self.validate()?;
        match self.form {
            Form::ExpSum => {
                let phi = modes_to_poly(&self.coefficients, self.h)?;
                if let Some(c0) = pure_rotation(&phi) {
                    Cocycle::normal_form(self.alpha.clone(), self.d, c0, self.h)
                } else {
                    Cocycle::perturbed_normal_form(self.alpha.clone(), self.d, 0.0, &phi, self.h)
                }
            }
            Form::Product => {
                let mut a = TrigPoly1::constant(CMat::identity(), self.h);
                for f in &self.factors {
                    let phi = modes_to_poly(&f.coefficients, self.h)?;
                    let m = product(&normal_form_poly(f.d, 0.0, self.h), &exp_of(&phi));
                    a = product(&a, &m);
                }
                a.h = self.h;
                a.real = true;
                a.symmetrize();
                Cocycle::new(self.alpha.clone(), a, self.h)
            }
        }
    }
}

/// `c0` when `φ = 2πc0 J1` is constant.
fn pure_rotation(phi: &TrigPoly1<CAlg>) -> Option<f64> {
    let c = phi.get(0);
    let off = phi.modes().any(|(k, v)| k != 0 && v.norm() > 0.0);
    if off || c.0[1].norm() > 0.0 || c.0[2].norm() > 0.0 || c.0[0].im != 0.0 {
        return None;
    }
    Some(c.0[0].re / (2.0 * PI))
}

pub fn digest_of<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("spec types serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Seeded random content for a linear system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomBlock {
    pub seed: u64,
    pub size: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
}

fn default_decay() -> f64 {
    0.75
}

fn default_cutoff() -> usize {
    6
}

/// `X' = (C + F(θ)) X` on `T²` with `θ' = (α, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub alpha: AlphaSpec,
    /// Real coordinates of `C`.
    pub c: [f64; 3],
    pub h: f64,
    #[serde(default)]
    pub coefficients: Vec<Mode2>,
    #[serde(default)]
    pub random: Option<RandomBlock>,
}

impl SystemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SystemSpec = serde_json::from_str(text).map_err(|e| Error::Input(format!("system spec: {e}")))?;
        if !(spec.h > 0.0 && spec.h.is_finite()) {
            return Err(Error::Input(format!("width h = {} must be positive", spec.h)));
        }
        Ok(spec)
    }

    pub fn digest(&self) -> String {
        digest_of(self)
    }

    /// Replaces the random block's seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Some(r) = self.random.as_mut() {
            r.seed = seed;
        }
        self
    }

    pub fn build(&self) -> Result<LinearSystem> {
        let alpha = self.alpha.to_f64()?;
        let mut f = match &self.random {
            Some(r) => {
                let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
                random_field(&mut rng, r.cutoff, r.decay, r.size, self.h)
            }
            None => TrigPoly2::zeros(0, self.h),
        };
        let mut seen = BTreeMap::new();
        for m in &self.coefficients {
            let k = (m.k[0], m.k[1]);
            if seen.insert(k, ()).is_some() {
                return Err(Error::Input(format!("mode {k:?} listed twice")));
            }
        }
        for m in &self.coefficients {
            let k = (m.k[0], m.k[1]);
            let v = calg(&m.v);
            let nk = (-k.0, -k.1);
            if let Some(w) = self.coefficients.iter().find(|w| (w.k[0], w.k[1]) == nk) {
                if !close(&calg(&w.v).conj(), &v) {
                    return Err(Error::Input(format!("modes {k:?} and {nk:?} are not conjugate")));
                }
            }
            let need = k.0.unsigned_abs() as usize + k.1.unsigned_abs() as usize;
            if need > f.cutoff() {
                f.resize(need);
            }
            f.add_at(k, v);
            if k != (0, 0) && !seen.contains_key(&nk) {
                f.add_at(nk, v.conj());
            }
        }
        f.real = true;
        Ok(LinearSystem::new(alpha, AlgVec::from_array(self.c), f, self.h))
    }
}
