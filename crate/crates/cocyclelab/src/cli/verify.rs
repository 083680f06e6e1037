use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::algebra3::{adjoint, alg_exp, compound2, op_norm, rot_log, AlgVec, CAlg, C64};
use crate::arithmetic::{cf_expand, resonant_lattice, AlphaSpec};
use crate::cocycle::{acceleration, default_eps_grid, degree, random_perturbation, Cocycle};
use crate::error::{Error, Result};
use crate::fourier::{exp_of, product, Coef, TrigPoly1, TrigPoly2};
use crate::kam::{floquet_reduce, kam_iterate, random_field, LinearSystem, StepKind};
use crate::normalform::{coboundary_perturbation, cohom_twisted, nf_iterate, window};
use crate::renorm::{normalform_renorm_closed, representative};

use super::report::RunReport;

pub const SUITES: [&str; 7] = ["algebra3", "arithmetic", "fourier", "cocycle", "renorm", "kam", "normalform"];

/// One measured quantity against its bound; `margin = bound − value`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

struct Suite {
    name: &'static str,
    checks: Vec<Check>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite { name, checks: Vec::new() }
    }

    /// `value ≤ bound`.
    fn le(&mut self, name: &str, value: f64, bound: f64) {
        let pass = value <= bound;
        self.checks.push(Check { suite: self.name.into(), name: name.into(), value, bound, margin: bound - value, pass });
    }

    fn holds(&mut self, name: &str, ok: bool) {
        self.le(name, if ok { 0.0 } else { 1.0 }, 0.0);
    }

    fn result<T>(&mut self, name: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(_) => {
                self.holds(name, false);
                None
            }
        }
    }
}

fn golden() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

fn algebra3() -> Suite {
    let mut s = Suite::new("algebra3");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut log_err: f64 = 0.0;
    let mut ad_err: f64 = 0.0;
    let mut br_err: f64 = 0.0;
    for _ in 0..200 {
        let mut v = || AlgVec::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (a, b) = (v(), v());
        let a = (rng.random_range(0.0..3.0) / a.norm().max(1e-3)) * a;
        if let Ok(l) = rot_log(&alg_exp(a)) {
            log_err = log_err.max((l - a).norm());
        }
        let r = alg_exp(b);
        ad_err = ad_err.max((adjoint(&r, a).norm() - a.norm()).abs());
        let m = a.matrix() * b.matrix() - b.matrix() * a.matrix();
        br_err = br_err.max((m - a.bracket(&b).matrix()).norm());
    }
    s.le("log(exp(v)) = v", log_err, 1e-12);
    s.le("Ad preserves the norm", ad_err, 1e-13);
    s.le("bracket is the commutator", br_err, 1e-14);
    let (a, b) = (alg_exp(AlgVec::new(0.3, -1.0, 0.2)), alg_exp(AlgVec::new(1.1, 0.4, -0.7)));
    let (ca, cb) = (a.to_cmat(), b.to_cmat());
    s.le("second compound is multiplicative", op_norm(&(compound2(&(ca * cb)) - compound2(&ca) * compound2(&cb))), 1e-13);
    s
}

fn arithmetic() -> Suite {
    let mut s = Suite::new("arithmetic");
    let fixtures = [("golden", AlphaSpec::golden()), ("sqrt2-1", AlphaSpec::sqrt2_minus_1()), ("e-2", AlphaSpec::e_minus_2(20))];
    for (name, spec) in fixtures {
        let Some(cf) = s.result(&format!("{name}: expansion"), cf_expand(&spec, 12)) else {
            continue;
        };
        let mut det_ok = true;
        for n in 1..=10 {
            let d = &cf.q[n] * &cf.p[n - 1] - &cf.p[n] * &cf.q[n - 1];
            det_ok &= d.magnitude() == &num_bigint::BigUint::from(1u8);
        }
        s.holds(&format!("{name}: q_n p_(n-1) - p_n q_(n-1) = ±1"), det_ok);
        let mut lat_ok = true;
        for n in 1..=10 {
            lat_ok &= resonant_lattice(cf.alpha, cf.q_i64(n), cf.p_i64(n), cf.q_i64(n + 1)).is_ok();
        }
        s.holds(&format!("{name}: resonant sites on the convergent line"), lat_ok);
    }
    if let Ok(cf) = cf_expand(&AlphaSpec::golden(), 20) {
        s.holds("golden: all partial quotients 1", cf.a[1..=20].iter().all(|&a| a == 1));
    }
    s
}

fn fourier() -> Suite {
    let mut s = Suite::new("fourier");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 0.2;
    let phi = random_perturbation(&mut rng, 8, 0.3, 0.5, h);
    let vals = phi.grid_values(64);
    if let Some((fit, _)) = s.result("fit", TrigPoly1::fit(&vals, 8, h)) {
        s.le("fit inverts sampling", (&fit - &phi).sharp_norm_unchecked(h), 1e-12);
    }
    let e = exp_of(&phi);
    let z = C64::new(0.3, 0.07);
    let pointwise = crate::algebra3::cexp(&phi.eval(z));
    s.le("exp_of matches pointwise exp", op_norm(&(e.eval(z) - pointwise)), 1e-11);
    let p = product(&e, &e.map(|m| m.transpose()));
    let defect = (0..16).map(|j| (p.eval_real(j as f64 / 16.0) - crate::algebra3::CMat::identity()).norm()).fold(0.0, f64::max);
    s.le("exp_of is orthogonal", defect, 1e-11);
    let mode = TrigPoly1::single_mode(3, CAlg::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)), h);
    s.le("single-mode norm is e^(2π|k|h)", (mode.sharp_norm_unchecked(h) - (2.0 * PI * 3.0 * h).exp()).abs(), 1e-12);
    let f2 = random_field(&mut rng, 5, 0.5, 1.0, h);
    let z2 = (C64::new(0.1, 0.02), C64::new(0.7, -0.01));
    let sh = f2.shift_arg((C64::new(0.2, 0.0), C64::new(-0.3, 0.0)));
    let direct = f2.eval((z2.0 + 0.2, z2.1 - 0.3));
    s.le("2D shift is evaluation at the shifted point", (sh.eval(z2) - direct).norm(), 1e-13);
    s.le("2D real input stays real", f2.symmetry_defect(), 1e-15);
    s
}

fn cocycle() -> Suite {
    let mut s = Suite::new("cocycle");
    let h = 0.2;
    if let Some(c) = s.result("normal form", Cocycle::normal_form(AlphaSpec::golden(), 2, 0.3, h)) {
        if let Some(d) = s.result("degree", degree(&c, 200, 8)) {
            s.le("normal-form degree is exact", (d.raw[0] - 2.0).abs(), 1e-10);
        }
        if let Some(a) = s.result("acceleration", acceleration(&c, &default_eps_grid(h), 500, 8)) {
            s.holds("normal-form acceleration snaps to (2,0,-2)", a.snapped == vec![2, 0, -2]);
            s.le("normal-form acceleration residual", a.residual, 0.05);
        }
        s.le("orthogonality", c.orthogonality_defect(64), 1e-12);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phi = random_perturbation(&mut rng, 4, 0.3, 0.05, h);
    if let Some(c) = s.result("perturbed", Cocycle::perturbed_normal_form(AlphaSpec::golden(), 0, 0.2, &phi, h)) {
        s.le("perturbed orthogonality", c.orthogonality_defect(64), 1e-10);
        if let Some(a) = s.result("acceleration", acceleration(&c, &default_eps_grid(h), 500, 8)) {
            s.holds("degree-zero family accelerates by zero", a.snapped == vec![0, 0, 0]);
        }
    }
    s
}

fn renorm() -> Suite {
    let mut s = Suite::new("renorm");
    let h = 0.2;
    let Some(c) = s.result("normal form", Cocycle::normal_form(AlphaSpec::golden(), 1, 0.3, h)) else {
        return s;
    };
    if let Some(rep) = s.result("representative", representative(&c, 1, None)) {
        let (ga, _, closed) = normalform_renorm_closed(c.alpha, 1, 0.3, h);
        let dist = (0..256)
            .map(|i| {
                let x = i as f64 / 256.0;
                op_norm(&(rep.a.eval_real(x) - closed.eval_real(x)))
            })
            .fold(0.0, f64::max);
        s.le("representative matches the closed form", dist, 1e-6);
        s.le("frequency is G(α)", (rep.alpha_n - ga).abs(), 1e-14);
        s.le("normalization residual", rep.normalization_residual, 1e-10);
        s.le("commutation residual", rep.commutation_residual, 1e-10);
    }
    s
}

fn kam() -> Suite {
    let mut s = Suite::new("kam");
    let a = golden();
    let Some(cf) = s.result("expansion", cf_expand(&AlphaSpec::golden(), 30)) else {
        return s;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let f = random_field(&mut rng, 6, 0.75, 1e-6, 0.5);
    let sys = LinearSystem::new(a, AlgVec::j1(2.0 * PI * 0.3), f, 0.5);
    if let Some(run) = s.result("kam_iterate", kam_iterate(&sys, &cf, 4, 25)) {
        let active: Vec<_> = run.records.iter().filter(|r| r.kind != StepKind::Trivial).collect();
        s.le("final ‖F‖#", run.system.eps(), 1e-12);
        s.le("active steps", active.len() as f64, 6.0);
        for r in &active {
            if let Some(e) = r.estimate {
                s.le(&format!("step {}: contraction estimate (−margin)", r.n), -e.margin, 0.0);
            }
            if r.kind == StepKind::Case2 {
                s.holds(&format!("step {}: resonant support on ℤ(q,−p)", r.n), r.support_on_line == Some(true));
            }
        }
    }
    let mut worst: f64 = 0.0;
    let mut bound_ok = true;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (q, p) = (3i64, 2i64);
        let mut g = TrigPoly2::zeros(2 * (q + p) as usize, 0.1);
        g.set((0, 0), CAlg::new(C64::new(rng.random_range(-1.0..1.0), 0.0), C64::new(0.3, 0.0), C64::new(0.0, 0.0)));
        for l in 1..=2i64 {
            let v = CAlg::from_comps(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * (0.05 / l as f64));
            g.set((l * q, -l * p), v);
            g.set((-l * q, l * p), v.conj());
        }
        g.real = true;
        if let Some(out) = s.result("floquet_reduce", floquet_reduce(&g, q, p, a)) {
            worst = worst.max(out.residual);
            bound_ok &= out.norm_bound.0 <= out.norm_bound.1;
        }
    }
    s.le("Floquet conjugation residual", worst, 1e-8);
    s.holds("Floquet norm bound", bound_ok);
    s
}

fn normalform() -> Suite {
    let mut s = Suite::new("normalform");
    let h = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let phi = random_perturbation(&mut rng, 8, 0.3, 1.0, h);
    let comp = phi.map(|v| v.0[1]);
    let mut worst: f64 = 0.0;
    let mut window_ok = true;
    for (l, alpha) in [(1i64, golden()), (-2, golden()), (3, 2f64.sqrt() - 1.0)] {
        if let Some(sol) = s.result("cohom_twisted", cohom_twisted(&comp, l, 0.17, alpha, h / 2.0)) {
            worst = worst.max(sol.residual / comp.sharp_norm_unchecked(h));
            window_ok &= sol.p.modes().all(|(k, c)| window(l).contains(&k) || c.max_abs() == 0.0);
        }
    }
    s.le("twisted cohomology residual / ‖φ‖", worst, 1e-10);
    s.holds("projection support in the |l|-window", window_ok);
    let a = golden();
    if let Some(phi0) = s.result("fixture", coboundary_perturbation(&mut rng, a, 1, 0.3, 12, 0.4, 1e-4, h)) {
        if let Some(run) = s.result("nf_iterate", nf_iterate(a, 1, 0.3, &phi0, h, 10, 1e-13)) {
            s.holds("nf_iterate converged", run.converged);
            s.le("end-to-end conjugacy residual", run.residual, 1e-8);
        }
    }
    s
}

fn run_suite(name: &str) -> Option<Suite> {
    Some(match name {
        "algebra3" => algebra3(),
        "arithmetic" => arithmetic(),
        "fourier" => fourier(),
        "cocycle" => cocycle(),
        "renorm" => renorm(),
        "kam" => kam(),
        "normalform" => normalform(),
        _ => return None,
    })
}

/// Fixed-width pass/fail table.
pub fn render_table(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{tag}  {:<11} {:<48} value={:<12.4e} bound={:<10.3e} margin={:.3e}", c.suite, c.name, c.value, c.bound, c.margin);
    }
    out
}

/// Runs one suite, or every suite for `"all"`; exit 0 iff every check passes.
pub fn cmd_verify(suite: &str) -> (RunReport, Vec<Check>) {
    let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite] };
    let report = RunReport::new("verify", None);
    let mut checks = Vec::new();
    for n in names {
        match run_suite(n) {
            Some(s) => checks.extend(s.checks),
            None => {
                let e = Error::Input(format!("unknown suite {n:?}; expected one of {} or all", SUITES.join(", ")));
                return (report.fail(&e), checks);
            }
        }
    }
    let mut report = report;
    let failed = checks.iter().filter(|c| !c.pass).count();
    report.exit_code = if failed == 0 { 0 } else { 3 };
    if failed > 0 {
        report.error = Some(format!("{failed} check(s) failed"));
    }
    report.result = json!({"suite": suite, "passed": checks.len() - failed, "failed": failed, "checks": checks});
    (report, checks)
}
