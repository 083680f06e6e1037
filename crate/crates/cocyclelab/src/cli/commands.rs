use std::f64::consts::PI;

use serde::Serialize;
use serde_json::json;

use crate::algebra3::{alg_exp, basis, cexp, cmat_from_real, op_norm, real_part, rot_log, AlgVec, CAlg, RMat, Rot, C64};
use crate::arithmetic::cf_expand;
use crate::cocycle::{acceleration, default_eps_grid, degree, lyapunov_all, Cocycle, InvariantReport};
use crate::error::{Error, Result};
use crate::fourier::{product, TrigPoly1};
use crate::kam::{diagonalizing_rotation, kam_iterate, StepKind};
use crate::normalform::{nf_iterate, perturbation_of, NfRun, NF_THRESHOLD};
use crate::renorm::{closed_form_distance, constant_part, normalform_renorm_closed, representative};

use super::report::{kam_margins, to_value, RunReport};
use super::spec::{CocycleSpec, Factor, Form, SystemSpec};

/// Sample sizes for the invariant estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorParams {
    /// Iterates for the Lyapunov and acceleration estimators.
    pub n: usize,
    /// Iterates for the degree estimator.
    pub degree_n: usize,
    pub grid: usize,
    /// Defaults to 8 points in `[h/16, h/2]`.
    pub eps_grid: Option<Vec<f64>>,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        EstimatorParams { n: 2000, degree_n: 2000, grid: 8, eps_grid: None }
    }
}

impl EstimatorParams {
    fn eps_grid(&self, h: f64) -> Vec<f64> {
        self.eps_grid.clone().unwrap_or_else(|| default_eps_grid(h))
    }
}

/// Nonconstant part below which a degree-zero representative counts as constant.
pub const FLAT_THRESHOLD: f64 = 1e-2;

fn built(spec: &CocycleSpec) -> Result<Cocycle> {
    spec.build()
}

/// Lyapunov exponents `L¹..L³` of the complexified cocycle at each ε (default ε = 0).
pub fn cmd_lyapunov(spec: &CocycleSpec, p: &EstimatorParams) -> RunReport {
    RunReport::new("lyapunov", Some(spec.digest())).finish(|r| {
        let c = built(spec)?;
        let eps = p.eps_grid.clone().unwrap_or_else(|| vec![0.0]);
        if eps.iter().any(|&e| e < 0.0 || e > c.h) {
            return Err(Error::Input(format!("ε must lie in [0, {}]", c.h)));
        }
        let rows: Vec<_> = eps
            .iter()
            .map(|&e| {
                let (m, s) = lyapunov_all(&c, e, p.n, p.grid);
                json!({"eps": e, "exponents": m, "spread": s})
            })
            .collect();
        r.result = json!({"n": p.n, "grid": p.grid, "per_eps": rows});
        Ok(())
    })
}

fn snap_exit(reps: &[&InvariantReport]) -> i32 {
    if reps.iter().all(|r| r.snap_ok) {
        0
    } else {
        2
    }
}

/// Acceleration next to the degree; exit 2 unless both snap and agree.
pub fn cmd_accel(spec: &CocycleSpec, p: &EstimatorParams) -> RunReport {
    RunReport::new("accel", Some(spec.digest())).finish(|r| {
        let c = built(spec)?;
        let acc = acceleration(&c, &p.eps_grid(c.h), p.n, p.grid)?;
        let deg = degree(&c, p.degree_n, p.grid)?;
        let agree = acc.snapped == deg.snapped;
        r.exit_code = if agree { snap_exit(&[&acc, &deg]) } else { 2 };
        if r.exit_code != 0 {
            r.error = Some(if agree { "snap residual above 0.25".into() } else { "acceleration and degree disagree".into() });
        }
        r.result = json!({"acceleration": acc.snapped, "degree": deg.snapped, "agreement": agree});
        r.invariants = vec![acc, deg];
        Ok(())
    })
}

pub fn cmd_degree(spec: &CocycleSpec, p: &EstimatorParams) -> RunReport {
    RunReport::new("degree", Some(spec.digest())).finish(|r| {
        let c = built(spec)?;
        let deg = degree(&c, p.degree_n, p.grid)?;
        r.exit_code = snap_exit(&[&deg]);
        if r.exit_code != 0 {
            r.error = Some(format!("snap residual {} above 0.25", deg.residual));
        }
        r.result = json!({"degree": deg.snapped, "raw": deg.raw});
        r.invariants = vec![deg];
        Ok(())
    })
}

fn sup_on_circle(f: impl Fn(f64) -> f64) -> f64 {
    (0..256).map(|i| f(i as f64 / 256.0)).fold(0.0, f64::max)
}

/// `n`-th renormalization representative, with the closed form for normal-form specs.
pub fn cmd_renorm(spec: &CocycleSpec, n: usize) -> RunReport {
    RunReport::new("renorm", Some(spec.digest())).finish(|r| {
        let c = built(spec)?;
        for m in 0..=n {
            let rep = representative(&c, m, None)?;
            let cp = constant_part(&rep).ok().map(|v| v.to_array());
            r.trajectory.push(json!({
                "n": m,
                "alpha_n": rep.alpha_n,
                "nonconstant_part": rep.nonconstant_part(),
                "constant_part": cp,
                "normalization_residual": rep.normalization_residual,
                "periodicity_defect": rep.periodicity_defect,
                "commutation_residual": rep.commutation_residual,
                "fit_aliasing": rep.fit.aliasing(),
            }));
            if m < n {
                continue;
            }
            let closed = c.nf_tag.map(|(d, c0)| {
                let (mut a, mut d, mut c0) = (c.alpha, d, c0);
                let mut poly = crate::cocycle::normal_form_poly(d, c0, c.h);
                for _ in 0..m {
                    let (a1, (d1, c1), p1) = normalform_renorm_closed(a, d, c0, c.h);
                    (a, d, c0, poly) = (a1, d1, c1, p1);
                }
                let dist = sup_on_circle(|x| op_norm(&(rep.a.eval_real(x) - poly.eval_real(x))));
                let (shift, shifted) = closed_form_distance(&rep, d, c0, 64);
                json!({"alpha_n": a, "d": d, "c0": c0, "sup_distance": dist, "shift_k": shift, "shifted_distance": shifted})
            });
            r.result = json!({
                "n": m,
                "alpha_n": rep.alpha_n,
                "h": rep.h,
                "nonconstant_part": rep.nonconstant_part(),
                "closed_form": closed,
            });
        }
        Ok(())
    })
}

/// KAM iteration on a linear system; margins of the step conditions attached.
pub fn cmd_kam(spec: &SystemSpec, l: usize, steps: usize) -> RunReport {
    let mut base = RunReport::new("kam", Some(spec.digest()));
    base.seed = spec.random.as_ref().map(|r| r.seed);
    base.finish(|r| {
        let sys = spec.build()?;
        let cf = cf_expand(&spec.alpha, steps + 2)?;
        let eps0 = sys.eps();
        let run = kam_iterate(&sys, &cf, l, steps)?;
        let active = run.records.iter().filter(|s| s.kind != StepKind::Trivial).count();
        let eps = run.system.eps();
        r.trajectory = run.records.iter().map(to_value).collect();
        r.margins = kam_margins(&run.records);
        r.result = json!({
            "eps0": eps0,
            "eps_final": eps,
            "active_steps": active,
            "steps": run.records.len(),
            "c_final": run.system.c.to_array(),
            "rho_final": run.system.rho,
            "b_norm": run.b.log_sharp_norm(run.system.h).exp(),
            "h_final": run.system.h,
        });
        if run.records.iter().any(|s| s.estimate.is_some_and(|e| !e.holds)) {
            return Err(Error::Assertion("step estimate violated".into()));
        }
        Ok(())
    })
}

/// Product-form spec of `B = exp(ψ_J) ⋯ exp(ψ_1) · R`.
pub fn conjugacy_spec(alpha: &crate::arithmetic::AlphaSpec, run: &NfRun, frame: Option<&RMat>, h: f64) -> Result<CocycleSpec> {
    let mut factors: Vec<Factor> = run
        .psis
        .iter()
        .rev()
        .map(|psi| Factor { d: 0, coefficients: super::spec::poly_to_modes(psi) })
        .collect();
    if let Some(r) = frame {
        let v = rot_log(&Rot::new(*r))?;
        let c = TrigPoly1::constant(v.complexify(), h);
        factors.push(Factor { d: 0, coefficients: super::spec::poly_to_modes(&c) });
    }
    Ok(CocycleSpec { alpha: alpha.clone(), form: Form::Product, d: 0, coefficients: vec![], factors, h })
}

/// `sup ‖B(z+α)A(z)B(z)ᵀ − exp(2π(dz+c)J1)‖` on `Im z = ±w`, evaluated from `A` itself.
pub fn end_to_end_residual(c: &Cocycle, b: &TrigPoly1<crate::algebra3::CMat>, d: i64, c_final: f64, w: f64) -> f64 {
    let zero = C64::new(0.0, 0.0);
    let mut worst: f64 = 0.0;
    for s in [-w, w] {
        for j in 0..256 {
            let z = C64::new(j as f64 / 256.0, s);
            let lhs = b.eval(z + c.alpha) * c.eval(z) * b.eval(z).transpose();
            let nf = cexp(&CAlg::new((z * d as f64 + c_final) * (2.0 * PI), zero, zero));
            worst = worst.max(op_norm(&(lhs - nf)));
        }
    }
    worst
}

fn nf_payload(r: &mut RunReport, run: &NfRun, frame: Option<&RMat>, c: &Cocycle, h: f64) -> Result<()> {
    r.trajectory.extend(run.records.iter().map(to_value));
    let e2e = end_to_end_residual(c, &run.b, run.d, run.c_final, h / 2.0);
    r.result = json!({
        "d": run.d,
        "c_final": run.c_final,
        "eps_final": run.records.last().map(|x| x.eps),
        "converged": run.converged,
        "residual": run.residual,
        "end_to_end_residual": e2e,
        "fit": run.fit,
        "conjugacy": conjugacy_spec(&c.alpha_spec, run, frame, h / 2.0)?,
    });
    if !run.converged {
        r.exit_code = 2;
        r.error = Some(Error::NoConvergence { residual: run.records.last().map_or(f64::NAN, |x| x.eps) }.to_string());
    }
    Ok(())
}

/// Normal-form conjugation of an exp-sum spec `exp(2πdxJ1)exp(φ)` with `d ≠ 0`.
pub fn cmd_nf(spec: &CocycleSpec, steps: usize, tol: f64) -> RunReport {
    RunReport::new("nf", Some(spec.digest())).finish(|r| {
        let c = built(spec)?;
        let Some((d, phi)) = spec.exp_sum_parts()? else {
            return Err(Error::Input("nf takes an exp-sum spec; product specs go through classify".into()));
        };
        if d == 0 {
            return Err(Error::Input("nf needs d ≠ 0".into()));
        }
        let run = nf_iterate(c.alpha, d, 0.0, &phi, c.h, steps, tol)?;
        nf_payload(r, &run, None, &c, c.h)?;
        Ok(())
    })
}

fn j1_angle(m: &RMat) -> f64 {
    let j = basis(1);
    let jj = j * j;
    let s = j.dot(m) / j.dot(&j);
    let co = -jj.dot(m) / jj.dot(&jj);
    s.atan2(co)
}

/// `c` written as `R⁻¹ exp(2π(dx+c0)J1) exp(φ) R` for a constant frame `R`.
#[derive(Debug, Clone)]
pub struct NormalFormFit {
    pub d: i64,
    pub c0: f64,
    pub phi: TrigPoly1<CAlg>,
    /// `‖φ‖#_h`.
    pub eps: f64,
    pub frame: RMat,
    /// `R A R⁻¹`.
    pub aligned: Cocycle,
}

/// Best normal-form description with `|d| = d_abs`; the frame aligns the mean drift `A⁻¹∂A` with `J1`.
pub fn fit_normal_form(c: &Cocycle, d_abs: i64, cutoff: usize) -> Result<NormalFormFit> {
    let m = 64;
    let frame = if d_abs == 0 {
        RMat::identity()
    } else {
        let mut drift = AlgVec::ZERO;
        for j in 0..m {
            let z = C64::new(j as f64 / m as f64, 0.0);
            let a = real_part(&c.eval(z));
            drift = drift + AlgVec::from_matrix(&(a.transpose() * real_part(&c.eval_derivative(z))));
        }
        diagonalizing_rotation((1.0 / m as f64) * drift)
    };
    let aligned = c.conjugate(&TrigPoly1::constant(cmat_from_real(&frame), c.h))?;
    let mut best: Option<NormalFormFit> = None;
    let signs: &[i64] = if d_abs == 0 { &[0] } else { &[1, -1] };
    for &s in signs {
        let d = s * d_abs;
        let mut mean = RMat::zeros();
        for j in 0..m {
            let x = j as f64 / m as f64;
            let ninv = *alg_exp(AlgVec::j1(-2.0 * PI * d as f64 * x)).matrix();
            mean += ninv * real_part(&aligned.a.eval_real(x));
        }
        let c0 = j1_angle(&(mean / m as f64)) / (2.0 * PI);
        let Ok(phi) = perturbation_of(&aligned, d, c0, cutoff) else {
            continue;
        };
        let eps = phi.sharp_norm_unchecked(c.h);
        if best.as_ref().is_none_or(|b| eps < b.eps) {
            best = Some(NormalFormFit { d, c0, phi, eps, frame, aligned: aligned.clone() });
        }
    }
    best.ok_or(Error::LogBranch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// Degree zero: renormalization flattens to constants.
    AlmostReducible,
    /// Degree `d ≠ 0`: conjugate to `exp(2π(dx+c)J1)`.
    NormalForm,
    /// The degree did not snap.
    Unclassified,
}

/// Parameters of the classify pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyParams {
    pub estimator: EstimatorParams,
    /// Deepest renormalization tried.
    pub depth: usize,
    pub steps: usize,
    pub tol: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams { estimator: EstimatorParams::default(), depth: 10, steps: 12, tol: 1e-13 }
    }
}

/// Degree, then either the flattening curve of the representatives or a normal-form conjugacy.
pub fn cmd_classify(spec: &CocycleSpec, p: &ClassifyParams) -> RunReport {
    RunReport::new("classify", Some(spec.digest())).finish(|r| {
        let c = built(spec)?;
        let deg = degree(&c, p.estimator.degree_n, p.estimator.grid)?;
        let snap_ok = deg.snap_ok;
        let d_abs = deg.snapped[0];
        r.invariants.push(deg.clone());
        if !snap_ok {
            r.result = json!({"branch": Branch::Unclassified, "degree_raw": deg.raw, "residual": deg.residual});
            return Err(Error::Unclassified { residual: deg.residual });
        }
        if d_abs == 0 {
            let mut reached = None;
            for n in 0..=p.depth {
                let rep = match representative(&c, n, None) {
                    Ok(rep) => rep,
                    Err(e) => {
                        r.trajectory.push(json!({"n": n, "error": e.to_string()}));
                        break;
                    }
                };
                let part = rep.nonconstant_part();
                r.trajectory.push(json!({"n": n, "alpha_n": rep.alpha_n, "nonconstant_part": part}));
                if part < FLAT_THRESHOLD {
                    reached = Some(n);
                    break;
                }
            }
            r.result = json!({
                "branch": Branch::AlmostReducible,
                "degree": deg.snapped,
                "flat_threshold": FLAT_THRESHOLD,
                "flat_at": reached,
                "kam": "skipped: no linear-system form for cocycle specs",
            });
            return Ok(());
        }
        let mut best_eps = f64::INFINITY;
        for n in 0..=p.depth {
            let base = if n == 0 {
                c.clone()
            } else {
                match representative(&c, n, None) {
                    Ok(rep) => rep.to_cocycle(),
                    Err(e) => {
                        r.trajectory.push(json!({"n": n, "error": e.to_string()}));
                        continue;
                    }
                }
            };
            // numerically normalized representatives are analytic on a narrower strip than the input
            for w in [c.h, c.h / 2.0, c.h / 4.0] {
                let mut cand = base.clone();
                cand.h = cand.h.min(w);
                cand.a.h = cand.h;
                let fit = match fit_normal_form(&cand, d_abs, 32) {
                    Ok(f) => f,
                    Err(e) => {
                        r.trajectory.push(json!({"n": n, "h": cand.h, "error": e.to_string()}));
                        continue;
                    }
                };
                r.trajectory.push(json!({"n": n, "h": cand.h, "alpha_n": cand.alpha, "d": fit.d, "c0": fit.c0, "eps": fit.eps}));
                best_eps = best_eps.min(fit.eps);
                if fit.eps > NF_THRESHOLD {
                    continue;
                }
                let mut run = match nf_iterate(cand.alpha, fit.d, fit.c0, &fit.phi, cand.h, p.steps, p.tol) {
                    Ok(run) if run.converged => run,
                    Ok(_) => {
                        r.trajectory.push(json!({"n": n, "h": cand.h, "error": "nf_iterate stalled"}));
                        continue;
                    }
                    Err(e) => {
                        r.trajectory.push(json!({"n": n, "h": cand.h, "error": e.to_string()}));
                        continue;
                    }
                };
                // B ↦ B·R so that the conjugacy acts on the candidate itself
                run.b = product(&run.b, &TrigPoly1::constant(cmat_from_real(&fit.frame), cand.h));
                nf_payload(r, &run, Some(&fit.frame), &cand, cand.h)?;
                let obj = r.result.as_object_mut().expect("payload is an object");
                obj.insert("branch".into(), to_value(&Branch::NormalForm));
                obj.insert("degree".into(), to_value(&deg.snapped));
                obj.insert("renormalization_depth".into(), json!(n));
                obj.insert("h".into(), json!(cand.h));
                obj.insert("alpha_n".into(), json!(cand.alpha));
                return Ok(());
            }
        }
        r.result = json!({"branch": Branch::NormalForm, "degree": deg.snapped, "conjugacy": null, "closest": best_eps});
        Err(Error::NoConvergence { residual: best_eps })
    })
}
