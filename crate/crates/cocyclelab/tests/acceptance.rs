mod common;

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::Instant;

use cocyclelab::algebra3::{alg_exp, op_norm, real_part, AlgVec, CAlg, C64};
use cocyclelab::arithmetic::{cf_expand, resonant_lattice, AlphaSpec};
use cocyclelab::cli::{cmd_accel, cmd_classify, cmd_degree, ClassifyParams, CocycleSpec, EstimatorParams};
use cocyclelab::cocycle::{random_perturbation, Cocycle};
use cocyclelab::fourier::{Coef, TrigPoly1, TrigPoly2};
use cocyclelab::kam::{floquet_reduce, kam_iterate, random_field, LinearSystem, StepKind};
use cocyclelab::normalform::{coboundary_perturbation, cohom_twisted, nf_iterate, window};
use cocyclelab::renorm::{accel_scaling_check, closed_normalizer, normalform_renorm_closed, renormalize_raw, representative};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sup_on_circle(f: impl Fn(f64) -> f64, points: usize) -> f64 {
    (0..points).map(|i| f(i as f64 / points as f64)).fold(0.0, f64::max)
}

fn normal_form_invariants() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let spec = CocycleSpec::normal_form(AlphaSpec::golden(), 2, 0.3, H);
    let p = EstimatorParams::default();
    let (deg, acc) = pool.install(|| (cmd_degree(&spec, &p), cmd_accel(&spec, &p)));
    let secs = start.elapsed().as_secs_f64();
    let raw = &deg.invariants[0].raw;
    let raw_err = raw.iter().zip([2.0, 0.0, -2.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let a = &acc.invariants[0];
    let eps = &a.meta.eps_grid;
    let grid_ok = eps.len() == 8 && eps.iter().all(|&e| (H / 16.0 - 1e-15..=H / 2.0 + 1e-15).contains(&e));
    let pass = raw_err < 1e-10 && a.snapped == [2, 0, -2] && a.residual < 0.05 && grid_ok && secs < 30.0 && acc.exit_code == 0;
    outcome(pass, format!("degree error {raw_err:.1e}, acceleration {:?} residual {:.1e}, {secs:.2} s on one thread", a.snapped, a.residual))
}

fn family() -> Vec<CocycleSpec> {
    (0..20u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phi = random_perturbation(&mut rng, 4, 0.3, 0.05, H);
            assert!(phi.sharp_norm_unchecked(H) <= 0.05 + 1e-12);
            CocycleSpec::exp_sum(AlphaSpec::golden(), (seed % 3) as i64, &phi, H)
        })
        .collect()
}

fn accel_degree_agreement() -> (Outcome, Outcome) {
    let p = EstimatorParams::default();
    let reports: Vec<_> = family().iter().map(|s| cmd_accel(s, &p)).collect();
    let mut agree = 0;
    let mut silent = 0;
    let mut near = 0;
    for r in &reports {
        let (a, d) = (&r.invariants[0], &r.invariants[1]);
        if a.snapped == d.snapped && a.residual < 0.25 && d.residual < 0.25 {
            agree += 1;
        } else if r.exit_code != 2 {
            silent += 1;
        }
        let w1 = a.raw[0];
        if (w1 - w1.round()).abs() < 0.1 {
            near += 1;
        }
    }
    (
        outcome(agree >= 19 && silent == 0, format!("{agree}/20 agree, {silent} silent disagreements")),
        outcome(near >= 19, format!("{near}/20 raw ω₁ within 0.1 of an integer")),
    )
}

fn renormalization_closed_form() -> Outcome {
    let c = Cocycle::normal_form(AlphaSpec::golden(), 1, 0.3, H).unwrap();
    let rep = representative(&c, 1, None).unwrap();
    let (_, _, closed) = normalform_renorm_closed(c.alpha, 1, 0.3, H);
    let dist = sup_on_circle(|x| op_norm(&(rep.a.eval_real(x) - closed.eval_real(x))), 1000);
    let pair = renormalize_raw(&c, 1).unwrap();
    let nz = closed_normalizer(&c, &pair).unwrap();
    let identity = (0..1000)
        .map(|i| {
            let x = -1.0 + 3.0 * i as f64 / 1000.0;
            let lhs = real_part(&c.eval(C64::new(c.alpha * x, 0.0)));
            let rhs = nz.eval(x + 1.0).transpose() * nz.eval(x);
            (lhs - rhs).norm()
        })
        .fold(0.0, f64::max);
    outcome(dist < 1e-6 && identity < 1e-12, format!("sup distance {dist:.1e}, normalizer identity {identity:.1e}"))
}

fn acceleration_scaling() -> Outcome {
    let c = Cocycle::normal_form(AlphaSpec::golden(), 1, 0.3, H).unwrap();
    let rep = representative(&c, 1, None).unwrap();
    let (lhs, rhs) = accel_scaling_check(&c, &rep, 0.05, 2000, 8).unwrap();
    let rel = (lhs - rhs).abs() / rhs.abs();
    outcome(rel < 0.02, format!("{lhs:.6} vs {rhs:.6}, relative gap {rel:.1e}"))
}

fn kam_contraction() -> Outcome {
    let cf = cf_expand(&AlphaSpec::golden(), 30).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let f = random_field(&mut rng, 6, 0.75, 1e-6, 0.5);
    let sys = LinearSystem::new(cf.alpha, AlgVec::j1(2.0 * PI * 0.3), f, 0.5);
    let eps0 = sys.eps();
    let run = match kam_iterate(&sys, &cf, 4, 25) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("kam_iterate failed: {e}")),
    };
    let active: Vec<_> = run.records.iter().filter(|r| r.kind != StepKind::Trivial).collect();
    let estimates = active.iter().all(|r| r.estimate.is_some_and(|e| e.holds));
    let support = active.iter().filter(|r| r.kind == StepKind::Case2).all(|r| r.support_on_line == Some(true));
    let eps = run.system.eps();
    let pass = (eps0 - 1e-6).abs() < 1e-18 && eps < 1e-12 && active.len() <= 6 && estimates && support;
    outcome(pass, format!("‖F‖# {eps0:.0e} → {eps:.1e} in {} active steps, estimates {estimates}, support {support}", active.len()))
}

fn line_field(seed: u64, q: i64, p: i64) -> TrigPoly2<CAlg> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = TrigPoly2::zeros(2 * (q + p) as usize, 0.1);
    g.set((0, 0), CAlg::new(C64::new(rng.random_range(-1.0..1.0), 0.0), C64::new(rng.random_range(-0.5..0.5), 0.0), C64::new(0.0, 0.0)));
    for l in 1..=2i64 {
        let v = CAlg::from_comps(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * (0.05 / l as f64));
        g.set((l * q, -l * p), v);
        g.set((-l * q, l * p), v.conj());
    }
    g.real = true;
    g
}

fn floquet() -> Outcome {
    let a = golden();
    let lines = [(1i64, 1i64), (2, 1), (3, 2)];
    let mut worst: f64 = 0.0;
    let mut bound_ok = 0;
    for seed in 0..50u64 {
        let (q, p) = lines[seed as usize % lines.len()];
        match floquet_reduce(&line_field(seed, q, p), q, p, a) {
            Ok(out) => {
                worst = worst.max(out.residual);
                if out.norm_bound.0 <= out.norm_bound.1 {
                    bound_ok += 1;
                }
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    // F = δ cos(2π(qθ₁ − pθ₂)) J1 is reduced by exp(−δ sin(2π(qθ₁ − pθ₂)) / (2πτ) J1)
    let (q, p) = (5i64, 3i64);
    let tau = q as f64 * a - p as f64;
    let delta = 0.05;
    let mut f = TrigPoly2::zeros((q + p) as usize, 0.2);
    let half = AlgVec::j1(delta / 2.0).complexify();
    f.set((q, -p), half);
    f.set((-q, p), half);
    f.real = true;
    let abelian = match floquet_reduce(&f, q, p, a) {
        Ok(out) => (0..200)
            .map(|i| {
                let th = (i as f64 * 0.137, i as f64 * 0.291);
                let phase = q as f64 * th.0 - p as f64 * th.1;
                let want = alg_exp(AlgVec::j1(-delta / (2.0 * PI * tau) * (2.0 * PI * phase).sin()));
                let got = real_part(&out.b.eval((C64::new(th.0, 0.0), C64::new(th.1, 0.0))));
                (got - want.matrix()).norm()
            })
            .fold(out.c.norm(), f64::max),
        Err(_) => f64::INFINITY,
    };
    let pass = worst < 1e-8 && bound_ok == 50 && abelian < 1e-10;
    outcome(pass, format!("worst residual {worst:.1e}, bound held {bound_ok}/50, abelian error {abelian:.1e}"))
}

fn twenty_alphas() -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = vec![
        ("golden".into(), golden()),
        ("√2−1".into(), 2f64.sqrt() - 1.0),
        ("e−2".into(), AlphaSpec::e_minus_2(40).to_f64().unwrap()),
        ("Liouville".into(), AlphaSpec::liouville(3).to_f64().unwrap()),
        ("√3−1".into(), 3f64.sqrt() - 1.0),
        ("π−3".into(), PI - 3.0),
        ("[0;1000,1,...]".into(), AlphaSpec::Cf { quotients: vec![0, 1000, 1], period: Some(1) }.to_f64().unwrap()),
        ("[0;1,50000,1,...]".into(), AlphaSpec::Cf { quotients: vec![0, 1, 50000, 1], period: Some(1) }.to_f64().unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    while out.len() < 20 {
        let a: f64 = rng.random_range(0.01..0.99);
        out.push((format!("{a:.6}"), a));
    }
    out
}

fn twisted_cohomology() -> Outcome {
    let h = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut phi = TrigPoly1::zeros(10, h);
    for k in -10i64..=10 {
        let s = (-2.0 * PI * 0.3 * k.abs() as f64).exp();
        phi.set(k, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * s);
    }
    let norm = phi.sharp_norm_unchecked(h);
    let mut worst: f64 = 0.0;
    let mut window_exact = true;
    for (_, alpha) in twenty_alphas() {
        for l in [1i64, -2, 3, -4] {
            match cohom_twisted(&phi, l, 0.17, alpha, h / 2.0) {
                Ok(sol) => {
                    worst = worst.max(sol.residual / norm);
                    let support: BTreeSet<i64> = sol.p.modes().filter(|(_, c)| c.max_abs() > 0.0).map(|(k, _)| k).collect();
                    window_exact &= support == window(l).collect::<BTreeSet<i64>>();
                }
                Err(_) => worst = f64::INFINITY,
            }
        }
    }
    outcome(worst < 1e-10 && window_exact, format!("worst residual/‖φ‖ {worst:.1e}, support equals window {window_exact}"))
}

fn normal_form_pipeline() -> Outcome {
    let start = Instant::now();
    let a = golden();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi0 = coboundary_perturbation(&mut rng, a, 1, 0.0, 12, 0.4, 1e-4, H).unwrap();
    let size = phi0.sharp_norm_unchecked(H);
    let run = match nf_iterate(a, 1, 0.0, &phi0, H, 10, 1e-13) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("nf_iterate failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let eps: Vec<f64> = run.records.iter().map(|r| r.eps).collect();
    let squaring = eps.windows(2).all(|w| w[1] <= 1e3 * w[0] * w[0] || w[1] < 1e-13);
    let fit_ok = run.fit.is_some_and(|f| f.loglog_slope > 0.5 && f.c4.is_finite());
    let pass = (size - 1e-4).abs() < 1e-12 && run.converged && squaring && fit_ok && run.residual < 1e-8 && secs < 300.0;
    let slope = run.fit.map(|f| f.loglog_slope).unwrap_or(f64::NAN);
    let eps: Vec<String> = eps.iter().map(|e| format!("{e:.1e}")).collect();
    outcome(pass, format!("ε_j [{}], log-log slope {slope:.3}, residual {:.1e}, {secs:.2} s", eps.join(", "), run.residual))
}

fn brute_force_sites(alpha: f64, q: i64, q_plus: i64) -> BTreeSet<(i64, i64)> {
    let bound = q_plus as f64 / 6.0;
    let r = bound.ceil() as i64 + 1;
    let mut out = BTreeSet::new();
    for k1 in -r..=r {
        for k2 in -r..=r {
            if ((k1.abs() + k2.abs()) as f64) < bound && (k1 as f64 * alpha + k2 as f64).abs() < 1.0 / (7.0 * q as f64) {
                out.insert((k1, k2));
            }
        }
    }
    out
}

fn lattice_lemma() -> Outcome {
    let mut checked = 0;
    let mut ok = true;
    for spec in [AlphaSpec::golden(), AlphaSpec::sqrt2_minus_1(), AlphaSpec::e_minus_2(40)] {
        let cf = cf_expand(&spec, 14).unwrap();
        for n in 1..=10 {
            let (q, p, q_plus) = (cf.q_i64(n), cf.p_i64(n), cf.q_i64(n + 1));
            let brute = brute_force_sites(cf.alpha, q, q_plus);
            let on_line = brute.iter().all(|&(k1, k2)| k1 * p + k2 * q == 0);
            let got: Option<BTreeSet<_>> = resonant_lattice(cf.alpha, q, p, q_plus).ok().map(|v| v.into_iter().collect());
            ok &= on_line && got.as_ref() == Some(&brute);
            checked += 1;
        }
    }
    outcome(ok, format!("{checked} convergents enumerated"))
}

fn conjugation_invariance() -> Outcome {
    let alpha = golden();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi1 = coboundary_perturbation(&mut rng, alpha, 1, 0.0, 12, 0.4, 1e-4, H).unwrap();
    let phi0 = random_perturbation(&mut rng, 5, 0.3, 0.03, H);
    let bases = [
        CocycleSpec::exp_sum(AlphaSpec::golden(), 0, &phi0, H),
        CocycleSpec::exp_sum(AlphaSpec::golden(), 1, &phi1, H),
        CocycleSpec::normal_form(AlphaSpec::golden(), 2, 0.3, H),
    ];
    let p = EstimatorParams::default();
    let cp = ClassifyParams::default();
    let mut unchanged = 0;
    let mut total = 0;
    for base in &bases {
        let acc0 = cmd_accel(base, &p);
        let cl0 = cmd_classify(base, &cp);
        let key = |acc: &cocyclelab::cli::RunReport, cl: &cocyclelab::cli::RunReport| {
            (acc.result["acceleration"].clone(), acc.result["degree"].clone(), cl.result["branch"].clone(), cl.exit_code)
        };
        let want = key(&acc0, &cl0);
        for s in 0..10u64 {
            let mut r = ChaCha8Rng::seed_from_u64(1000 + s);
            let psi = random_perturbation(&mut r, 3, 0.3, 0.1, H);
            let spec = base.conjugated(&psi).unwrap();
            let got = key(&cmd_accel(&spec, &p), &cmd_classify(&spec, &cp));
            total += 1;
            if got == want && want.3 == 0 {
                unchanged += 1;
            }
        }
    }
    outcome(unchanged == total, format!("{unchanged}/{total} conjugated fixtures keep snaps and branch"))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!("{} {name}: {} [{:.1} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, start.elapsed().as_secs_f64());
        results.push((name, o));
    };
    run("1 normal-form invariants", &normal_form_invariants);
    let (agreement, quantization) = accel_degree_agreement();
    run("2 acceleration/degree agreement", &|| outcome(agreement.pass, agreement.detail.clone()));
    run("3 quantization", &|| outcome(quantization.pass, quantization.detail.clone()));
    run("4 renormalization closed form", &renormalization_closed_form);
    run("5 acceleration scaling", &acceleration_scaling);
    run("6 KAM contraction", &kam_contraction);
    run("7 Floquet reduction", &floquet);
    run("8 twisted cohomology", &twisted_cohomology);
    run("9 normal-form pipeline", &normal_form_pipeline);
    run("10 resonant lattice", &lattice_lemma);
    run("11 conjugation invariance", &conjugation_invariance);
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
