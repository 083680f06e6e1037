//! KAM reduction of `ẋ = (C + F(θ))x` on the two-torus, step by step.
//!
//! ```text
//! cargo run --release --example kam_reduction
//! ```

use std::error::Error;
use std::f64::consts::PI;

use cocyclelab::algebra3::AlgVec;
use cocyclelab::arithmetic::{cf_expand, AlphaSpec};
use cocyclelab::kam::{kam_iterate, random_field, LinearSystem, StepKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<(), Box<dyn Error>> {
    let h = 0.5;
    let cf = cf_expand(&AlphaSpec::golden(), 30)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let f = random_field(&mut rng, 6, 0.75, 1e-6, h);
    let sys = LinearSystem::new(cf.alpha, AlgVec::j1(2.0 * PI * 0.3), f, h);
    println!("ρ₀ = {:.6}, ‖F₀‖# = {:.3e}", sys.rho, sys.eps());

    let run = kam_iterate(&sys, &cf, 4, 25)?;
    println!("  n     q   kind     h        ε          ε₊         ρ          k*");
    for r in &run.records {
        if r.kind == StepKind::Trivial && r.eps_plus == r.eps {
            continue;
        }
        let kind = format!("{:?}", r.kind);
        let kstar = r.k_star.map(|k| format!("{k:?}")).unwrap_or_default();
        println!(
            "  {:2}  {:5}   {kind:7}  {:.4}   {:.3e}  {:.3e}  {:+.6}  {kstar}",
            r.n, r.q, r.h, r.eps, r.eps_plus, r.rho
        );
        if let Some(e) = r.estimate {
            println!("        contraction estimate margin {:+.2}", e.margin);
        }
        if r.kind == StepKind::Case2 {
            println!("        resonant support on the line: {:?}", r.support_on_line);
        }
    }
    println!("final ‖F‖# = {:.3e}, ρ = {:.6}, width {:.4}", run.system.eps(), run.system.rho, run.system.h);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
