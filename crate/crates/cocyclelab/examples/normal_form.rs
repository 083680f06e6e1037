//! Quadratic convergence to `exp(2π(dx + c)J1)` from a nearby cocycle.
//!
//! ```text
//! cargo run --release --example normal_form
//! ```

use std::error::Error;

use cocyclelab::arithmetic::AlphaSpec;
use cocyclelab::normalform::{coboundary_perturbation, nf_iterate, pr_projection};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<(), Box<dyn Error>> {
    let h = 0.2;
    let alpha = AlphaSpec::golden().to_f64()?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in [1i64, 2] {
        let phi = coboundary_perturbation(&mut rng, alpha, d, 0.3, 12, 0.4, 1e-4, h)?;
        let resonant = pr_projection(&phi, d).sharp_norm_unchecked(h);
        println!("d = {d}: ‖φ₀‖# = {:.3e}, resonant part {resonant:.1e}", phi.sharp_norm_unchecked(h));
        let run = nf_iterate(alpha, d, 0.3, &phi, h, 10, 1e-13)?;
        println!("  step   h_j      c_j          ε_j");
        for r in &run.records {
            println!("  {:3}    {:.4}   {:.10}   {:.3e}", r.step, r.h, r.c, r.eps);
        }
        if let Some(fit) = run.fit {
            println!("  ln(−ln ε_j) slope {:.3} (ln 2 = {:.3}), δ = {:.2}", fit.loglog_slope, 2f64.ln(), fit.delta);
        }
        println!("  converged {}, conjugacy residual {:.2e}, {} factors", run.converged, run.residual, run.psis.len());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
