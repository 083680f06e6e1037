//! Twisted cohomological equations across Diophantine and Liouville frequencies.
//!
//! ```text
//! cargo run --release --example twisted_cohomology
//! ```

use std::error::Error;

use cocyclelab::algebra3::C64;
use cocyclelab::arithmetic::AlphaSpec;
use cocyclelab::fourier::{Coef, TrigPoly1};
use cocyclelab::normalform::{cohom_twisted, window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scalar(rng: &mut ChaCha8Rng, cutoff: usize, h: f64) -> TrigPoly1<C64> {
    let mut p = TrigPoly1::zeros(cutoff, h);
    for k in -(cutoff as i64)..=cutoff as i64 {
        let s = (-2.0 * std::f64::consts::PI * 0.3 * k.abs() as f64).exp();
        p.set(k, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * s);
    }
    p
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let h = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let phi = random_scalar(&mut rng, 10, h);
    let norm = phi.sharp_norm_unchecked(h);

    let alphas = [
        ("golden", AlphaSpec::golden().to_f64()?),
        ("√2−1", AlphaSpec::sqrt2_minus_1().to_f64()?),
        ("Liouville", AlphaSpec::liouville(3).to_f64()?),
    ];
    println!("  α           l    residual/‖φ‖   ‖Pφ‖/‖φ‖   support of Pφ");
    for (name, alpha) in alphas {
        for l in [1i64, -2, 3] {
            let sol = cohom_twisted(&phi, l, 0.17, alpha, h / 2.0)?;
            let support: Vec<i64> = sol.p.modes().filter(|(_, c)| c.max_abs() > 0.0).map(|(k, _)| k).collect();
            assert!(support.iter().all(|k| window(l).contains(k)));
            println!("  {name:10} {l:+3}   {:.2e}       {:.3}      {support:?}", sol.residual / norm, sol.p_constant);
        }
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
