//! Lyapunov spectrum, acceleration and degree of a normal form and of a perturbed copy.
//!
//! ```text
//! cargo run --release --example invariants
//! ```

use std::error::Error;

use cocyclelab::arithmetic::AlphaSpec;
use cocyclelab::cocycle::{acceleration, default_eps_grid, degree, lyapunov_all, random_perturbation, Cocycle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<(), Box<dyn Error>> {
    let h = 0.2;
    let nf = Cocycle::normal_form(AlphaSpec::golden(), 2, 0.3, h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phi = random_perturbation(&mut rng, 5, 0.3, 0.05, h);
    let perturbed = Cocycle::perturbed_normal_form(AlphaSpec::golden(), 2, 0.3, &phi, h)?;

    for (name, c) in [("normal form", &nf), ("perturbed", &perturbed)] {
        println!("{name}");
        for eps in [0.0, h / 4.0, h / 2.0] {
            let (l, spread) = lyapunov_all(c, eps, 2000, 8);
            println!("  ε={eps:.3}: L¹ {:.5}  L² {:.5}  L³ {:+.1e}  (stderr {:.1e})", l[0], l[1], l[2], spread[0]);
        }
        let acc = acceleration(c, &default_eps_grid(h), 2000, 8)?;
        let deg = degree(c, 2000, 8)?;
        println!("  acceleration raw {:.4?} -> {:?} (residual {:.3})", acc.raw, acc.snapped, acc.residual);
        println!("  degree       raw {:.4?} -> {:?} (residual {:.3})", deg.raw, deg.snapped, deg.residual);
        assert_eq!(acc.snapped, deg.snapped);
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
