//! Renormalization representatives against the closed form, and flattening of a degree-zero cocycle.
//!
//! ```text
//! cargo run --release --example renormalization
//! ```

use std::error::Error;

use cocyclelab::algebra3::op_norm;
use cocyclelab::arithmetic::AlphaSpec;
use cocyclelab::cocycle::{random_perturbation, Cocycle};
use cocyclelab::renorm::{closed_form_distance, normalform_renorm_closed, renormalize_raw, representative};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sup_distance(f: impl Fn(f64) -> f64) -> f64 {
    (0..512).map(|i| f(i as f64 / 512.0)).fold(0.0, f64::max)
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let h = 0.2;
    let (d, c0) = (1, 0.3);
    let nf = Cocycle::normal_form(AlphaSpec::golden(), d, c0, h)?;

    println!("normal form d={d}, c={c0}");
    println!("   n   α_n        commutation   (d, c) closed     distance   c-shift   shifted distance");
    let (mut alpha, mut dd, mut cc) = (nf.alpha, d, c0);
    for n in 1..=6 {
        let pair = renormalize_raw(&nf, n)?;
        let rep = representative(&nf, n, None)?;
        let (ga, (d_next, c_next), closed) = normalform_renorm_closed(alpha, dd, cc, h);
        (alpha, dd, cc) = (ga, d_next, c_next);
        let dist = sup_distance(|x| op_norm(&(rep.a.eval_real(x) - closed.eval_real(x))));
        let (k, shifted) = closed_form_distance(&rep, dd, cc, 64);
        println!(
            "  {n:2}   {:.6}   {:.2e}      ({dd:+}, {cc:.6})   {dist:.2e}   {k:+4}α    {shifted:.2e}",
            rep.alpha_n,
            pair.commutation_defect()
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let phi = random_perturbation(&mut rng, 5, 0.3, 0.03, h);
    let flat = Cocycle::perturbed_normal_form(AlphaSpec::golden(), 0, 0.0, &phi, h)?;
    println!("degree zero, ‖φ‖ = 0.03");
    println!("   n   α_n        nonconstant part");
    for n in 0..=6 {
        let rep = representative(&flat, n, None)?;
        println!("  {n:2}   {:.6}   {:.3e}", rep.alpha_n, rep.nonconstant_part());
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
