//! Exact continued fractions, Diophantine checks and resonant lattices.
//!
//! ```text
//! cargo run --release --example continued_fractions
//! ```

use std::error::Error;

use cocyclelab::arithmetic::{cf_expand, dc_check, resonant_lattice, AlphaSpec};

pub fn run() -> Result<(), Box<dyn Error>> {
    let alphas = [
        ("golden", AlphaSpec::golden()),
        ("√2−1", AlphaSpec::sqrt2_minus_1()),
        ("e−2", AlphaSpec::e_minus_2(40)),
    ];
    for (name, spec) in &alphas {
        let cf = cf_expand(spec, 12)?;
        println!("{name}: α = {:.15}", cf.alpha);
        println!("  a = {:?}", &cf.a[..=10]);
        let q: Vec<i64> = (0..=8).map(|n| cf.q_i64(n)).collect();
        println!("  q = {q:?}");
        println!("  β_8 = {:.3e}", cf.beta[8]);
        let dc = dc_check(spec, 0.1, 1.0, 1000)?;
        println!("  DC(κ=0.1, τ=1) up to q=1000: {} (margin {:.3}, worst q={})", dc.pass, dc.margin, dc.worst.1);
    }

    // a large partial quotient after q_n = 3 puts multiples of (3, −p) inside the ball
    let spiky = AlphaSpec::Cf { quotients: vec![0, 2, 1, 60, 1], period: Some(1) };
    let cf = cf_expand(&spiky, 8)?;
    println!("[0; 2, 1, 60, 1, 1, ...]: a = {:?}", &cf.a[..=6]);
    for n in 1..=4 {
        let (q, p, q_plus) = (cf.q_i64(n), cf.p_i64(n), cf.q_i64(n + 1));
        let sites = resonant_lattice(cf.alpha, q, p, q_plus)?;
        println!("  n={n}: q={q} p={p} q₊={q_plus}, {} resonant sites, all on ℤ({q}, {})", sites.len(), -p);
        for (k1, k2) in sites.iter().take(6) {
            println!("  ({k1:+}, {k2:+})  |k1 α + k2| = {:.3e}", (*k1 as f64 * cf.alpha + *k2 as f64).abs());
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
