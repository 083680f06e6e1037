//! Floquet reduction of a field supported on a resonant line `ℤ(q, −p)`.
//!
//! ```text
//! cargo run --release --example floquet
//! ```

use std::error::Error;

use cocyclelab::algebra3::{CAlg, C64};
use cocyclelab::fourier::{Coef, TrigPoly2};
use cocyclelab::kam::floquet_reduce;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line_field(rng: &mut ChaCha8Rng, q: i64, p: i64, size: f64) -> TrigPoly2<CAlg> {
    let mut g = TrigPoly2::zeros(2 * (q + p).unsigned_abs() as usize, 0.1);
    g.set((0, 0), CAlg::new(C64::new(rng.random_range(-1.0..1.0), 0.0), C64::new(0.3, 0.0), C64::new(0.0, 0.0)));
    for l in 1..=2i64 {
        let v = CAlg::from_comps(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * (size / l as f64));
        g.set((l * q, -l * p), v);
        g.set((-l * q, l * p), v.conj());
    }
    g.real = true;
    g
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let alpha = (5f64.sqrt() - 1.0) / 2.0;
    println!("  (q,p)    size   residual    ‖B‖#       bound       C");
    for (q, p) in [(1, 1), (2, 1), (3, 2)] {
        for (seed, size) in [(1u64, 0.01), (2, 0.05), (3, 0.2)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = line_field(&mut rng, q, p, size);
            let out = floquet_reduce(&f, q, p, alpha)?;
            println!(
                "  ({q},{p})   {size:.2}   {:.2e}   {:.3e}   {:.3e}   [{:+.4}, {:+.4}, {:+.4}]",
                out.residual, out.norm_bound.0, out.norm_bound.1, out.c.a1, out.c.a2, out.c.a3
            );
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
