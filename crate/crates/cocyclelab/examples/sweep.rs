//! Acceleration and degree along a one-parameter family, written as CSV.
//!
//! ```text
//! cargo run --release --example sweep > sweep.csv
//! ```

use std::error::Error;

use cocyclelab::arithmetic::AlphaSpec;
use cocyclelab::cli::{cmd_sweep, parse_grid, CocycleSpec, EstimatorParams, SweepParam};
use cocyclelab::cocycle::random_perturbation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<(), Box<dyn Error>> {
    let h = 0.2;
    let p = EstimatorParams { n: 1000, degree_n: 1000, grid: 8, eps_grid: None };

    // quantization plateau: the rotation number of the constant part does not move the invariants
    let nf = CocycleSpec::normal_form(AlphaSpec::golden(), 1, 0.0, h);
    cmd_sweep(&nf, SweepParam::C0, &parse_grid("0:1:6")?, &p, std::io::stdout().lock())?;

    // growing a perturbation until the degree no longer snaps
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let phi = random_perturbation(&mut rng, 4, 0.2, 1.0, h);
    let family = CocycleSpec::exp_sum(AlphaSpec::golden(), 1, &phi, h);
    cmd_sweep(&family, SweepParam::Scale, &parse_grid("0:2:9")?, &p, std::io::stdout().lock())?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
