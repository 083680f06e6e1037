#![allow(dead_code)]

use std::path::PathBuf;

use cocyclelab::arithmetic::AlphaSpec;
use cocyclelab::cli::CocycleSpec;
use cocyclelab::cocycle::random_perturbation;
use cocyclelab::normalform::coboundary_perturbation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 0.2;

pub fn golden() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// Degree-one exp-sum whose perturbation is a twisted coboundary of size `1e-4`.
pub fn d1_fixture() -> CocycleSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi = coboundary_perturbation(&mut rng, golden(), 1, 0.0, 12, 0.4, 1e-4, H).unwrap();
    CocycleSpec::exp_sum(AlphaSpec::golden(), 1, &phi, H)
}

pub fn d0_fixture() -> CocycleSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let phi = random_perturbation(&mut rng, 5, 0.3, 0.03, H);
    CocycleSpec::exp_sum(AlphaSpec::golden(), 0, &phi, H)
}

/// Large perturbation whose degree does not snap.
pub fn noisy_fixture() -> CocycleSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let phi = random_perturbation(&mut rng, 4, 0.2, 1.0, H);
    CocycleSpec::exp_sum(AlphaSpec::golden(), 1, &phi, H)
}

pub fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cocyclelab-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}
