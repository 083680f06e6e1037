//! End-to-end classification of three fixtures and of randomly conjugated copies.
//!
//! ```text
//! cargo run --release --example classify
//! ```

use std::error::Error;

use cocyclelab::arithmetic::AlphaSpec;
use cocyclelab::cli::{cmd_classify, ClassifyParams, CocycleSpec};
use cocyclelab::cocycle::random_perturbation;
use cocyclelab::normalform::coboundary_perturbation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<(), Box<dyn Error>> {
    let h = 0.2;
    let golden = AlphaSpec::golden();
    let alpha = golden.to_f64()?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi1 = coboundary_perturbation(&mut rng, alpha, 1, 0.0, 12, 0.4, 1e-4, h)?;
    let phi0 = random_perturbation(&mut rng, 5, 0.3, 0.03, h);
    let fixtures = [
        ("degree 0", CocycleSpec::exp_sum(golden.clone(), 0, &phi0, h)),
        ("degree 1", CocycleSpec::exp_sum(golden.clone(), 1, &phi1, h)),
        ("degree 2", CocycleSpec::normal_form(golden.clone(), 2, 0.3, h)),
    ];
    let params = ClassifyParams::default();

    for (name, base) in &fixtures {
        for seed in [None, Some(1000u64), Some(1001)] {
            let spec = match seed {
                None => base.clone(),
                Some(s) => {
                    let mut r = ChaCha8Rng::seed_from_u64(s);
                    base.conjugated(&random_perturbation(&mut r, 3, 0.3, 0.1, h))?
                }
            };
            let report = cmd_classify(&spec, &params);
            let res = &report.result;
            let label = seed.map(|s| format!("conjugated #{s}")).unwrap_or_else(|| "as given".into());
            print!("{name:9} {label:16} exit {}  {}  degree {}", report.exit_code, res["branch"], res["degree"]);
            if res["branch"] == "almost-reducible" {
                println!("  flat at n = {}", res["flat_at"]);
            } else {
                println!(
                    "  depth {}  width {}  end-to-end residual {:.2e}",
                    res["renormalization_depth"],
                    res["h"],
                    res["end_to_end_residual"].as_f64().unwrap_or(f64::NAN)
                );
            }
        }
    }

    let report = cmd_classify(&fixtures[1].1, &params);
    let conjugacy = CocycleSpec::from_json(&report.result["conjugacy"].to_string())?;
    println!("exported conjugacy: {} factors, digest {}", conjugacy.factors.len(), &conjugacy.digest()[..16]);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
