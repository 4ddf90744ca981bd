//! Intercept-only 0.9 quantile of uniform data, started away from the answer.

use gsls::engine::GsParams;
use gsls::quantile::{fit_quantile_additive_from, sample_quantile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> gsls::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let y: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
    let model = fit_quantile_additive_from(&y, &[], 0.9, &[], &GsParams::additive().with_seed(7), Some(0.5))?;
    println!("fitted constant {:.6}", model.q[0]);
    println!("sample quantile {:.6}", sample_quantile(&y, 0.9));
    println!("coverage {:.3}, {} steps, converged {}", model.coverage(&y), model.trace.steps(), model.trace.converged);
    Ok(())
}
