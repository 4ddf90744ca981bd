//! Constant GPD fit through the (return level, expected shortfall) pair.

use gsls::engine::GsParams;
use gsls::io::simulate_gpd;
use gsls::pot::{expected_shortfall, fit_pot_additive, return_level, FunctionalSpec, PotOptions};

fn main() -> gsls::Result<()> {
    let y = simulate_gpd(800, |_| 2.0, |_| 0.2, 12)?.y;
    let c = 0.1;
    let m = fit_pot_additive(&y, &[], &FunctionalSpec::var_es_c(c), &[], &GsParams::additive().with_seed(12), &PotOptions::default())?;
    let lam = &m.state.lambda;
    println!("sigma {:.4}, kappa {:.4}", lam.eta[0].exp(), lam.kappa[0]);
    println!("theta {:.4} (true {:.4})", m.state.theta[0][0], return_level(2.0, 0.2, c));
    println!("zeta  {:.4} (true {:.4})", m.state.theta[1][0], expected_shortfall(2.0, 0.2, c).unwrap());
    println!("log-likelihood {:.3}, {} steps, converged {}", m.loglik(&y), m.trace.steps(), m.trace.converged);
    Ok(())
}
