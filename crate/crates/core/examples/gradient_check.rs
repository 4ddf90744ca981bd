//! Analytic POT derivatives against central differences, including a shape at zero.

use gsls::io::simulate_gpd;
use gsls::pot::{gradcheck, FunctionalSpec, Lambda};

fn main() -> gsls::Result<()> {
    let y = simulate_gpd(20, |_| 1.5, |_| 0.1, 3)?.y;
    let specs = [("var_es", FunctionalSpec::var_es_c(0.05)), ("var_var", FunctionalSpec::var_var_c(0.1, 0.01))];
    for kappa in [-0.2, 0.0, 1e-9, 0.3] {
        let lam = Lambda::constant(y.len(), 2.0, kappa);
        for (name, spec) in &specs {
            let g = gradcheck(&lam, &y, spec, 1e-6)?;
            println!("kappa {kappa:>6}: {name:7} loglik {:.1e}  jacobian {:.1e}", g.loglik, g.jacobian);
        }
    }
    Ok(())
}
