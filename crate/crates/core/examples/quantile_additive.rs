//! Median and 0.9 quantile curves of heteroscedastic data with a local-linear smoother.

use gsls::engine::GsParams;
use gsls::io::{hetero_scale, simulate_heteroscedastic};
use gsls::quantile::{fit_quantile_additive, predict_quantile};
use gsls::smoothing::{Covariate, SmootherSpec};

fn main() -> gsls::Result<()> {
    let ds = simulate_heteroscedastic(400, 3)?;
    let covs = ds.covariates();
    let grid: Vec<f64> = (0..7).map(|i| 0.25 + 0.4 * i as f64).collect();
    for (alpha, z) in [(0.5, 0.0), (0.9, 1.2815515655446004)] {
        let m = fit_quantile_additive(&ds.y, &covs, alpha, &[SmootherSpec::local_linear_default(0)], &GsParams::additive())?;
        println!("alpha {alpha}: coverage {:.3}, bandwidth {:.3}, converged {}", m.coverage(&ds.y), m.projector.bandwidth(0).unwrap(), m.trace.converged);
        let p = predict_quantile(&m, &[Covariate::Numeric(grid.clone())])?;
        for (w, q) in grid.iter().zip(&p.values) {
            println!("  w {w:.2}: fitted {q:7.3}, true {:7.3}", w.sin() + hetero_scale(*w) * z);
        }
    }
    Ok(())
}
