//! Two return levels with a site effect and a smooth time trend.

use gsls::engine::GsParams;
use gsls::io::simulate_site_trend;
use gsls::pot::{fit_pot_additive, FunctionalSpec, PotOptions};
use gsls::smoothing::{Covariate, SmootherSpec};

fn main() -> gsls::Result<()> {
    let ds = simulate_site_trend(55, 4, 0.1, 5)?;
    let specs = [SmootherSpec::cell_factor(0), SmootherSpec::local_linear_df(1, 10.0)];
    let spec = FunctionalSpec::var_var(0.001, 0.0002, 0.01);
    let m = fit_pot_additive(&ds.y, &ds.covariates(), &spec, &specs, &GsParams::additive(), &PotOptions::default())?;
    println!("converged {}, {} steps, year df {:.2}", m.trace.converged, m.trace.steps(), m.projector.component_df(1));
    let [t1, t2] = &m.state.theta;
    println!("crossings: {}", t1.iter().zip(t2).filter(|(a, b)| b <= a).count());
    let (site, year) = match (ds.column("site")?, ds.column("year")?) {
        (Covariate::Factor(s), Covariate::Numeric(y)) => (s.clone(), y.clone()),
        _ => unreachable!("the generator emits a factor and a numeric column"),
    };
    for i in (0..ds.n()).filter(|&i| site.codes[i] == 0).step_by(30) {
        println!("  {} {:.0}: theta1 {:6.3}  theta2 {:6.3}", site.label(i), year[i], t1[i], t2[i]);
    }
    let [d1, _] = &m.decompositions;
    println!("site effects on theta1: {:?}", (0..3).map(|s| d1.components[0][(0..ds.n()).find(|&i| site.codes[i] == s).unwrap()]).collect::<Vec<_>>());
    Ok(())
}
