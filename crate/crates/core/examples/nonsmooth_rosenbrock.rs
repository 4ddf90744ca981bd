//! Minimizes 10|x2 - x1^2| + (1 - x1)^2 from (-1, 1) and prints the path summary.

use gsls::engine::testfns::NsRosenbrock;
use gsls::engine::{gsda_minimize, Event, GsParams};

fn main() -> gsls::Result<()> {
    let res = gsda_minimize(&NsRosenbrock, &[-1.0, 1.0], &GsParams::default().with_seed(1))?;
    let shrinks = res.trace.records.iter().filter(|r| r.event != Event::Step).count();
    println!("x = ({:.6}, {:.6}), f = {:.3e}", res.x[0], res.x[1], res.f);
    println!("{} iterations: {} steps, {} shrinks", res.trace.records.len(), res.trace.steps(), shrinks);
    let dist = ((res.x[0] - 1.0).powi(2) + (res.x[1] - 1.0).powi(2)).sqrt();
    println!("distance to (1, 1): {dist:.2e}, converged: {}", res.trace.converged);
    for r in res.trace.records.iter().step_by(20) {
        println!("  iter {:4}  f {:.4e}  |g| {:.3e}  eps {:.1e}  t {}", r.iter, r.f, r.g_norm, r.eps, r.t);
    }
    Ok(())
}
