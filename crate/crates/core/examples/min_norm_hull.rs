//! The min-norm element of a convex hull versus the plain average.

use gsls::minnorm::{average_fallback, min_norm_point, GradientSet, DEFAULT_TOL};

fn main() -> gsls::Result<()> {
    let sets = [
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![1.0, 2.0], vec![-1.0, 2.0], vec![0.0, 3.0]],
        vec![vec![2.0, 1.0], vec![-3.0, 1.0], vec![0.5, -4.0], vec![1.0, 1.0]],
    ];
    for vs in sets {
        let set = GradientSet::new(vs.clone())?;
        let qp = min_norm_point(&set, DEFAULT_TOL)?;
        let avg = average_fallback(&set)?;
        println!("{vs:?}");
        println!("  min-norm {:?} (|.| = {:.4}), weights {:?}", qp.point, qp.norm, qp.weights);
        println!("  average  {:?} (|.| = {:.4})", avg.point, avg.norm);
    }
    Ok(())
}
