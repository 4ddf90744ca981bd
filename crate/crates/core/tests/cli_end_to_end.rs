use std::collections::BTreeMap;
use std::path::Path;

use gsls::cli::{self, RunConfig, Task};
use gsls::io;

fn config(task: Task, pairs: &[(&str, &str)]) -> RunConfig {
    let map: BTreeMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    RunConfig::from_map(task, &map).unwrap()
}

fn diag(dir: &Path) -> BTreeMap<String, String> {
    io::read_key_values(dir.join("diagnostics.txt")).unwrap()
}

#[test]
fn minimize_reports_distance_to_the_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = cli::run(&config(Task::Minimize, &[("output_dir", out), ("function", "nsrosenbrock")])).unwrap();
    assert_eq!(code, 0);
    let d = diag(dir.path());
    let dist: f64 = d["distance_to_minimum"].parse().unwrap();
    assert!(dist < 1e-2);
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn gradcheck_passes_on_simulated_excesses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = cli::run(&config(Task::Gradcheck, &[("output_dir", out), ("n", "50"), ("points", "20"), ("levels", "0.02,0.005"), ("exceed_prob", "0.1")])).unwrap();
    assert_eq!(code, 0);
    let e: f64 = diag(dir.path())["max_rel_error"].parse().unwrap();
    assert!(e < cli::GRADCHECK_TOL);
}

#[test]
fn sales_quantiles_report_per_cell_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let sim_s = sim.to_str().unwrap();
    assert_eq!(cli::run(&config(Task::Simulate, &[("output_dir", sim_s), ("generator", "sales"), ("days", "42"), ("hours", "4"), ("seed", "5")])).unwrap(), 0);
    let data = sim.join("data.csv");
    let fit = dir.path().join("fit");
    let cfg = config(
        Task::FitQuantile,
        &[
            ("input", data.to_str().unwrap()),
            ("output_dir", fit.to_str().unwrap()),
            ("response", "sales"),
            ("factors", "day,hour"),
            ("smoother", "day*hour=cell"),
            ("alpha", "0.5"),
        ],
    );
    let code = cli::run(&cfg).unwrap();
    let d = diag(&fit);
    assert_eq!(code, if d["converged"] == "true" { 0 } else { 2 });

    // counting oracle over the emitted fitted table
    let mut r = csv::Reader::from_path(fit.join("fitted.csv")).unwrap();
    let mut hits: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.unwrap();
        let (y, day, hour, q): (f64, &str, &str, f64) = (rec[0].parse().unwrap(), &rec[1], &rec[2], rec[4].parse().unwrap());
        let e = hits.entry(format!("{day}:{hour}")).or_default();
        e.0 += (y <= q) as usize;
        e.1 += 1;
    }
    assert_eq!(hits.len(), 28);
    for (cell, (h, n)) in hits {
        let reported: f64 = d[&format!("coverage.day*hour.{cell}")].parse().unwrap();
        assert_eq!(reported, h as f64 / n as f64, "{cell}");
    }
}

#[test]
fn fit_pot_needs_an_exceedance_probability_without_a_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let ds = io::simulate_gpd(30, |_| 1.0, |_| 0.1, 1).unwrap();
    let input = dir.path().join("x.csv");
    io::write_csv(&ds, &input).unwrap();
    let cfg = config(Task::FitPot, &[("input", input.to_str().unwrap()), ("output_dir", dir.path().to_str().unwrap())]);
    let err = cli::run(&cfg).unwrap_err();
    assert_eq!(cli::exit_code(&err), cli::EXIT_INPUT);
    assert!(matches!(err, gsls::Error::Config { ref field, .. } if field == "exceed_prob"));
}

#[test]
fn fit_pot_with_threshold_uses_the_empirical_exceedance_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let ds = io::simulate_gpd(200, |_| 1.0, |_| 0.1, 3).unwrap();
    let input = dir.path().join("x.csv");
    io::write_csv(&ds, &input).unwrap();
    let out = dir.path().join("o");
    let cfg = config(
        Task::FitPot,
        &[("input", input.to_str().unwrap()), ("output_dir", out.to_str().unwrap()), ("threshold", "1.0"), ("levels", "0.01"), ("max_iter", "40")],
    );
    let code = cli::run(&cfg).unwrap();
    assert!(code == 0 || code == 2);
    let d = diag(&out);
    let kept = ds.y.iter().filter(|v| **v > 1.0).count();
    assert_eq!(d["n"], kept.to_string());
    let p: f64 = d["exceed_prob"].parse().unwrap();
    assert_eq!(p, kept as f64 / 200.0);
    for f in ["fitted.csv", "decomposition.csv", "trace.csv"] {
        assert!(out.join(f).exists());
    }
}

#[test]
fn nonconvergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = cli::run(&config(Task::Minimize, &[("output_dir", out), ("max_iter", "3")])).unwrap();
    assert_eq!(code, cli::EXIT_NOT_CONVERGED);
    assert_eq!(diag(dir.path())["converged"], "false");
}
