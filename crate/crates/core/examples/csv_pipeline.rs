//! Simulate, write, reload and fit through the same entry point as the binary.

use gsls::cli::main_with_args;
use gsls::io::read_key_values;

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let root = dir.path().to_str().unwrap().to_string();
    let sim = format!("{root}/sim");
    let fit = format!("{root}/fit");
    let code = main_with_args(["gsls", "simulate", "--generator", "hetero", "--n", "300", "--seed", "4", "--output-dir", &sim]);
    println!("simulate exit {code}");
    let data = format!("{sim}/data.csv");
    let code = main_with_args([
        "gsls", "fit-quantile", "--input", &data, "--alpha", "0.75", "--smoother", "w=ll:df=5", "--output-dir", &fit,
    ]);
    println!("fit-quantile exit {code}");
    for (k, v) in read_key_values(format!("{fit}/diagnostics.txt")).expect("diagnostics") {
        println!("  {k} = {v}");
    }
}
