// Fit the Grenander estimator to a sample and evaluate plug-in functionals.
//
// ```bash
// cargo run --example grenander_fit
// ```

use grenander_kl::{ecdf_gap, entropy, fit, linear_functional, PiecewisePolyDensity, Preset};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let small = fit(&[0.2, 0.4, 0.9])?;
    print!("{}", small.to_csv());
    println!("mean {:.4}, entropy {:.6}", linear_functional(&small, &Preset::Identity)?, entropy(small.density())?);

    let d = PiecewisePolyDensity::example_step_ramp();
    for n in [100, 1000, 10_000] {
        let f = fit(&d.sample(n, 7))?;
        println!(
            "n = {n:>6}: {:>4} steps, f̂n(0.75) = {:.4}, sup|F̂n - Fn| = {:.5}",
            f.density().levels().len(),
            f.eval(0.75),
            ecdf_gap(&f)
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
