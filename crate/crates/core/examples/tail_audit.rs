// Tail frequencies of the estimator on a flat block against the exponential
// bounds.
//
// ```bash
// cargo run --release --example tail_audit
// ```

use grenander_kl::experiments::tail_bound_audit;
use grenander_kl::PiecewisePolyDensity;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let uniform = PiecewisePolyDensity::uniform();
    let audit = tail_bound_audit(&uniform, 0.5, &[0.5, 1.0, 2.0], 100, 1000, 9)?;
    print!("{}", audit.to_csv());

    let eg1 = PiecewisePolyDensity::example_step_ramp();
    let audit = tail_bound_audit(&eg1, 0.75, &[1.0, 2.0], 400, 1000, 9)?;
    print!("{}", audit.to_csv());
    println!("violations: {}", audit.any_violation());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
