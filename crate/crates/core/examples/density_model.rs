// Piecewise-polynomial densities: presets, JSON round trip, CDF, quantiles
// and seeded sampling.
//
// ```bash
// cargo run --example density_model
// ```

use grenander_kl::{functional_mean, PiecewisePolyDensity, Preset, Segment};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let eg2 = PiecewisePolyDensity::example_parabola_dip();
    println!("eg2 as JSON: {}", eg2.to_json());
    println!("F(0.25) = {}", eg2.cdf(0.25)?);
    println!("median  = {:.6}", eg2.quantile(0.5)?);
    println!("mean    = {:.6}", functional_mean(&eg2, &Preset::Identity)?);

    let custom = PiecewisePolyDensity::new(vec![Segment::new(0.0, 1.0, vec![2.0, -2.0])])?;
    let back = PiecewisePolyDensity::from_json_str(&custom.to_json())?;
    assert_eq!(custom, back);

    let draws = custom.sample(8, 42);
    println!("8 draws from 2(1 - x), sorted: {draws:.3?}");
    assert_eq!(draws, custom.sample(8, 42));
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
