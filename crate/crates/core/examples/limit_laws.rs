// Brownian bridges, `gren` of a bridge, and the limit laws of the pointwise,
// linear and entropy functionals.
//
// ```bash
// cargo run --example limit_laws
// ```

use grenander_kl::limit::{
    gren_of_bridge, sample_bridge, sigma2_entropy, sigma2_linear, sigma2_pointwise, LimitSampler,
};
use grenander_kl::{decompose, PiecewisePolyDensity, Preset};

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let path = sample_bridge(1025, 1)?;
    let step = gren_of_bridge(&path, None)?;
    println!("gren(U) has {} steps, integral {:.2e}", step.levels().len(), step.total_integral());

    let eg1 = decompose(&PiecewisePolyDensity::example_step_ramp())?;
    let eg2 = decompose(&PiecewisePolyDensity::example_parabola_dip())?;
    println!("pointwise variance, eg1 at 0.75: {:.4}", sigma2_pointwise(&eg1, 0.75)?);
    println!("pointwise variance, eg2 at 0.75: {:.4}", sigma2_pointwise(&eg2, 0.75)?);
    println!("linear variance, eg2, g(x) = x: {:.6}", sigma2_linear(&eg2, &Preset::Identity)?);
    println!("entropy variance, eg1: {:.6}", sigma2_entropy(&eg1)?);

    // Where the touch set fills the block the limit is not Gaussian.
    let sampler = LimitSampler::pointwise(&eg1, 0.25, 513)?;
    let draws = sampler.draws(3, 2000);
    println!("eg1 at 0.25: {} bridge draws, variance {:.3}", draws.len(), variance(&draws));

    let linear = LimitSampler::linear(&eg1, &Preset::Identity, 513)?;
    let draws = linear.draws(4, 2000);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    println!("eg1 linear limit: mean {mean:.4}, variance {:.4}", variance(&draws));
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
