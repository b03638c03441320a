// Monte Carlo replication of the scaled estimation error against its limit,
// with QQ pairs and the two-sample KS statistic.
//
// ```bash
// cargo run --release --example replication
// ```

use grenander_kl::experiments::{qq_pairs, run_finite_sample, ExperimentConfig};
use grenander_kl::limit::LimitTarget;
use grenander_kl::PiecewisePolyDensity;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut config =
        ExperimentConfig::new(PiecewisePolyDensity::example_step_ramp(), "eg1", LimitTarget::Pointwise { x0: 0.75 });
    config.n = 2000;
    config.replicates = 200;
    config.limit_draws = 2000;
    config.seed = 17;
    config.workers = 2;
    println!("{}", config.effective().line());

    let report = run_finite_sample(&config)?;
    println!(
        "mean {:.4}, variance {:.4} (limit {:?}), KS {:.4}",
        report.mean, report.variance, report.limit_variance, report.ks
    );
    for (p, (e, l)) in [0.1, 0.5, 0.9].iter().zip(qq_pairs(&report.values, &report.limit_draws, &[0.1, 0.5, 0.9])?) {
        println!("  p = {p}: empirical {e:+.3}, limit {l:+.3}");
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
