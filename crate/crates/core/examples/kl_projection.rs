// Projection onto decreasing densities and the split of the support into
// misspecified, well-specified, flat and curved parts.
//
// ```bash
// cargo run --example kl_projection
// ```

use grenander_kl::projection::{decompose_regions, kl_projection, DEFAULT_REGION_TOL, MIN_GRID};
use grenander_kl::{PiecewisePolyDensity, Preset};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for (name, d) in
        [("eg1", PiecewisePolyDensity::example_step_ramp()), ("eg2", PiecewisePolyDensity::example_parabola_dip())]
    {
        let proj = kl_projection(&d, MIN_GRID)?;
        let decomp = decompose_regions(&d, &proj, DEFAULT_REGION_TOL)?;
        println!("{name}:");
        for blk in &decomp.blocks {
            println!(
                "  flat ({:.4}, {:.4}] level {:.4} mass {:.4} touch {:?}",
                blk.a, blk.b, blk.level, blk.mass, blk.touch_kind
            );
        }
        println!("  curved {:?}", decomp.curved);
        println!("  misspecified {:?}", decomp.misspecified);
        let mu0 = grenander_kl::functional_mean(&d, &Preset::Identity)?;
        let mu_hat0 = grenander_kl::functional_mean(proj.density(), &Preset::Identity)?;
        println!("  mean under f0 {mu0:.6}, under projection {mu_hat0:.6}");
        assert!(mu_hat0 <= mu0 + 1e-9);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
