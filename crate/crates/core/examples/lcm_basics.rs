// Least concave majorant of a handful of knots, its left derivative, a
// restricted majorant, and the switching argmax.
//
// ```bash
// cargo run --example lcm_basics
// ```

use grenander_kl::{gren, lcm_of_knots, restricted_lcm, switching_argmax, KnotSequence};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let knots = KnotSequence::from_points(&[(0.0, 0.0), (0.2, 0.5), (0.4, 0.6), (0.6, 0.9), (1.0, 1.0)])?;
    let cm = lcm_of_knots(&knots);
    println!("retained knots: {:?}", cm.xs());
    println!("slopes:         {:?}", cm.slopes());

    let step = gren(&cm);
    for x in [0.1, 0.3, 0.5, 0.9] {
        println!("gren at {x}: {:.4}", step.eval(x));
    }
    assert!(step.is_non_increasing());

    // Drop the knot at 0.2: the majorant no longer has to dominate it.
    let partial = restricted_lcm(&knots, &[0, 2, 3, 4])?;
    println!("restricted slopes: {:?}", partial.slopes());

    for level in [0.5, 1.0, 2.0] {
        println!("argmax F(z) - {level} z = {}", switching_argmax(&knots, level));
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
