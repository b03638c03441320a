#![allow(dead_code)]

use grenander_kl::lcm::{lcm_of_knots, KnotSequence};
use grenander_kl::projection::{kl_projection, KlProjection, DEFAULT_GRID};
use grenander_kl::{fit, quad, switching_argmax, PiecewisePolyDensity, Segment, StepFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64)
}

/// Positive piecewise-quadratic density: `a + b (x - lo) + c (x - m)^2` on
/// each segment with `a > 0`, `c >= 0`, and `b` bounded below so the segment
/// stays positive.
pub fn random_density(rng: &mut ChaCha8Rng) -> PiecewisePolyDensity {
    let k = rng.random_range(1..=4);
    let len = rng.random_range(0.5..3.0);
    let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.05..0.95) * len).collect();
    cuts.sort_by(f64::total_cmp);
    let mut edges = vec![0.0];
    edges.extend(cuts);
    edges.push(len);
    edges.dedup();
    let mut raw = Vec::new();
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let a: f64 = rng.random_range(0.05..2.0);
        let b = rng.random_range(-0.9 * a / (hi - lo)..3.0);
        let c = if rng.random_bool(0.5) { rng.random_range(0.0..4.0) } else { 0.0 };
        let m = rng.random_range(lo..hi);
        raw.push(Segment::new(lo, hi, vec![a - b * lo + c * m * m, b - 2.0 * c * m, c]));
    }
    let total: f64 = raw.iter().map(|s| s.mass()).sum();
    let segs = raw
        .into_iter()
        .map(|s| Segment::new(s.lo, s.hi, s.coeffs.coeffs().iter().map(|c| c / total).collect()))
        .collect();
    PiecewisePolyDensity::new(segs).expect("normalized positive density")
}

/// The densities every projection property is checked on.
pub fn property_densities(count: usize, seed: u64) -> Vec<PiecewisePolyDensity> {
    let mut r = rng(seed);
    let mut out = vec![
        PiecewisePolyDensity::example_step_ramp(),
        PiecewisePolyDensity::example_parabola_dip(),
        PiecewisePolyDensity::uniform(),
        PiecewisePolyDensity::new(vec![Segment::new(0.0, 1.0, vec![0.0, 2.0])]).unwrap(),
    ];
    out.extend((0..count).map(|_| random_density(&mut r)));
    out
}

/// Random decreasing step density on `(0, x_max]`.
pub fn random_decreasing_step(rng: &mut ChaCha8Rng, x_max: f64) -> StepFunction {
    let k = rng.random_range(1..6);
    let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>() * x_max).collect();
    cuts.sort_by(f64::total_cmp);
    let mut breaks = vec![0.0];
    breaks.extend(cuts);
    breaks.push(x_max);
    breaks.dedup();
    let mut levels: Vec<f64> = (0..breaks.len() - 1).map(|_| rng.random::<f64>() + 0.01).collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    let mass: f64 = breaks.windows(2).zip(&levels).map(|(w, q)| q * (w[1] - w[0])).sum();
    StepFunction::new(breaks, levels.iter().map(|q| q / mass).collect()).unwrap()
}

/// `∫ h` over `[0, x_max]`, split at the given breakpoints.
pub fn integrate_split(h: impl Fn(f64) -> f64, breaks: &[f64], x_max: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&b| b > 0.0 && b < x_max).collect();
    pts.push(0.0);
    pts.push(x_max);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2).map(|w| quad::integrate(&h, w[0], w[1], 1e-12).unwrap()).sum()
}

fn breaks_of(d: &PiecewisePolyDensity) -> Vec<f64> {
    d.segments().iter().map(|s| s.hi).collect()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Projection is a decreasing density whose CDF dominates `F0`.
pub fn check_projection_shape(d: &PiecewisePolyDensity, p: &KlProjection) -> Check {
    let x_max = d.x_max();
    let mut prev = f64::INFINITY;
    for k in 1..=4000 {
        let x = x_max * k as f64 / 4000.0;
        let v = p.pdf(x);
        check(v <= prev + 1e-9 * prev.abs().max(1.0), || format!("projection increases at {x}: {prev} -> {v}"))?;
        check(p.cdf(x) >= d.cdf_clamped(x) - 1e-9, || format!("F̂0 < F0 at {x}"))?;
        prev = v;
    }
    check((p.cdf(x_max) - 1.0).abs() < 1e-12, || "projection does not integrate to 1".into())
}

/// Flat levels are block averages of `f0`.
pub fn check_mean_value(d: &PiecewisePolyDensity, p: &KlProjection) -> Check {
    let decomp = grenander_kl::decompose_regions(d, p, 2e-9).map_err(|e| e.to_string())?;
    for blk in &decomp.blocks {
        let avg = (d.cdf_clamped(blk.b) - d.cdf_clamped(blk.a)) / blk.width();
        check((avg - blk.level).abs() <= 1e-9 * blk.level.max(1.0), || {
            format!("block ({}, {}] level {} but average {}", blk.a, blk.b, blk.level, avg)
        })?;
        for x in [0.25, 0.5, 0.75].map(|t| blk.a + t * blk.width()) {
            check((p.pdf(x) - avg).abs() <= 1e-9 * avg.max(1.0), || {
                format!("projection not constant on block at {x}")
            })?;
        }
    }
    Ok(())
}

/// `∫ h f̂0 <= ∫ h f0` for increasing `h`.
pub fn check_increasing_functionals(d: &PiecewisePolyDensity, p: &KlProjection) -> Check {
    type Named = (&'static str, fn(f64) -> f64);
    let hs: [Named; 4] = [("x", |x| x), ("x^2", |x| x * x), ("exp", f64::exp), ("sqrt", f64::sqrt)];
    for (name, h) in hs {
        let under_proj = grenander_kl::functional_mean(p.density(), &h).map_err(|e| e.to_string())?;
        let under_true = grenander_kl::functional_mean(d, &h).map_err(|e| e.to_string())?;
        check(under_proj <= under_true + 1e-9, || format!("increasing h = {name}: {under_proj} > {under_true}"))?;
    }
    // indicators 1{x > c}
    for k in 1..100 {
        let c = d.x_max() * k as f64 / 100.0;
        check(1.0 - p.cdf(c) <= 1.0 - d.cdf_clamped(c) + 1e-9, || format!("indicator above {c}"))?;
    }
    Ok(())
}

/// Marshall: `sup |F̂0 - G0| <= sup |F0 - G0|` for concave CDFs `G0`.
pub fn check_marshall(d: &PiecewisePolyDensity, p: &KlProjection, rng: &mut ChaCha8Rng, trials: usize) -> Check {
    let x_max = d.x_max();
    for _ in 0..trials {
        let reach = x_max * rng.random_range(0.5..1.5);
        let g = random_decreasing_step(rng, reach);
        let big_g = |x: f64| g.integral(0.0, x).min(1.0);
        let mut lhs = 0.0f64;
        let mut rhs = 0.0f64;
        let span = x_max.max(*g.breakpoints().last().unwrap());
        let mut xs: Vec<f64> = (0..=4000).map(|k| span * k as f64 / 4000.0).collect();
        xs.extend(g.breakpoints());
        xs.extend(d.segments().iter().map(|s| s.hi));
        xs.extend(p.pieces().iter().map(|s| s.hi));
        for x in xs {
            lhs = lhs.max((p.cdf(x) - big_g(x)).abs());
            rhs = rhs.max((d.cdf_clamped(x) - big_g(x)).abs());
        }
        check(lhs <= rhs + 1e-9, || format!("Marshall: {lhs} > {rhs}"))?;
    }
    Ok(())
}

/// `f̂0` is the L2 projection: mixing towards any decreasing density does not
/// get closer to `f0`.
pub fn check_l2_optimality(d: &PiecewisePolyDensity, p: &KlProjection, rng: &mut ChaCha8Rng, trials: usize) -> Check {
    let x_max = d.x_max();
    let mut breaks = breaks_of(d);
    breaks.extend(p.pieces().iter().map(|s| s.hi));
    let best = integrate_split(|x| (p.pdf(x) - d.pdf(x)).powi(2), &breaks, x_max);
    for _ in 0..trials {
        let g = random_decreasing_step(rng, x_max);
        let mut all = breaks.clone();
        all.extend(g.breakpoints());
        for eps in [0.01, 0.1, 0.5, 1.0] {
            let other = integrate_split(|x| ((1.0 - eps) * p.pdf(x) + eps * g.eval(x) - d.pdf(x)).powi(2), &all, x_max);
            check(best <= other + 1e-9, || format!("L2: projection {best} beaten by mixture {other} at eps {eps}"))?;
        }
    }
    Ok(())
}

/// Projecting the projection changes nothing.
pub fn check_idempotent(p: &KlProjection, rng: &mut ChaCha8Rng) -> Check {
    let again = kl_projection(p.density(), DEFAULT_GRID).map_err(|e| e.to_string())?;
    let x_max = p.density().x_max();
    let edges: Vec<f64> = p.pieces().iter().map(|s| s.hi).collect();
    for _ in 0..1000 {
        let x = rng.random::<f64>() * x_max;
        if edges.iter().any(|e| (e - x).abs() < 1e-6) {
            continue;
        }
        check((again.pdf(x) - p.pdf(x)).abs() <= 1e-7 * p.pdf(x).max(1.0), || {
            format!("re-projection differs at {x}: {} vs {}", again.pdf(x), p.pdf(x))
        })?;
    }
    Ok(())
}

/// All projection properties on `count` random densities plus the fixed ones.
pub fn projection_property_suite(count: usize, seed: u64) -> Check {
    let mut r = rng(seed ^ 0x5eed);
    for (i, d) in property_densities(count, seed).iter().enumerate() {
        let p = kl_projection(d, DEFAULT_GRID).map_err(|e| format!("density {i}: {e}"))?;
        let tag = |e: String| format!("density {i} ({}): {e}", d.to_json());
        check_projection_shape(d, &p).map_err(tag)?;
        check_mean_value(d, &p).map_err(tag)?;
        check_increasing_functionals(d, &p).map_err(tag)?;
        check_marshall(d, &p, &mut r, 10).map_err(tag)?;
        check_l2_optimality(d, &p, &mut r, 5).map_err(tag)?;
        check_idempotent(&p, &mut r).map_err(tag)?;
    }
    Ok(())
}

/// Majorant value at every knot by enumerating every chord over it, and the
/// knots a strict hull keeps.
pub fn brute_force_lcm(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    (0..n)
        .map(|i| {
            let mut best = ys[i];
            for j in 0..=i {
                for k in i..n {
                    if k > j {
                        let t = (xs[i] - xs[j]) / (xs[k] - xs[j]);
                        best = best.max(ys[j] + t * (ys[k] - ys[j]));
                    }
                }
            }
            best
        })
        .collect()
}

pub fn lcm_brute_force_suite(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for inst in 0..instances {
        let n = r.random_range(2..=12);
        let mut xs: Vec<f64> = (0..n).map(|_| (r.random_range(0..1000) as f64) / 100.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        if xs.len() < 2 {
            continue;
        }
        let ys: Vec<f64> = xs.iter().map(|_| (r.random_range(-500..500) as f64) / 100.0).collect();
        let cm = lcm_of_knots(&KnotSequence::new(xs.clone(), ys.clone()).unwrap());
        let want = brute_force_lcm(&xs, &ys);
        for (i, &x) in xs.iter().enumerate() {
            let got = cm.value(x);
            check((got - want[i]).abs() <= 1e-12 * want[i].abs().max(1.0), || {
                format!("instance {inst}: majorant at {x} is {got}, chords give {}", want[i])
            })?;
        }
    }
    Ok(())
}

/// `f̂n(x) <= λ ⇔ argmax_z {F_n(z) - λ z} <= x` at random levels off the
/// fitted levels.
pub fn switching_suite(fits: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for _ in 0..fits {
        let n = r.random_range(2..60);
        let sample: Vec<f64> = (0..n).map(|_| r.random::<f64>().powf(1.5) * 2.0 + 1e-3).collect();
        let f = fit(&sample).map_err(|e| e.to_string())?;
        let levels = f.density().levels();
        let x_max = *f.sample().last().unwrap();
        for _ in 0..5 {
            let lambda = r.random_range(0.5 * levels[levels.len() - 1]..1.5 * levels[0]);
            if levels.iter().any(|&q| (q - lambda).abs() < 1e-9 * q) {
                continue;
            }
            let z = switching_argmax(f.knots(), lambda);
            for k in 1..=300 {
                let x = x_max * k as f64 / 300.0;
                // At a knot the left-continuous f̂n and the largest maximizer disagree by design.
                if f.knots().xs().contains(&x) {
                    continue;
                }
                check((f.eval(x) <= lambda) == (z <= x), || {
                    format!("switching fails at x = {x}, lambda = {lambda}, z = {z}")
                })?;
            }
        }
    }
    Ok(())
}

/// `∫ f̂n = 1` to `1e-12` on random samples, including ties.
pub fn normalization_suite(fits: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for _ in 0..fits {
        let n = r.random_range(1..500);
        let sample: Vec<f64> = (0..n).map(|_| ((r.random::<f64>() * 50.0).ceil() / 10.0).max(0.1)).collect();
        let f = fit(&sample).map_err(|e| e.to_string())?;
        let total = f.density().total_integral();
        check((total - 1.0).abs() <= 1e-12, || format!("∫ f̂n = {total} for n = {n}"))?;
    }
    Ok(())
}
