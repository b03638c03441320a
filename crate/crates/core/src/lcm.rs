//! Least concave majorants of finite knot sequences and their left derivatives.
//!
//! The majorant is the upper convex hull of the knots, built with a single
//! monotone-stack pass. Segments whose slopes agree to within a relative
//! `1e-12` are merged, so the retained slopes are strictly decreasing.

use crate::error::{invalid, Result};

const SLOPE_TIE: f64 = 1e-12;

fn slopes_tie(a: f64, b: f64) -> f64 {
    SLOPE_TIE * 1f64.max(a.abs()).max(b.abs())
}

/// Points `(x, y)` with strictly increasing, finite `x` and finite `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSequence {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl KnotSequence {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(invalid(format!("{} x values but {} y values", xs.len(), ys.len())));
        }
        if xs.len() < 2 {
            return Err(invalid("a knot sequence needs at least 2 knots"));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("knot coordinates must be finite"));
        }
        if let Some(w) = xs.windows(2).find(|w| w[1] <= w[0]) {
            return Err(invalid(format!("knot x values must increase strictly ({} then {})", w[0], w[1])));
        }
        Ok(Self { xs, ys })
    }

    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(points.iter().map(|p| p.0).collect(), points.iter().map(|p| p.1).collect())
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }
}

/// Piecewise-linear concave function through a subset of the input knots.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveMajorant {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    indices: Vec<usize>,
}

impl ConcaveMajorant {
    /// Retained knot x coordinates (the touch points).
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// One slope per segment, strictly decreasing.
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Indices into the input sequence of the retained knots.
    pub fn retained(&self) -> &[usize] {
        &self.indices
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Linear interpolation between retained knots; constant outside the domain.
    pub fn value(&self, x: f64) -> f64 {
        let last = self.xs.len() - 1;
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[last] {
            return self.ys[last];
        }
        let k = self.xs.partition_point(|&v| v <= x) - 1;
        self.ys[k] + self.slopes[k] * (x - self.xs[k])
    }
}

/// Left-continuous step function: `levels[i]` on `(breaks[i], breaks[i + 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breaks: Vec<f64>,
    levels: Vec<f64>,
}

impl StepFunction {
    pub fn new(breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 || levels.len() + 1 != breaks.len() {
            return Err(invalid("a step function needs n + 1 breakpoints for n levels, n >= 1"));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) || breaks.iter().chain(levels.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("step breakpoints must be finite and strictly increasing"));
        }
        Ok(Self { breaks, levels })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `(lo, hi, level)` for each step.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breaks.windows(2).zip(&self.levels).map(|(w, &l)| (w[0], w[1], l))
    }

    /// Value at `x` under the left-continuous convention. The left end of the
    /// domain takes the first level; points outside the domain evaluate to 0.
    pub fn eval(&self, x: f64) -> f64 {
        let last = self.breaks.len() - 1;
        if x < self.breaks[0] || x > self.breaks[last] {
            return 0.0;
        }
        if x == self.breaks[0] {
            return self.levels[0];
        }
        let k = self.breaks.partition_point(|&b| b < x);
        self.levels[k - 1]
    }

    /// Integral over `[lo, hi]` (zero outside the domain).
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        self.steps()
            .map(|(a, b, l)| {
                let w = b.min(hi) - a.max(lo);
                if w > 0.0 {
                    l * w
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn total_integral(&self) -> f64 {
        self.steps().map(|(a, b, l)| l * (b - a)).sum()
    }

    pub fn is_non_increasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[1] <= w[0])
    }
}

fn upper_hull(xs: &[f64], ys: &[f64], order: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut stack: Vec<usize> = Vec::new();
    for i in order {
        while stack.len() >= 2 {
            let a = stack[stack.len() - 2];
            let b = stack[stack.len() - 1];
            let s_ab = (ys[b] - ys[a]) / (xs[b] - xs[a]);
            let s_bi = (ys[i] - ys[b]) / (xs[i] - xs[b]);
            if s_bi >= s_ab - slopes_tie(s_ab, s_bi) {
                stack.pop();
            } else {
                break;
            }
        }
        stack.push(i);
    }
    stack
}

fn majorant_from(points: &KnotSequence, indices: Vec<usize>) -> ConcaveMajorant {
    let xs: Vec<f64> = indices.iter().map(|&i| points.xs[i]).collect();
    let ys: Vec<f64> = indices.iter().map(|&i| points.ys[i]).collect();
    let slopes = xs.windows(2).zip(ys.windows(2)).map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0])).collect();
    ConcaveMajorant { xs, ys, slopes, indices }
}

/// Least concave majorant of the knots.
pub fn lcm_of_knots(points: &KnotSequence) -> ConcaveMajorant {
    let hull = upper_hull(&points.xs, &points.ys, 0..points.len());
    majorant_from(points, hull)
}

/// Least concave majorant over the `active` knots only. Inactive knots are
/// treated as `-inf`, so the majorant need not dominate them.
pub fn restricted_lcm(points: &KnotSequence, active: &[usize]) -> Result<ConcaveMajorant> {
    let mut idx = active.to_vec();
    idx.sort_unstable();
    idx.dedup();
    let last = points.len() - 1;
    if idx.first() != Some(&0) || idx.last() != Some(&last) {
        return Err(invalid("the active set must contain the first and last knot"));
    }
    if idx.iter().any(|&i| i > last) {
        return Err(invalid("active index out of range"));
    }
    let hull = upper_hull(&points.xs, &points.ys, idx.into_iter());
    Ok(majorant_from(points, hull))
}

/// Left derivative of the majorant.
pub fn gren(cm: &ConcaveMajorant) -> StepFunction {
    StepFunction { breaks: cm.xs.clone(), levels: cm.slopes.clone() }
}

/// Largest maximizer of `z -> F(z) - level * z` over the knot locations of a
/// non-decreasing step CDF (plus `z = 0` with `F(0) = 0` when the knots start
/// to the right of the origin).
pub fn switching_argmax(cdf: &KnotSequence, level: f64) -> f64 {
    let (mut best_z, mut best_v) = if cdf.xs[0] > 0.0 { (0.0, 0.0) } else { (f64::NAN, f64::NEG_INFINITY) };
    for (&z, &f) in cdf.xs.iter().zip(&cdf.ys) {
        let v = f - level * z;
        if v >= best_v {
            best_v = v;
            best_z = z;
        }
    }
    best_z
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Majorant value at every knot by enumerating all chords `(j, k)` with
    /// `x_j <= x_i <= x_k`, plus the set of strict hull vertices.
    fn brute_force(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let n = xs.len();
        let mut values = vec![f64::NEG_INFINITY; n];
        let mut interior_best = vec![f64::NEG_INFINITY; n];
        for i in 0..n {
            for j in 0..=i {
                for k in i..n {
                    let v = if j == k { ys[i] } else { ys[j] + (ys[k] - ys[j]) * (xs[i] - xs[j]) / (xs[k] - xs[j]) };
                    values[i] = values[i].max(v);
                    if j < i && i < k {
                        interior_best[i] = interior_best[i].max(v);
                    }
                }
            }
        }
        let vertices = (0..n)
            .filter(|&i| i == 0 || i == n - 1 || ys[i] > interior_best[i] + 1e-12 * (1.0 + ys[i].abs()))
            .collect();
        (values, vertices)
    }

    fn random_knots(rng: &mut ChaCha8Rng, n: usize) -> KnotSequence {
        let mut xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let ys = xs.iter().map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        KnotSequence::new(xs, ys).unwrap()
    }

    #[test]
    fn concave_input_is_its_own_majorant() {
        let k = KnotSequence::from_points(&[(0.0, 0.0), (0.5, 0.75), (1.0, 1.0)]).unwrap();
        let cm = lcm_of_knots(&k);
        assert_eq!(cm.retained(), &[0, 1, 2]);
        assert_eq!(cm.slopes(), &[1.5, 0.5]);
        let g = gren(&cm);
        assert_eq!(g.eval(0.25), 1.5);
        assert_eq!(g.eval(0.5), 1.5);
        assert_eq!(g.eval(0.5000001), 0.5);
        assert_eq!(g.eval(1.0), 0.5);
    }

    #[test]
    fn convex_kink_collapses_to_chord() {
        let k = KnotSequence::from_points(&[(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)]).unwrap();
        let cm = lcm_of_knots(&k);
        assert_eq!(cm.retained(), &[0, 2]);
        assert_eq!(cm.slopes(), &[1.0]);
        let (vals, verts) = brute_force(k.xs(), k.ys());
        assert_eq!(verts, vec![0, 2]);
        assert!((vals[1] - 0.5).abs() < 1e-15);
        let g = gren(&cm);
        assert_eq!(g.steps().collect::<Vec<_>>(), vec![(0.0, 1.0, 1.0)]);
    }

    #[test]
    fn collinear_knots_are_merged() {
        let k = KnotSequence::from_points(&[(0.0, 0.0), (0.25, 0.25), (0.5, 0.5), (1.0, 0.75)]).unwrap();
        let cm = lcm_of_knots(&k);
        assert_eq!(cm.retained(), &[0, 2, 3]);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(2..=12);
            let k = random_knots(&mut rng, n);
            if k.len() < 2 {
                continue;
            }
            let cm = lcm_of_knots(&k);
            let (vals, verts) = brute_force(k.xs(), k.ys());
            assert_eq!(cm.retained(), verts.as_slice());
            for (x, v) in k.xs().iter().zip(&vals) {
                assert!((cm.value(*x) - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn restricted_to_endpoints_is_the_chord() {
        let k = KnotSequence::from_points(&[(0.0, 0.0), (0.3, 2.0), (0.6, -1.0), (1.0, 0.5)]).unwrap();
        let cm = restricted_lcm(&k, &[0, 3]).unwrap();
        assert_eq!(cm.retained(), &[0, 3]);
        assert!((cm.slopes()[0] - 0.5).abs() < 1e-15);
        let full = restricted_lcm(&k, &[0, 1, 2, 3]).unwrap();
        assert_eq!(full, lcm_of_knots(&k));
        assert!(restricted_lcm(&k, &[1, 3]).is_err());
        assert!(restricted_lcm(&k, &[0, 2]).is_err());
    }

    #[test]
    fn restricted_matches_sentinel_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let n = rng.random_range(3..=20);
            let k = random_knots(&mut rng, n);
            let last = k.len() - 1;
            let active: Vec<usize> = (0..k.len()).filter(|&i| i == 0 || i == last || rng.random_bool(0.5)).collect();
            let sentinel_ys: Vec<f64> =
                (0..k.len()).map(|i| if active.contains(&i) { k.ys()[i] } else { -1e12 }).collect();
            let oracle = lcm_of_knots(&KnotSequence::new(k.xs().to_vec(), sentinel_ys).unwrap());
            let cm = restricted_lcm(&k, &active).unwrap();
            assert_eq!(cm.retained(), oracle.retained());
        }
    }

    #[test]
    fn switching_argmax_examples() {
        let f = KnotSequence::from_points(&[(0.2, 1.0 / 3.0), (0.4, 2.0 / 3.0), (0.9, 1.0)]).unwrap();
        assert_eq!(switching_argmax(&f, 1.0), 0.4);
        assert_eq!(switching_argmax(&f, 10.0), 0.0);
        assert_eq!(switching_argmax(&f, 0.0), 0.9);
    }

    #[test]
    fn step_function_conventions() {
        let s = StepFunction::new(vec![0.0, 1.0, 3.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(s.eval(-0.1), 0.0);
        assert_eq!(s.eval(0.0), 2.0);
        assert_eq!(s.eval(1.0), 2.0);
        assert_eq!(s.eval(1.5), 1.0);
        assert_eq!(s.eval(3.5), 0.0);
        assert_eq!(s.total_integral(), 4.0);
        assert_eq!(s.integral(0.5, 2.0), 2.0);
        assert!(StepFunction::new(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn invalid_knots_rejected() {
        assert!(KnotSequence::new(vec![0.0], vec![0.0]).is_err());
        assert!(KnotSequence::new(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(KnotSequence::new(vec![1.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(KnotSequence::new(vec![0.0, f64::NAN], vec![0.0, 1.0]).is_err());
    }

    fn knots_strategy() -> impl Strategy<Value = KnotSequence> {
        prop::collection::vec((0.0f64..100.0, -50.0f64..50.0), 2..40).prop_filter_map("distinct x", |mut pts| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            pts.dedup_by(|a, b| a.0 == b.0);
            KnotSequence::from_points(&pts).ok()
        })
    }

    proptest! {
        #[test]
        fn majorant_dominates_and_touches(k in knots_strategy()) {
            let cm = lcm_of_knots(&k);
            for (x, y) in k.xs().iter().zip(k.ys()) {
                prop_assert!(cm.value(*x) >= y - 1e-12 * (1.0 + y.abs()));
            }
            for &i in cm.retained() {
                prop_assert_eq!(cm.value(k.xs()[i]), k.ys()[i]);
            }
            prop_assert!(cm.slopes().windows(2).all(|w| w[1] < w[0]));
            prop_assert_eq!(cm.x_min(), k.xs()[0]);
            prop_assert_eq!(cm.x_max(), k.xs()[k.len() - 1]);
        }

        #[test]
        fn gren_integrates_to_majorant_increments(k in knots_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let cm = lcm_of_knots(&k);
            let g = gren(&cm);
            prop_assert!(g.is_non_increasing());
            let span = cm.x_max() - cm.x_min();
            let (lo, hi) = (cm.x_min() + a.min(b) * span, cm.x_min() + a.max(b) * span);
            let scale = 1.0 + cm.ys().iter().fold(0.0f64, |m, y| m.max(y.abs()));
            prop_assert!((g.integral(lo, hi) - (cm.value(hi) - cm.value(lo))).abs() <= 1e-10 * scale);
            let total: f64 = g.steps().map(|(a, b, l)| l * (b - a)).sum();
            prop_assert!((total - (cm.ys()[cm.ys().len() - 1] - cm.ys()[0])).abs() <= 1e-12 * scale * k.len() as f64);
        }

        #[test]
        fn lowering_a_vertex_breaks_the_majorant(k in knots_strategy(), pick in 0usize..64, eps in 1e-9f64..1.0) {
            let cm = lcm_of_knots(&k);
            let n = cm.xs().len();
            let v = pick % n;
            let mut ys = cm.ys().to_vec();
            ys[v] -= eps;
            // the lowered piecewise-linear function no longer dominates the knot it touched
            let i = cm.retained()[v];
            prop_assert!(ys[v] < k.ys()[i]);
            if n >= 3 && v > 0 && v < n - 1 {
                let (x0, x1, x2) = (cm.xs()[v - 1], cm.xs()[v], cm.xs()[v + 1]);
                let chord = cm.ys()[v - 1] + (cm.ys()[v + 1] - cm.ys()[v - 1]) * (x1 - x0) / (x2 - x0);
                prop_assert!(cm.ys()[v] > chord);
            }
        }
    }

    #[test]
    fn switching_relation_on_random_cdfs() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            let n = rng.random_range(1..=30);
            let mut xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-9).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            let m = xs.len() as f64;
            let mut kx = vec![0.0];
            let mut ky = vec![0.0];
            for (i, x) in xs.iter().enumerate() {
                kx.push(*x);
                ky.push((i + 1) as f64 / m);
            }
            let knots = KnotSequence::new(kx, ky).unwrap();
            let fhat = gren(&lcm_of_knots(&knots));
            for _ in 0..20 {
                let level = rng.random::<f64>() * 2.0 * fhat.levels()[0];
                let z = switching_argmax(&knots, level);
                for _ in 0..20 {
                    let x = rng.random::<f64>() * xs[xs.len() - 1];
                    assert_eq!(fhat.eval(x) <= level, z <= x, "level {level} x {x} argmax {z}");
                }
            }
        }
    }
}
