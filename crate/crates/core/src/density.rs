//! Piecewise-polynomial densities on a bounded support `[0, x_max]`.
//!
//! Each segment carries coefficients `c0..cd` of a polynomial in `x` (not in
//! `x - lo`), so antiderivatives and CDFs are exact. Segments are closed on the
//! left for the first one and left-open afterwards, matching the
//! left-continuous convention used for step functions.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::integrand::Integrand;
use crate::quad;
use crate::rng::SeedStream;

pub const MAX_DEGREE: usize = 6;
const NORMALIZATION_TOL: f64 = 1e-9;
const QUANTILE_TOL: f64 = 1e-13;

/// Polynomial `c0 + c1 x + ... + cd x^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(Vec<f64>);

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn constant(c: f64) -> Self {
        Self(vec![c])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Antiderivative vanishing at 0.
    pub fn primitive(&self, x: f64) -> f64 {
        self.0.iter().enumerate().rev().fold(0.0, |acc, (k, &c)| acc * x + c / (k + 1) as f64) * x
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.0.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &c)| acc * x + c * k as f64)
    }

    /// True when every non-constant coefficient is zero.
    pub fn is_constant(&self) -> bool {
        self.0.iter().skip(1).all(|&c| c == 0.0)
    }

    fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|c| c * s).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Polynomial,
}

impl Segment {
    pub fn new(lo: f64, hi: f64, coeffs: Vec<f64>) -> Self {
        Self { lo, hi, coeffs: Polynomial::new(coeffs) }
    }

    pub fn mass(&self) -> f64 {
        self.coeffs.primitive(self.hi) - self.coeffs.primitive(self.lo)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DensitySpec {
    segments: Vec<Segment>,
}

/// A validated, normalized density on `[0, x_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensitySpec", into = "DensitySpec")]
pub struct PiecewisePolyDensity {
    segments: Vec<Segment>,
    cum: Vec<f64>,
}

impl TryFrom<DensitySpec> for PiecewisePolyDensity {
    type Error = Error;

    fn try_from(spec: DensitySpec) -> Result<Self> {
        Self::new(spec.segments)
    }
}

impl From<PiecewisePolyDensity> for DensitySpec {
    fn from(d: PiecewisePolyDensity) -> Self {
        DensitySpec { segments: d.segments }
    }
}

impl PiecewisePolyDensity {
    /// Validates contiguity, degree, non-negativity and normalization, then
    /// rescales away any residual normalization error (at most `1e-9`).
    pub fn new(mut segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(invalid("a density needs at least one segment"));
        }
        if segments[0].lo != 0.0 {
            return Err(invalid(format!("support must start at 0, got {}", segments[0].lo)));
        }
        for i in 0..segments.len() {
            let s = &segments[i];
            if !(s.lo.is_finite() && s.hi.is_finite()) || s.hi <= s.lo {
                return Err(invalid(format!("segment {i} has invalid bounds [{}, {}]", s.lo, s.hi)));
            }
            if s.coeffs.0.is_empty() || s.coeffs.0.len() > MAX_DEGREE + 1 {
                return Err(invalid(format!("segment {i} must have between 1 and {} coefficients", MAX_DEGREE + 1)));
            }
            if s.coeffs.0.iter().any(|c| !c.is_finite()) {
                return Err(invalid(format!("segment {i} has non-finite coefficients")));
            }
            if i > 0 {
                let prev_hi = segments[i - 1].hi;
                if (prev_hi - s.lo).abs() > 1e-12 * prev_hi.abs().max(1.0) {
                    return Err(invalid(format!("segments {} and {i} are not contiguous", i - 1)));
                }
                segments[i].lo = prev_hi;
            }
        }
        for (i, s) in segments.iter().enumerate() {
            let steps = 256;
            for k in 0..=steps {
                let x = s.lo + (s.hi - s.lo) * k as f64 / steps as f64;
                let v = s.coeffs.eval(x);
                if v < -1e-12 {
                    return Err(invalid(format!("density is negative ({v}) at x = {x} in segment {i}")));
                }
            }
        }
        let total: f64 = segments.iter().map(Segment::mass).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(invalid(format!("density integrates to {total}, not 1")));
        }
        if total != 1.0 {
            for s in &mut segments {
                s.coeffs = s.coeffs.scaled(1.0 / total);
            }
        }
        let mut cum = Vec::with_capacity(segments.len() + 1);
        cum.push(0.0);
        for s in &segments {
            cum.push(cum[cum.len() - 1] + s.mass());
        }
        Ok(Self { segments, cum })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("density serializes")
    }

    /// `1.5` on `[0, 0.5]`, `x - 0.25` on `(0.5, 1]`.
    pub fn example_step_ramp() -> Self {
        Self::new(vec![Segment::new(0.0, 0.5, vec![1.5]), Segment::new(0.5, 1.0, vec![-0.25, 1.0])]).unwrap()
    }

    /// `12 (x - 0.5)^2` outside `(0.4, 0.6)`, `0.04` inside.
    pub fn example_parabola_dip() -> Self {
        Self::new(vec![
            Segment::new(0.0, 0.4, vec![3.0, -12.0, 12.0]),
            Segment::new(0.4, 0.6, vec![0.04]),
            Segment::new(0.6, 1.0, vec![3.0, -12.0, 12.0]),
        ])
        .unwrap()
    }

    pub fn uniform() -> Self {
        Self::new(vec![Segment::new(0.0, 1.0, vec![1.0])]).unwrap()
    }

    /// Named presets: `eg1`, `eg2`, `uniform`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "eg1" => Some(Self::example_step_ramp()),
            "eg2" => Some(Self::example_parabola_dip()),
            "uniform" => Some(Self::uniform()),
            _ => None,
        }
    }

    /// A preset name, or otherwise a path to a JSON density file.
    pub fn load(spec: &str) -> Result<Self> {
        match Self::preset(spec) {
            Some(d) => Ok(d),
            None => Self::from_path(spec),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn x_max(&self) -> f64 {
        self.segments[self.segments.len() - 1].hi
    }

    fn segment_index(&self, x: f64) -> usize {
        self.segments.partition_point(|s| s.hi < x).min(self.segments.len() - 1)
    }

    /// Density value; 0 outside the support.
    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=self.x_max()).contains(&x) {
            return 0.0;
        }
        self.segments[self.segment_index(x)].coeffs.eval(x)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(0.0..=self.x_max()).contains(&x) {
            return Err(domain(format!("x = {x} lies outside the support [0, {}]", self.x_max())));
        }
        Ok(self.cdf_clamped(x))
    }

    /// CDF extended by 0 to the left and 1 to the right of the support.
    pub fn cdf_clamped(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.x_max() {
            return 1.0;
        }
        let k = self.segment_index(x);
        let s = &self.segments[k];
        (self.cum[k] + s.coeffs.primitive(x) - s.coeffs.primitive(s.lo)).clamp(0.0, 1.0)
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(domain(format!("probability {u} outside [0, 1]")));
        }
        Ok(self.quantile_unchecked(u))
    }

    fn quantile_unchecked(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return self.x_max();
        }
        let k = self.cum[1..].partition_point(|&c| c < u).min(self.segments.len() - 1);
        let s = &self.segments[k];
        let target = u - self.cum[k] + s.coeffs.primitive(s.lo);
        let (mut lo, mut hi) = (s.lo, s.hi);
        let mass = self.cum[k + 1] - self.cum[k];
        let mut x = if mass > 0.0 { lo + (hi - lo) * ((u - self.cum[k]) / mass).clamp(0.0, 1.0) } else { lo };
        for _ in 0..200 {
            let r = s.coeffs.primitive(x) - target;
            if r.abs() <= QUANTILE_TOL {
                break;
            }
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
                break;
            }
            let f = s.coeffs.eval(x);
            let newton = x - r / f;
            x = if f > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        x
    }

    /// `n` inverse-CDF draws, sorted ascending.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        self.sample_stream(n, SeedStream::new(seed))
    }

    pub fn sample_stream(&self, n: usize, stream: SeedStream) -> Vec<f64> {
        let mut rng = stream.rng();
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let mut xs: Vec<f64> = (0..n).map(|_| self.quantile_unchecked(rng.random::<f64>())).collect();
        xs.sort_unstable_by(f64::total_cmp);
        xs
    }

    /// Smallest density value found on a dense grid over every segment
    /// (segment endpoints included).
    pub fn min_on_grid(&self) -> f64 {
        let steps = 1024;
        self.segments
            .iter()
            .flat_map(|s| (0..=steps).map(move |k| s.coeffs.eval(s.lo + (s.hi - s.lo) * k as f64 / steps as f64)))
            .fold(f64::INFINITY, f64::min)
    }

    /// `inf f > 0` on the support, checked on a dense grid.
    pub fn is_strictly_positive(&self) -> bool {
        self.min_on_grid() > 0.0
    }

    /// `T(f) = int f log f`.
    pub fn entropy(&self) -> Result<f64> {
        let mut total = 0.0;
        for s in &self.segments {
            total += if s.coeffs.is_constant() {
                let c = s.coeffs.0[0];
                if c > 0.0 {
                    c * c.ln() * (s.hi - s.lo)
                } else {
                    0.0
                }
            } else {
                quad::integrate(
                    |x| {
                        let v = s.coeffs.eval(x);
                        if v > 0.0 {
                            v * v.ln()
                        } else {
                            0.0
                        }
                    },
                    s.lo,
                    s.hi,
                    1e-12,
                )?
            };
        }
        Ok(total)
    }
}

/// `int g f dx` over the support, to absolute tolerance `1e-10`. Constant
/// segments use the antiderivative of `g` when one is supplied.
pub fn functional_mean(d: &PiecewisePolyDensity, g: &dyn Integrand) -> Result<f64> {
    let tol = 1e-10 / d.segments.len() as f64;
    let mut total = 0.0;
    for s in &d.segments {
        let exact = match (s.coeffs.is_constant(), g.antiderivative(s.lo), g.antiderivative(s.hi)) {
            (true, Some(a), Some(b)) => Some(s.coeffs.0[0] * (b - a)),
            _ => None,
        };
        let part = match exact {
            Some(v) => {
                let mid = g.eval(0.5 * (s.lo + s.hi));
                if !(v.is_finite() && mid.is_finite() && g.eval(s.lo).is_finite() && g.eval(s.hi).is_finite()) {
                    return Err(crate::error::numeric("integrand is not finite on the support"));
                }
                v
            }
            None => quad::integrate(|x| g.eval(x) * s.coeffs.eval(x), s.lo, s.hi, tol)?,
        };
        total += part;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrand::Preset;

    #[test]
    fn cdf_examples() {
        let eg2 = PiecewisePolyDensity::example_parabola_dip();
        assert!((eg2.cdf(0.25).unwrap() - 0.4375).abs() < 1e-14);
        for d in [PiecewisePolyDensity::example_step_ramp(), eg2, PiecewisePolyDensity::uniform()] {
            assert_eq!(d.cdf(0.0).unwrap(), 0.0);
            assert_eq!(d.cdf(d.x_max()).unwrap(), 1.0);
            assert!(matches!(d.cdf(1.5), Err(Error::Domain(_))));
            assert!(matches!(d.cdf(-0.1), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn quantile_examples() {
        let u = PiecewisePolyDensity::uniform();
        assert!((u.quantile(0.37).unwrap() - 0.37).abs() < 1e-12);
        let eg1 = PiecewisePolyDensity::example_step_ramp();
        assert!((eg1.quantile(0.3).unwrap() - 0.2).abs() < 1e-12);
        // bisection oracle on F(x) = 0.75 + x^2/2 - 0.25 x
        let (mut lo, mut hi) = (0.5f64, 1.0f64);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if 0.75 + m * m / 2.0 - 0.25 * m < 0.9 {
                lo = m;
            } else {
                hi = m;
            }
        }
        let q = eg1.quantile(0.9).unwrap();
        assert!((q - lo).abs() < 1e-12);
        assert!((q - 0.852080).abs() < 1e-6);
        assert!(matches!(eg1.quantile(1.1), Err(Error::Domain(_))));
        assert!(matches!(eg1.quantile(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn quantile_inverts_cdf_and_is_monotone() {
        for d in [PiecewisePolyDensity::example_step_ramp(), PiecewisePolyDensity::example_parabola_dip()] {
            let mut prev = -1.0;
            for k in 0..=2000 {
                let u = k as f64 / 2000.0;
                let x = d.quantile(u).unwrap();
                assert!(x >= prev);
                prev = x;
                assert!((d.cdf(x).unwrap() - u).abs() <= 1e-12, "u {u} x {x}");
            }
        }
    }

    #[test]
    fn sampling_is_sorted_and_reproducible() {
        let d = PiecewisePolyDensity::example_step_ramp();
        assert!(d.sample(0, 1).is_empty());
        let a = d.sample(10_000, 99);
        assert_eq!(a, d.sample(10_000, 99));
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        let frac = a.iter().filter(|&&x| x <= 0.5).count() as f64 / 1e4;
        assert!((frac - 0.75).abs() <= 3.0 * (0.75f64 * 0.25 / 1e4).sqrt());
    }

    #[test]
    fn uniform_sample_passes_ks() {
        let u = PiecewisePolyDensity::uniform();
        let xs = u.sample(10_000, 3);
        let n = xs.len() as f64;
        let d = xs.iter().enumerate().map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n)).fold(0.0, f64::max);
        assert!(d <= 1.63 / n.sqrt(), "ks {d}");
    }

    #[test]
    fn validation_errors() {
        assert!(PiecewisePolyDensity::new(vec![]).is_err());
        assert!(PiecewisePolyDensity::new(vec![Segment::new(0.0, 1.0, vec![2.0])]).is_err());
        assert!(PiecewisePolyDensity::new(vec![Segment::new(0.1, 1.1, vec![1.0])]).is_err());
        assert!(PiecewisePolyDensity::new(vec![
            Segment::new(0.0, 1.0, vec![2.0, -2.0, 0.0]),
            Segment::new(1.0, 2.0, vec![-1.0])
        ])
        .is_err());
        assert!(PiecewisePolyDensity::new(vec![Segment::new(0.0, 0.5, vec![1.0]), Segment::new(0.6, 1.0, vec![1.25])])
            .is_err());
        assert!(PiecewisePolyDensity::new(vec![Segment::new(0.0, 1.0, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])])
            .is_err());
        // increasing ramp: valid but violates strict positivity
        let ramp = PiecewisePolyDensity::new(vec![Segment::new(0.0, 1.0, vec![0.0, 2.0])]).unwrap();
        assert!(!ramp.is_strictly_positive());
        assert!(PiecewisePolyDensity::example_parabola_dip().is_strictly_positive());
    }

    #[test]
    fn json_round_trip() {
        let d = PiecewisePolyDensity::example_parabola_dip();
        let back = PiecewisePolyDensity::from_json_str(&d.to_json()).unwrap();
        assert_eq!(d, back);
        let parsed = PiecewisePolyDensity::from_json_str(
            r#"{"segments":[{"lo":0,"hi":0.5,"coeffs":[1.5]},{"lo":0.5,"hi":1,"coeffs":[-0.25,1]}]}"#,
        )
        .unwrap();
        assert_eq!(parsed, PiecewisePolyDensity::example_step_ramp());
        assert!(PiecewisePolyDensity::from_json_str(r#"{"segments":[{"lo":0,"hi":1,"coeffs":[3]}]}"#).is_err());
    }

    #[test]
    fn functional_means() {
        let eg1 = PiecewisePolyDensity::example_step_ramp();
        // exact: 1.5 * 0.125 + int_{0.5}^1 x (x - 0.25) dx
        let exact = 1.5 * 0.125 + 0.875 / 3.0 - 0.25 * 0.375;
        let m = functional_mean(&eg1, &Preset::Identity).unwrap();
        assert!((m - exact).abs() < 1e-12);
        assert!((m - 0.385417).abs() < 1e-6);
        for d in [eg1, PiecewisePolyDensity::example_parabola_dip()] {
            assert!((functional_mean(&d, &Preset::Const(1.0)).unwrap() - 1.0).abs() < 1e-12);
            assert!((functional_mean(&d, &|_x: f64| 1.0).unwrap() - 1.0).abs() < 1e-10);
        }
        let bad = |x: f64| if x > 0.5 { f64::NAN } else { 1.0 };
        assert!(matches!(functional_mean(&PiecewisePolyDensity::uniform(), &bad), Err(Error::Numeric(_))));
    }

    #[test]
    fn polynomial_calculus() {
        let p = Polynomial::new(vec![3.0, -12.0, 12.0]);
        assert_eq!(p.eval(0.5), 0.0);
        assert!((p.primitive(0.4) - 4.0 * (-0.001 + 0.125)).abs() < 1e-14);
        assert_eq!(p.derivative(0.25), -6.0);
        assert!(!p.is_constant());
        assert!(Polynomial::new(vec![2.0, 0.0]).is_constant());
    }
}
