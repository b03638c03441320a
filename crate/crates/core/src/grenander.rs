//! The Grenander estimator: left derivative of the least concave majorant of
//! the empirical CDF.

use std::fmt::Write as _;

use crate::error::{domain, invalid, numeric, Result};
use crate::integrand::Integrand;
use crate::lcm::{gren, lcm_of_knots, ConcaveMajorant, KnotSequence, StepFunction};
use crate::quad;

const LINEAR_TOL: f64 = 1e-10;

/// Grenander MLE for a sample of positive reals.
#[derive(Debug, Clone, PartialEq)]
pub struct GrenanderFit {
    n: usize,
    sample: Vec<f64>,
    knots: KnotSequence,
    majorant: ConcaveMajorant,
    density: StepFunction,
}

impl GrenanderFit {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Sorted sample.
    pub fn sample(&self) -> &[f64] {
        &self.sample
    }

    /// Empirical CDF knots `(0, 0), (x_(1), k_1 / n), ...`, ties pooled.
    pub fn knots(&self) -> &KnotSequence {
        &self.knots
    }

    /// `F̂n`.
    pub fn majorant(&self) -> &ConcaveMajorant {
        &self.majorant
    }

    /// `f̂n` on `(0, X_(n)]`.
    pub fn density(&self) -> &StepFunction {
        &self.density
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.density.eval(x)
    }

    /// Empirical CDF `F_n(x)`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.sample.partition_point(|&v| v <= x) as f64 / self.n as f64
    }

    /// CSV of `(breakpoint, level)` pairs: each row is the right end of a step
    /// and the level on it.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("breakpoint,level\n");
        for (_, hi, level) in self.density.steps() {
            let _ = writeln!(out, "{hi},{level}");
        }
        out
    }
}

/// Fits the Grenander estimator. Sorts a copy of the input.
pub fn fit(samples: &[f64]) -> Result<GrenanderFit> {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    fit_sorted(sorted)
}

/// Same as [`fit`] for an already sorted sample.
pub fn fit_sorted(sample: Vec<f64>) -> Result<GrenanderFit> {
    if sample.is_empty() {
        return Err(invalid("cannot fit an empty sample"));
    }
    if let Some(&bad) = sample.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(domain(format!("samples must be finite and positive, got {bad}")));
    }
    if sample.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("sample is not sorted"));
    }
    let n = sample.len();
    let inv_n = 1.0 / n as f64;
    let mut xs = Vec::with_capacity(n + 1);
    let mut ys = Vec::with_capacity(n + 1);
    xs.push(0.0);
    ys.push(0.0);
    for (i, &x) in sample.iter().enumerate() {
        let y = if i + 1 == n { 1.0 } else { (i + 1) as f64 * inv_n };
        if *xs.last().unwrap() == x {
            *ys.last_mut().unwrap() = y;
        } else {
            xs.push(x);
            ys.push(y);
        }
    }
    let knots = KnotSequence::new(xs, ys)?;
    let majorant = lcm_of_knots(&knots);
    let density = gren(&majorant);
    Ok(GrenanderFit { n, sample, knots, majorant, density })
}

/// `μ̂n(g) = ∫ g f̂n`. Exact per step when `g` has an antiderivative,
/// adaptive quadrature otherwise.
pub fn linear_functional(fit: &GrenanderFit, g: &dyn Integrand) -> Result<f64> {
    let mut total = 0.0;
    for (a, b, q) in fit.density.steps() {
        match (g.antiderivative(a), g.antiderivative(b)) {
            (Some(ga), Some(gb)) => total += q * (gb - ga),
            _ => return linear_functional_quad(fit, g),
        }
    }
    if !total.is_finite() {
        return Err(numeric("linear functional is not finite"));
    }
    Ok(total)
}

/// [`linear_functional`] forced through quadrature.
pub fn linear_functional_quad(fit: &GrenanderFit, g: &dyn Integrand) -> Result<f64> {
    let tol = LINEAR_TOL / fit.density.levels().len() as f64;
    let mut total = 0.0;
    for (a, b, q) in fit.density.steps() {
        total += q * quad::integrate(|x| g.eval(x), a, b, tol)?;
    }
    Ok(total)
}

/// `T(f) = ∫ f log f` for a step density.
pub fn entropy(step: &StepFunction) -> Result<f64> {
    let mut total = 0.0;
    for (a, b, q) in step.steps() {
        if q > 0.0 {
            total += q * (b - a) * q.ln();
        } else {
            return Err(domain(format!("density level {q} on ({a}, {b}] inside the support")));
        }
    }
    Ok(total)
}

/// `sup |F̂n - F_n|`, taken over the knots and the left limits at the knots.
pub fn ecdf_gap(fit: &GrenanderFit) -> f64 {
    let xs = fit.knots.xs();
    let ys = fit.knots.ys();
    let mut gap = 0.0f64;
    for k in 1..xs.len() {
        let fhat = fit.majorant.value(xs[k]);
        gap = gap.max((fhat - ys[k]).abs()).max((fhat - ys[k - 1]).abs());
    }
    gap
}

/// One value per line; blank lines and `#` comments are skipped.
pub fn parse_samples(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 =
            line.parse().map_err(|_| invalid(format!("line {}: cannot parse {line:?} as a number", lineno + 1)))?;
        out.push(v);
    }
    Ok(out)
}
