//! Seeded Monte Carlo replication of `sqrt(n)(θ̂n - θ̂0)`, comparison against
//! the limit samplers, and tail-bound audits of the Grenander estimator on
//! flat blocks.
//!
//! Replicate `i` draws its sample from `SeedStream::new(seed).split(i)`; limit
//! draws come from a separate branch of the same master stream. Results are
//! collected by index, so reports do not depend on the worker count.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::density::{functional_mean, PiecewisePolyDensity};
use crate::error::{invalid, not_applicable, Result};
use crate::grenander::{self, fit_sorted, GrenanderFit};
use crate::limit::{LimitSampler, LimitTarget, DEFAULT_BRIDGE_GRID};
use crate::projection::{
    decompose_regions, kl_projection, RegionDecomposition, TouchKind, DEFAULT_GRID, DEFAULT_REGION_TOL,
};
use crate::rng::SeedStream;

/// Branch of the master stream reserved for limit draws.
const LIMIT_BRANCH: u64 = u64::MAX;

/// Hex SHA-256 of the density's canonical JSON.
pub fn density_hash(d: &PiecewisePolyDensity) -> String {
    Sha256::digest(d.to_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub density: PiecewisePolyDensity,
    /// Preset name or path the density was loaded from.
    pub label: String,
    pub target: LimitTarget,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub workers: usize,
    pub grid: usize,
    pub bridge_grid: usize,
    pub limit_draws: usize,
}

impl ExperimentConfig {
    pub fn new(density: PiecewisePolyDensity, label: impl Into<String>, target: LimitTarget) -> Self {
        Self {
            density,
            label: label.into(),
            target,
            n: 100_000,
            replicates: 1000,
            seed: 0,
            workers: 1,
            grid: DEFAULT_GRID,
            bridge_grid: DEFAULT_BRIDGE_GRID,
            limit_draws: 20_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.replicates == 0 {
            return Err(invalid("n and B must be at least 1"));
        }
        if self.workers == 0 {
            return Err(invalid("at least one worker is required"));
        }
        if self.limit_draws == 0 {
            return Err(invalid("at least one limit draw is required"));
        }
        Ok(())
    }

    /// Everything that determines the report. The worker count is excluded.
    pub fn effective(&self) -> EffectiveConfig {
        EffectiveConfig {
            density: self.label.clone(),
            density_hash: density_hash(&self.density),
            target: self.target,
            n: self.n,
            replicates: self.replicates,
            seed: self.seed,
            grid: self.grid,
            bridge_grid: self.bridge_grid,
            limit_draws: self.limit_draws,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| invalid(format!("cannot start {} workers: {e}", self.workers)))
    }

    pub fn decomposition(&self) -> Result<RegionDecomposition> {
        let proj = kl_projection(&self.density, self.grid)?;
        decompose_regions(&self.density, &proj, DEFAULT_REGION_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveConfig {
    pub density: String,
    pub density_hash: String,
    pub target: LimitTarget,
    pub n: usize,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub seed: u64,
    pub grid: usize,
    pub bridge_grid: usize,
    pub limit_draws: usize,
}

impl EffectiveConfig {
    /// One-line `key=value` rendering.
    pub fn line(&self) -> String {
        format!(
            "density={} density_sha256={} target=\"{}\" n={} B={} seed={} grid={} bridge_grid={} limit_draws={}",
            self.density,
            self.density_hash,
            self.target.label(),
            self.n,
            self.replicates,
            self.seed,
            self.grid,
            self.bridge_grid,
            self.limit_draws
        )
    }
}

/// `θ(f)` for the target, evaluated on a density.
fn target_value(target: LimitTarget, d: &PiecewisePolyDensity) -> Result<f64> {
    match target {
        LimitTarget::Pointwise { x0 } => Ok(d.pdf(x0)),
        LimitTarget::Linear { g } => functional_mean(d, &g),
        LimitTarget::Entropy => d.entropy(),
    }
}

/// `θ(f̂n)` for the target.
pub fn fit_value(target: LimitTarget, fit: &GrenanderFit) -> Result<f64> {
    match target {
        LimitTarget::Pointwise { x0 } => Ok(fit.eval(x0)),
        LimitTarget::Linear { g } => grenander::linear_functional(fit, &g),
        LimitTarget::Entropy => grenander::entropy(fit.density()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationReport {
    pub config: EffectiveConfig,
    /// `θ̂0`, the target at the projection.
    pub theta_hat0: f64,
    /// `θ0`, the target at the true density.
    pub theta0: f64,
    /// `sqrt(n)(θ̂0 - θ0)`.
    pub misspecification_offset: f64,
    /// Variance of the limit when it is Gaussian with a closed form.
    pub limit_variance: Option<f64>,
    pub mean: f64,
    pub variance: f64,
    pub ks: f64,
    pub probs: Vec<f64>,
    pub empirical_quantiles: Vec<f64>,
    pub limit_quantiles: Vec<f64>,
    /// `sqrt(n)(θ̂n - θ̂0)` by replicate index.
    #[serde(skip)]
    pub values: Vec<f64>,
    #[serde(skip)]
    pub limit_draws: Vec<f64>,
}

impl ReplicationReport {
    /// QQ table under a commented header holding the effective config.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.config.line());
        let _ = writeln!(out, "# mean={} variance={} ks={}", self.mean, self.variance, self.ks);
        out.push_str("prob,empirical_quantile,limit_quantile\n");
        for ((p, e), l) in self.probs.iter().zip(&self.empirical_quantiles).zip(&self.limit_quantiles) {
            let _ = writeln!(out, "{p},{e},{l}");
        }
        out
    }

    /// Replicate values, one per line, same header as [`Self::to_csv`].
    pub fn replicates_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.config.line());
        out.push_str("replicate,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{i},{v}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `k / 100` for `k = 1..=99`, or `[0.5]` for a single replicate.
pub fn probability_grid(replicates: usize) -> Vec<f64> {
    if replicates <= 1 {
        vec![0.5]
    } else {
        (1..100).map(|k| k as f64 / 100.0).collect()
    }
}

/// Linear interpolation between order statistics: position `p (m - 1)` in the
/// sorted sample, 0-based (the "type 7" convention).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (m - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= m {
        return sorted[m - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

fn sorted_copy(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    s
}

/// `(quantile_a(p), quantile_b(p))` per probability.
pub fn qq_pairs(a: &[f64], b: &[f64], probs: &[f64]) -> Result<Vec<(f64, f64)>> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("QQ pairs need two non-empty samples"));
    }
    let (a, b) = (sorted_copy(a), sorted_copy(b));
    Ok(probs.iter().map(|&p| (quantile_sorted(&a, p), quantile_sorted(&b, p))).collect())
}

/// `sup |ECDF_a - ECDF_b|` over the pooled sample.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("the KS statistic needs two non-empty samples"));
    }
    let (a, b) = (sorted_copy(a), sorted_copy(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

fn mean_variance(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 } else { 0.0 };
    (m, var)
}

/// `B` replicates of `sqrt(n)(θ̂n - θ̂0)` plus the matching limit draws.
pub fn run_finite_sample(config: &ExperimentConfig) -> Result<ReplicationReport> {
    config.validate()?;
    let decomp = config.decomposition()?;
    let sampler = LimitSampler::for_target(&decomp, config.target, config.bridge_grid)?;
    let theta_hat0 = target_value(config.target, decomp.projection().density())?;
    let theta0 = target_value(config.target, &config.density)?;
    let root_n = (config.n as f64).sqrt();

    let master = SeedStream::new(config.seed);
    let pool = config.pool()?;
    let (values, limit_draws) = pool.install(|| -> Result<(Vec<f64>, Vec<f64>)> {
        let values = (0..config.replicates as u64)
            .into_par_iter()
            .map(|i| {
                let sample = config.density.sample_stream(config.n, master.split(i));
                let fit = fit_sorted(sample)?;
                Ok(root_n * (fit_value(config.target, &fit)? - theta_hat0))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((values, limit_draws_with(&sampler, master, config.limit_draws)))
    })?;

    let (mean, variance) = mean_variance(&values);
    let probs = probability_grid(config.replicates);
    let pairs = qq_pairs(&values, &limit_draws, &probs)?;
    Ok(ReplicationReport {
        config: config.effective(),
        theta_hat0,
        theta0,
        misspecification_offset: root_n * (theta_hat0 - theta0),
        limit_variance: sampler.gaussian_variance(),
        mean,
        variance,
        ks: ks_two_sample(&values, &limit_draws)?,
        probs,
        empirical_quantiles: pairs.iter().map(|p| p.0).collect(),
        limit_quantiles: pairs.iter().map(|p| p.1).collect(),
        values,
        limit_draws,
    })
}

fn limit_draws_with(sampler: &LimitSampler, master: SeedStream, r: usize) -> Vec<f64> {
    let branch = master.split(LIMIT_BRANCH);
    (0..r as u64).into_par_iter().map(|i| sampler.draw(branch.split(i))).collect()
}

/// `r` draws from the limit law matching the config's target.
pub fn run_limit(config: &ExperimentConfig, r: usize) -> Result<Vec<f64>> {
    config.validate()?;
    let decomp = config.decomposition()?;
    let sampler = LimitSampler::for_target(&decomp, config.target, config.bridge_grid)?;
    let pool = config.pool()?;
    Ok(pool.install(|| limit_draws_with(&sampler, SeedStream::new(config.seed), r)))
}

/// Which exponential bound applies at the audited point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// `f0` itself is non-increasing and flat around `x`.
    WellSpecified,
    /// Flat block of the projection, with the `inf f0 / q̂` correction.
    Misspecified,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub t: f64,
    pub lower_freq: f64,
    pub lower_bound: f64,
    pub lower_violation: bool,
    pub upper_freq: f64,
    pub upper_bound: f64,
    pub upper_violation: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailAudit {
    pub kind: BoundKind,
    pub x: f64,
    pub a: f64,
    pub b: f64,
    /// Level of the block, the centring value for `f̂n(x)`.
    pub level: f64,
    pub n: usize,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub seed: u64,
    pub k0: f64,
    pub t0: f64,
    pub c0: f64,
    pub c_hat: f64,
    pub rows: Vec<TailRow>,
}

impl TailAudit {
    pub fn any_violation(&self) -> bool {
        self.rows.iter().any(|r| r.lower_violation || r.upper_violation)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# kind={:?} x={} block=({}, {}] level={} n={} B={} seed={} k0={} t0={} c0={} c_hat={}",
            self.kind,
            self.x,
            self.a,
            self.b,
            self.level,
            self.n,
            self.replicates,
            self.seed,
            self.k0,
            self.t0,
            self.c0,
            self.c_hat
        );
        out.push_str("t,lower_freq,lower_bound,lower_violation,upper_freq,upper_bound,upper_violation\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.t, r.lower_freq, r.lower_bound, r.lower_violation, r.upper_freq, r.upper_bound, r.upper_violation
            );
        }
        out
    }
}

fn exceeds(freq: f64, bound: f64, replicates: usize) -> bool {
    let b = bound.clamp(0.0, 1.0);
    freq > b + 3.0 * (b * (1.0 - b) / replicates as f64).sqrt()
}

/// Monte Carlo tail frequencies of `f̂n(x)` around the flat level, against
/// the exponential bounds with `k0 = 3 sqrt(n)` and `t0 = min(t_grid)`.
pub fn tail_bound_audit(
    density: &PiecewisePolyDensity,
    x: f64,
    t_grid: &[f64],
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<TailAudit> {
    if n == 0 || replicates == 0 {
        return Err(invalid("n and B must be at least 1"));
    }
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(invalid("the t grid must hold positive finite values"));
    }
    let proj = kl_projection(density, DEFAULT_GRID)?;
    let decomp = decompose_regions(density, &proj, DEFAULT_REGION_TOL)?;
    let blk = decomp
        .blocks
        .iter()
        .find(|b| b.contains_interior(x))
        .ok_or_else(|| not_applicable(format!("x = {x} is not interior to a flat block")))?;
    let (a, b, q) = (blk.a, blk.b, blk.level);
    let kind = if decomp.misspecified.is_empty() && blk.touch_kind == TouchKind::Full {
        BoundKind::WellSpecified
    } else {
        BoundKind::Misspecified
    };
    let root_n = (n as f64).sqrt();
    let k0 = 3.0 * root_n;
    let t0 = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let c0 = t0 / (q + t0 / k0);
    let c_hat = match kind {
        BoundKind::WellSpecified => 1.0,
        BoundKind::Misspecified => {
            let m = 1024;
            // f0(a+) stands in for k = 0: the pdf is left-continuous at a.
            let at = |k: usize| if k == 0 { a + 1e-12 * (b - a) } else { a + (b - a) * k as f64 / m as f64 };
            let inf_f0 = (0..=m).map(|k| density.pdf(at(k))).fold(f64::INFINITY, f64::min);
            if inf_f0.is_nan() || inf_f0 <= 0.0 {
                return Err(not_applicable(format!("f0 is not bounded away from zero on ({a}, {b}]")));
            }
            inf_f0 / q
        }
    };

    let master = SeedStream::new(seed);
    let estimates = (0..replicates as u64)
        .map(|i| Ok(fit_sorted(density.sample_stream(n, master.split(i)))?.eval(x)))
        .collect::<Result<Vec<f64>>>()?;

    let rows = t_grid
        .iter()
        .map(|&t| {
            let shift = t / root_n;
            let lower_freq = estimates.iter().filter(|&&v| v < q - shift).count() as f64 / replicates as f64;
            let upper_freq = estimates.iter().filter(|&&v| v > q + shift).count() as f64 / replicates as f64;
            let lower_bound = if t > root_n * q { 0.0 } else { (-c_hat * t * t * (b - x) / (2.0 * q)).exp() };
            let upper_bound = (-c_hat * c0 * t * (x - a) / 2.0).exp();
            TailRow {
                t,
                lower_freq,
                lower_bound,
                lower_violation: exceeds(lower_freq, lower_bound, replicates),
                upper_freq,
                upper_bound,
                upper_violation: exceeds(upper_freq, upper_bound, replicates),
            }
        })
        .collect();
    Ok(TailAudit { kind, x, a, b, level: q, n, replicates, seed, k0, t0, c0, c_hat, rows })
}
