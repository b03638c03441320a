//! Limit laws of `sqrt(n)`-scaled Grenander functionals: Brownian bridges, the
//! `gren` of a (modified) bridge, closed-form variances and samplers.
//!
//! Draw `i` of a sampler is a pure function of `SeedStream::split(i)` of the
//! master seed, so replicates can be computed in any order.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::density::PiecewisePolyDensity;
use crate::error::{invalid, not_applicable, numeric, Result};
use crate::integrand::{Integrand, Preset};
use crate::lcm::{gren, lcm_of_knots, restricted_lcm, KnotSequence, StepFunction};
use crate::projection::{block_average, FlatBlock, RegionDecomposition, TouchKind};
use crate::quad;
use crate::rng::SeedStream;

pub const DEFAULT_BRIDGE_GRID: usize = 4097;

const VAR_TOL: f64 = 1e-12;
const MOMENT_EXPONENT: f64 = 2.5;

/// A Brownian bridge sampled at sorted times in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `U(t) = W(t) - t W(1)` at the given sorted times. Values at `t = 0` and
/// `t = 1` are exactly zero.
pub fn bridge_at_times<R: Rng + ?Sized>(times: &[f64], rng: &mut R) -> Vec<f64> {
    let mut w = 0.0;
    let mut prev = 0.0;
    let mut ws = Vec::with_capacity(times.len());
    for &t in times {
        let dt = t - prev;
        if dt > 0.0 {
            w += dt.sqrt() * normal(rng);
            prev = t;
        }
        ws.push(w);
    }
    let rest = 1.0 - prev;
    let w1 = if rest > 0.0 { w + rest.sqrt() * normal(rng) } else { w };
    times.iter().zip(ws).map(|(&t, w)| if t <= 0.0 || t >= 1.0 { 0.0 } else { w - t * w1 }).collect()
}

fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let last = points - 1;
    (0..points).map(|k| if k == last { hi } else { lo + (hi - lo) * k as f64 / last as f64 }).collect()
}

/// Bridge on a uniform grid of `grid` points.
pub fn sample_bridge(grid: usize, seed: u64) -> Result<BridgePath> {
    sample_bridge_stream(grid, SeedStream::new(seed))
}

pub fn sample_bridge_stream(grid: usize, stream: SeedStream) -> Result<BridgePath> {
    if grid < 3 {
        return Err(invalid(format!("bridge grid needs at least 3 points, got {grid}")));
    }
    let times = uniform_grid(0.0, 1.0, grid);
    let values = bridge_at_times(&times, &mut stream.rng());
    Ok(BridgePath { times, values })
}

/// `gren` of the bridge, optionally restricted to the `active` node indices.
pub fn gren_of_bridge(path: &BridgePath, active: Option<&[usize]>) -> Result<StepFunction> {
    let knots = KnotSequence::new(path.times.clone(), path.values.clone())?;
    let cm = match active {
        Some(idx) => restricted_lcm(&knots, idx)?,
        None => lcm_of_knots(&knots),
    };
    Ok(gren(&cm))
}

/// Nodes for a block: a uniform grid in local coordinates `u in [0, 1]` with
/// every touch-interval endpoint and isolated touch point added. Returns the
/// nodes and the indices of nodes inside the touch set.
fn block_nodes(block: &FlatBlock, points: usize) -> (Vec<f64>, Vec<usize>) {
    let w = block.width();
    let to_u = |x: f64| ((x - block.a) / w).clamp(0.0, 1.0);
    let mut us = uniform_grid(0.0, 1.0, points);
    for &(lo, hi) in &block.touch {
        us.push(to_u(lo));
        us.push(to_u(hi));
    }
    us.sort_by(f64::total_cmp);
    us.dedup();
    let active = us
        .iter()
        .enumerate()
        .filter(|&(k, &u)| k == 0 || k == us.len() - 1 || block.in_touch_set(block.a + w * u))
        .map(|(k, _)| k)
        .collect();
    (us, active)
}

fn interior_block(decomp: &RegionDecomposition, x0: f64) -> Result<usize> {
    match decomp.blocks.iter().position(|b| b.contains_interior(x0)) {
        Some(j) => Ok(j),
        None if decomp.in_curved(x0) => Err(not_applicable(format!(
            "x0 = {x0} lies where the projection is strictly curved; only flat-block limits are available"
        ))),
        None => Err(not_applicable(format!("x0 = {x0} is not interior to a flat block of the projection"))),
    }
}

/// `q (1/(b - a) - q)` for `x0` in a flat block whose touch set is `{a, b}`.
pub fn sigma2_pointwise(decomp: &RegionDecomposition, x0: f64) -> Result<f64> {
    let blk = &decomp.blocks[interior_block(decomp, x0)?];
    if blk.touch_kind != TouchKind::EndpointsOnly {
        return Err(not_applicable(format!(
            "the touch set of block ({}, {}] has interior points; the limit is not Gaussian, use the bridge sampler",
            blk.a, blk.b
        )));
    }
    Ok(endpoint_variance(blk))
}

fn endpoint_variance(blk: &FlatBlock) -> f64 {
    (blk.level * (1.0 / blk.width() - blk.level)).max(0.0)
}

fn require_positive(d: &PiecewisePolyDensity) -> Result<()> {
    if d.is_strictly_positive() {
        Ok(())
    } else {
        Err(not_applicable("the density must be bounded away from zero on its support"))
    }
}

/// `∫ h f` over `[lo, hi]`, split at the segment boundaries of `d`.
fn integrate_against(d: &PiecewisePolyDensity, lo: f64, hi: f64, h: impl Fn(f64) -> f64) -> Result<f64> {
    let mut total = 0.0;
    for s in d.segments().iter().filter(|s| s.hi > lo && s.lo < hi) {
        let (a, b) = (s.lo.max(lo), s.hi.min(hi));
        if b > a {
            total += quad::integrate(|x| h(x) * s.coeffs.eval(x), a, b, VAR_TOL)?;
        }
    }
    Ok(total)
}

fn check_integrand(decomp: &RegionDecomposition, g: &dyn Integrand) -> Result<()> {
    for blk in &decomp.blocks {
        let m = quad::integrate(|x| g.eval(x).abs().powf(MOMENT_EXPONENT), blk.a, blk.b, 1e-8)
            .map_err(|_| not_applicable(format!("g is not in L^{MOMENT_EXPONENT} on ({}, {}]", blk.a, blk.b)))?;
        if !m.is_finite() {
            return Err(not_applicable(format!("g is not in L^{MOMENT_EXPONENT} on ({}, {}]", blk.a, blk.b)));
        }
    }
    for &(lo, hi) in &decomp.curved {
        let xs = uniform_grid(lo, hi, 4097);
        let tv: f64 = xs.windows(2).map(|w| (g.eval(w[1]) - g.eval(w[0])).abs()).sum();
        if !tv.is_finite() {
            return Err(not_applicable(format!("g has unbounded variation on [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// `Var_F0(ḡ(X))`.
pub fn sigma2_linear(decomp: &RegionDecomposition, g: &dyn Integrand) -> Result<f64> {
    let d = decomp.density();
    require_positive(d)?;
    check_integrand(decomp, g)?;
    let (mut m1, mut m2) = (0.0, 0.0);
    for blk in &decomp.blocks {
        let mean = block_average(g, blk.a, blk.b)?;
        m1 += mean * blk.mass;
        m2 += mean * mean * blk.mass;
    }
    for &(lo, hi) in &decomp.curved {
        m1 += integrate_against(d, lo, hi, |x| g.eval(x))?;
        m2 += integrate_against(d, lo, hi, |x| g.eval(x).powi(2))?;
    }
    finite_variance(m1, m2)
}

/// `Var_F̂0(ḡ(X))`, integrating `ḡ` against the projected density directly.
pub fn sigma2_linear_projected(decomp: &RegionDecomposition, g: &dyn Integrand) -> Result<f64> {
    let gbar = crate::projection::gbar(decomp, g)?;
    let fhat = decomp.projection().density();
    let m1 = integrate_against(fhat, 0.0, fhat.x_max(), |x| gbar.eval(x))?;
    let m2 = integrate_against(fhat, 0.0, fhat.x_max(), |x| gbar.eval(x).powi(2))?;
    finite_variance(m1, m2)
}

fn finite_variance(m1: f64, m2: f64) -> Result<f64> {
    let v = m2 - m1 * m1;
    if !v.is_finite() {
        return Err(numeric("variance quadrature is not finite"));
    }
    Ok(v.max(0.0))
}

fn log_moments(weight: &PiecewisePolyDensity, fhat: &PiecewisePolyDensity) -> Result<(f64, f64)> {
    let log_fhat = |x: f64| {
        let v = fhat.pdf(x);
        if v > 0.0 {
            v.ln()
        } else {
            0.0
        }
    };
    let m1 = integrate_against(weight, 0.0, weight.x_max(), log_fhat)?;
    let m2 = integrate_against(weight, 0.0, weight.x_max(), |x| log_fhat(x).powi(2))?;
    Ok((m1, m2))
}

fn check_entropy_hypotheses(decomp: &RegionDecomposition) -> Result<()> {
    let d = decomp.density();
    let fhat = decomp.projection().density();
    let mut ratio_max = 0.0f64;
    for s in fhat.segments() {
        for k in 0..=256 {
            let x = s.lo + (s.hi - s.lo) * k as f64 / 256.0;
            let q = s.coeffs.eval(x);
            let f = d.pdf(x.max(f64::MIN_POSITIVE));
            if !(q.is_finite() && f.is_finite()) {
                return Err(not_applicable("the projected density is unbounded"));
            }
            if q <= 0.0 && f > 0.0 {
                return Err(not_applicable(format!("f0 / f̂0 is unbounded near x = {x}")));
            }
            if q > 0.0 {
                ratio_max = ratio_max.max(f / q);
            }
        }
    }
    if !ratio_max.is_finite() {
        return Err(not_applicable("f0 / f̂0 is unbounded"));
    }
    Ok(())
}

/// `Var_F0(log f̂0(X))`.
pub fn sigma2_entropy(decomp: &RegionDecomposition) -> Result<f64> {
    check_entropy_hypotheses(decomp)?;
    let (m1, m2) = log_moments(decomp.density(), decomp.projection().density())?;
    finite_variance(m1, m2)
}

/// `Var_F̂0(log f̂0(X))`.
pub fn sigma2_entropy_projected(decomp: &RegionDecomposition) -> Result<f64> {
    check_entropy_hypotheses(decomp)?;
    let fhat = decomp.projection().density();
    let (m1, m2) = log_moments(fhat, fhat)?;
    finite_variance(m1, m2)
}

/// Which limit law to sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LimitTarget {
    Pointwise { x0: f64 },
    Linear { g: Preset },
    Entropy,
}

impl LimitTarget {
    pub fn label(&self) -> String {
        match self {
            LimitTarget::Pointwise { x0 } => format!("pointwise x0={x0}"),
            LimitTarget::Linear { g } => format!("linear g={}", g.label()),
            LimitTarget::Entropy => "entropy".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct PointwiseBlock {
    width: f64,
    mass: f64,
    u0: f64,
    /// Local nodes in `[0, 1]` and the touch-set subset.
    us: Vec<f64>,
    active: Vec<usize>,
    /// `F0` at the nodes, for the time-changed bridge.
    times: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LinearBlock {
    sqrt_mass: f64,
    us: Vec<f64>,
    active: Vec<usize>,
    /// Cumulative trapezoid integral of `g_j` over the nodes.
    g_cum: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Sampler {
    Gaussian { sd: f64 },
    PointwiseBridge(PointwiseBlock),
    PointwiseDecomposed(PointwiseBlock),
    Linear { sd: f64, blocks: Vec<LinearBlock> },
}

/// A prepared limit sampler; [`LimitSampler::draw`] is pure in its stream.
#[derive(Debug, Clone)]
pub struct LimitSampler {
    inner: Sampler,
}

fn pointwise_block(decomp: &RegionDecomposition, x0: f64, grid: usize) -> Result<PointwiseBlock> {
    let blk = &decomp.blocks[interior_block(decomp, x0)?];
    let (us, active) = block_nodes(blk, grid);
    let d = decomp.density();
    let times = us.iter().map(|&u| d.cdf_clamped(blk.a + blk.width() * u)).collect();
    Ok(PointwiseBlock { width: blk.width(), mass: blk.mass, u0: (x0 - blk.a) / blk.width(), us, active, times })
}

impl LimitSampler {
    /// Bridge-based pointwise sampler: `gren` over `[a, b]` of the
    /// time-changed bridge, restricted to the touch set. Blocks touching only
    /// at their endpoints use the exact Gaussian.
    pub fn pointwise(decomp: &RegionDecomposition, x0: f64, grid: usize) -> Result<Self> {
        check_grid(grid)?;
        let j = interior_block(decomp, x0)?;
        let blk = &decomp.blocks[j];
        if blk.touch_kind == TouchKind::EndpointsOnly {
            return Ok(Self { inner: Sampler::Gaussian { sd: endpoint_variance(blk).sqrt() } });
        }
        Ok(Self { inner: Sampler::PointwiseBridge(pointwise_block(decomp, x0, grid)?) })
    }

    /// `(b - a)^-1 (Z + sqrt(p) gren(U^mod)(u0))` with `Z ~ N(0, p (1 - p))`
    /// independent of the standard bridge `U`.
    pub fn pointwise_decomposed(decomp: &RegionDecomposition, x0: f64, grid: usize) -> Result<Self> {
        check_grid(grid)?;
        Ok(Self { inner: Sampler::PointwiseDecomposed(pointwise_block(decomp, x0, grid)?) })
    }

    pub fn linear(decomp: &RegionDecomposition, g: &dyn Integrand, grid: usize) -> Result<Self> {
        check_grid(grid)?;
        let sd = sigma2_linear(decomp, g)?.sqrt();
        let mut blocks = Vec::new();
        for blk in decomp.blocks.iter().filter(|b| b.touch_kind != TouchKind::EndpointsOnly) {
            let (us, active) = block_nodes(blk, grid);
            let gv: Vec<f64> = us.iter().map(|&u| g.eval(blk.a + blk.width() * u)).collect();
            let mut g_cum = vec![0.0; us.len()];
            for k in 1..us.len() {
                g_cum[k] = g_cum[k - 1] + 0.5 * (gv[k] + gv[k - 1]) * (us[k] - us[k - 1]);
            }
            if !g_cum.last().unwrap().is_finite() {
                return Err(numeric(format!("g is not finite on ({}, {}]", blk.a, blk.b)));
            }
            blocks.push(LinearBlock { sqrt_mass: blk.mass.sqrt(), us, active, g_cum });
        }
        Ok(Self { inner: Sampler::Linear { sd, blocks } })
    }

    pub fn entropy(decomp: &RegionDecomposition) -> Result<Self> {
        Ok(Self { inner: Sampler::Gaussian { sd: sigma2_entropy(decomp)?.sqrt() } })
    }

    pub fn for_target(decomp: &RegionDecomposition, target: LimitTarget, grid: usize) -> Result<Self> {
        match target {
            LimitTarget::Pointwise { x0 } => Self::pointwise(decomp, x0, grid),
            LimitTarget::Linear { g } => Self::linear(decomp, &g, grid),
            LimitTarget::Entropy => Self::entropy(decomp),
        }
    }

    /// Variance of the law when it is Gaussian.
    pub fn gaussian_variance(&self) -> Option<f64> {
        match &self.inner {
            Sampler::Gaussian { sd } => Some(sd * sd),
            Sampler::Linear { sd, blocks } if blocks.is_empty() => Some(sd * sd),
            _ => None,
        }
    }

    pub fn draw(&self, stream: SeedStream) -> f64 {
        match &self.inner {
            Sampler::Gaussian { sd } => sd * normal(&mut stream.rng()),
            Sampler::PointwiseBridge(pb) => {
                let vals = bridge_at_times(&pb.times, &mut stream.rng());
                let xs: Vec<f64> = pb.us.iter().map(|u| u * pb.width).collect();
                restricted_slope(xs, vals, &pb.active, pb.u0 * pb.width)
            }
            Sampler::PointwiseDecomposed(pb) => {
                let z = (pb.mass * (1.0 - pb.mass)).max(0.0).sqrt() * normal(&mut stream.split(0).rng());
                let vals = bridge_at_times(&pb.us, &mut stream.split(1).rng());
                let slope = restricted_slope(pb.us.clone(), vals, &pb.active, pb.u0);
                (z + pb.mass.sqrt() * slope) / pb.width
            }
            Sampler::Linear { sd, blocks } => {
                let mut total = sd * normal(&mut stream.split(0).rng());
                for (j, blk) in blocks.iter().enumerate() {
                    let vals = bridge_at_times(&blk.us, &mut stream.split(j as u64 + 1).rng());
                    let knots = KnotSequence::new(blk.us.clone(), vals).expect("bridge nodes are increasing");
                    let cm = restricted_lcm(&knots, &blk.active).expect("active set holds both ends");
                    let idx = cm.retained();
                    let integral: f64 = cm
                        .slopes()
                        .iter()
                        .zip(idx.windows(2))
                        .map(|(s, w)| s * (blk.g_cum[w[1]] - blk.g_cum[w[0]]))
                        .sum();
                    total += blk.sqrt_mass * integral;
                }
                total
            }
        }
    }

    /// `r` draws from the streams `split(0..r)` of `seed`.
    pub fn draws(&self, seed: u64, r: usize) -> Vec<f64> {
        let master = SeedStream::new(seed);
        (0..r as u64).map(|i| self.draw(master.split(i))).collect()
    }
}

fn check_grid(grid: usize) -> Result<()> {
    if grid < 3 {
        return Err(invalid(format!("bridge grid needs at least 3 points, got {grid}")));
    }
    Ok(())
}

fn restricted_slope(xs: Vec<f64>, vals: Vec<f64>, active: &[usize], at: f64) -> f64 {
    let knots = KnotSequence::new(xs, vals).expect("bridge nodes are increasing");
    let cm = restricted_lcm(&knots, active).expect("active set holds both ends");
    gren(&cm).eval(at)
}

pub fn sample_pointwise_limit(decomp: &RegionDecomposition, x0: f64, grid: usize, seed: u64) -> Result<f64> {
    Ok(LimitSampler::pointwise(decomp, x0, grid)?.draw(SeedStream::new(seed)))
}

pub fn sample_pointwise_limit_decomposed(decomp: &RegionDecomposition, x0: f64, grid: usize, seed: u64) -> Result<f64> {
    Ok(LimitSampler::pointwise_decomposed(decomp, x0, grid)?.draw(SeedStream::new(seed)))
}

pub fn sample_linear_limit(decomp: &RegionDecomposition, g: &dyn Integrand, grid: usize, seed: u64) -> Result<f64> {
    Ok(LimitSampler::linear(decomp, g, grid)?.draw(SeedStream::new(seed)))
}

pub fn sample_entropy_limit(decomp: &RegionDecomposition, seed: u64) -> Result<f64> {
    Ok(LimitSampler::entropy(decomp)?.draw(SeedStream::new(seed)))
}

/// Inputs of a limit-law run.
#[derive(Debug, Clone)]
pub struct LimitSpec {
    pub decomposition: RegionDecomposition,
    pub target: LimitTarget,
    pub bridge_grid: usize,
    pub draws: usize,
}

impl LimitSpec {
    pub fn new(decomposition: RegionDecomposition, target: LimitTarget) -> Self {
        Self { decomposition, target, bridge_grid: DEFAULT_BRIDGE_GRID, draws: 20_000 }
    }

    pub fn sampler(&self) -> Result<LimitSampler> {
        LimitSampler::for_target(&self.decomposition, self.target, self.bridge_grid)
    }

    pub fn sample(&self, seed: u64) -> Result<Vec<f64>> {
        Ok(self.sampler()?.draws(seed, self.draws))
    }

    /// One draw per line under a commented header naming the target and its
    /// parameters.
    pub fn to_csv(&self, seed: u64, draws: &[f64]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# limit law: {}", self.target.label());
        let _ = writeln!(out, "# bridge_grid={} draws={} seed={}", self.bridge_grid, draws.len(), seed);
        out.push_str("draw\n");
        for v in draws {
            let _ = writeln!(out, "{v}");
        }
        out
    }
}
