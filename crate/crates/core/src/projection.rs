//! Kullback-Leibler projection of a density onto decreasing densities and the
//! induced region decomposition.
//!
//! The projected CDF is the least concave majorant of `F0`. We sample `F0` on
//! a uniform grid, take the exact knot majorant, group hull segments into flat
//! runs (equal slopes) and curved runs (`F0` itself is concave there), then
//! move every flat-run boundary onto the continuous tangency or kink point by
//! bisection. Flat runs become exact chords of `F0`; curved runs carry `f0`.

use serde::Serialize;

use crate::density::{PiecewisePolyDensity, Segment};
use crate::error::{invalid, Result};
use crate::integrand::Integrand;
use crate::lcm::{lcm_of_knots, KnotSequence};
use crate::quad;

pub const DEFAULT_GRID: usize = (1 << 14) + 1;
pub const MIN_GRID: usize = (1 << 10) + 1;
/// Default tolerance for `F̂0 - F0 <= tol` membership in the touch set.
pub const DEFAULT_REGION_TOL: f64 = 2e-9;

const FLAT_SLOPE_TOL: f64 = 1e-9;
const MAX_FLAT_BLOCKS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PieceKind {
    /// `f̂0` is constant at `level`; `F̂0` is a chord of `F0`.
    Flat { level: f64 },
    /// `f̂0 = f0` and `F̂0 = F0`.
    Curved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionPiece {
    pub lo: f64,
    pub hi: f64,
    #[serde(flatten)]
    pub kind: PieceKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlProjection {
    source: PiecewisePolyDensity,
    projected: PiecewisePolyDensity,
    pieces: Vec<ProjectionPiece>,
    grid: usize,
}

impl KlProjection {
    pub fn source(&self) -> &PiecewisePolyDensity {
        &self.source
    }

    /// `f̂0` as a piecewise-polynomial density.
    pub fn density(&self) -> &PiecewisePolyDensity {
        &self.projected
    }

    pub fn pieces(&self) -> &[ProjectionPiece] {
        &self.pieces
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.projected.pdf(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.projected.cdf_clamped(x)
    }

    /// Largest piece containing `x` in `(lo, hi]` (the first piece also owns 0).
    pub fn piece_at(&self, x: f64) -> Option<&ProjectionPiece> {
        self.pieces.iter().find(|p| (p.lo < x && x <= p.hi) || (x == 0.0 && p.lo == 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RunKind {
    Flat,
    Curved,
}

/// Solves `f0(x) = slope` inside `[lo, hi]` when `f0 - slope` changes sign from
/// non-negative to negative there; otherwise returns `None`.
fn crossing(d: &PiecewisePolyDensity, slope: f64, lo: f64, hi: f64) -> Option<f64> {
    let tol = 1e-13 * slope.abs().max(1.0);
    let above = |x: f64| d.pdf(x) >= slope - tol;
    let (mut lo, mut hi) = (lo, hi);
    if !(above(lo) && !above(hi)) {
        return None;
    }
    for _ in 0..200 {
        if hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
        let m = 0.5 * (lo + hi);
        if above(m) {
            lo = m;
        } else {
            hi = m;
        }
    }
    Some(lo)
}

/// The common level when `d` is one constant across `(lo, hi)`.
fn constant_on(d: &PiecewisePolyDensity, lo: f64, hi: f64) -> Option<f64> {
    let mut level = None;
    for s in d.segments().iter().filter(|s| s.hi.min(hi) - s.lo.max(lo) > 1e-12) {
        if !s.coeffs.is_constant() {
            return None;
        }
        let c = s.coeffs.eval(lo.max(s.lo));
        match level {
            None => level = Some(c),
            Some(l) if (l - c).abs() <= FLAT_SLOPE_TOL * c.abs().max(1.0) => {}
            Some(_) => return None,
        }
    }
    level
}

fn chord_slope(d: &PiecewisePolyDensity, a: f64, b: f64) -> f64 {
    (d.cdf_clamped(b) - d.cdf_clamped(a)) / (b - a)
}

/// KL projection `f̂0 = gren(F0)` on a uniform grid of `grid` points.
pub fn kl_projection(d: &PiecewisePolyDensity, grid: usize) -> Result<KlProjection> {
    if grid < MIN_GRID {
        return Err(invalid(format!("projection grid must have at least {MIN_GRID} points, got {grid}")));
    }
    let x_max = d.x_max();
    let h = x_max / (grid - 1) as f64;
    let xs: Vec<f64> = (0..grid).map(|i| if i == grid - 1 { x_max } else { i as f64 * h }).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| d.cdf_clamped(x)).collect();
    let cm = lcm_of_knots(&KnotSequence::new(xs, fs)?);
    let verts = cm.retained();

    // Group hull segments into runs of (near) equal slope.
    let mut bounds: Vec<f64> = vec![cm.xs()[0]];
    let mut kinds: Vec<RunKind> = Vec::new();
    let mut k = 0;
    while k < cm.slopes().len() {
        let anchor = cm.slopes()[k];
        let mut end = k + 1;
        while end < cm.slopes().len() && (cm.slopes()[end] - anchor).abs() <= FLAT_SLOPE_TOL * anchor.abs().max(1.0) {
            end += 1;
        }
        let steps = verts[end] - verts[k];
        let kind = if steps >= 2 { RunKind::Flat } else { RunKind::Curved };
        if kind == RunKind::Curved && kinds.last() == Some(&RunKind::Curved) {
            *bounds.last_mut().unwrap() = cm.xs()[end];
        } else {
            kinds.push(kind);
            bounds.push(cm.xs()[end]);
        }
        k = end;
    }

    // Move interior run boundaries onto the continuous touch points.
    let nb = bounds.len();
    for _sweep in 0..100 {
        let mut moved = 0.0f64;
        for i in 1..nb - 1 {
            let (left, right) = (kinds[i - 1], kinds[i]);
            let hi = (bounds[i] + 2.0 * h).min(0.5 * (bounds[i] + bounds[i + 1]));
            let moved_to = if right == RunKind::Flat {
                // A flat block starts where f0 drops below the chord to its
                // right end. Past a downward jump the whole curved run before
                // it may be spurious, so search all of it.
                let b = bounds[i + 1];
                let lo = if left == RunKind::Curved {
                    bounds[i - 1]
                } else {
                    (bounds[i] - 2.0 * h).max(0.5 * (bounds[i - 1] + bounds[i]))
                };
                let above = |x: f64| {
                    let s = chord_slope(d, x, b);
                    d.pdf(x) >= s - 1e-13 * s.abs().max(1.0)
                };
                (above(lo) && !above(hi)).then(|| bisect_edge(above, lo, hi))
            } else if left == RunKind::Flat {
                // Mirror image: a flat block ends where f0 drops below the
                // chord from its left end, possibly at a jump past the
                // whole curved run that follows.
                let a = bounds[i - 1];
                let lo = (bounds[i] - 2.0 * h).max(0.5 * (a + bounds[i]));
                let far = match bounds.get(i + 2) {
                    Some(&next) => (bounds[i + 1] + 2.0 * h).min(0.5 * (bounds[i + 1] + next)),
                    None => bounds[i + 1],
                };
                let under = |x: f64| {
                    let s = chord_slope(d, a, x);
                    d.pdf(x) >= s - 1e-13 * s.abs().max(1.0)
                };
                if under(lo) && !under(far) {
                    Some(bisect_edge(under, lo, far))
                } else {
                    crossing(d, chord_slope(d, a, bounds[i]), lo, hi)
                }
            } else {
                None
            };
            if let Some(x) = moved_to {
                moved = moved.max((x - bounds[i]).abs());
                bounds[i] = x;
            }
        }
        if moved <= 1e-13 {
            break;
        }
    }

    let mut pieces: Vec<ProjectionPiece> = Vec::new();
    for (i, kind) in kinds.iter().enumerate() {
        let (lo, hi) = (bounds[i], bounds[i + 1]);
        if hi - lo <= 1e-12 {
            if let Some(last) = pieces.last_mut() {
                last.hi = hi;
            }
            continue;
        }
        let kind = match kind {
            RunKind::Flat => PieceKind::Flat { level: chord_slope(d, lo, hi) },
            RunKind::Curved => constant_on(d, lo, hi).map_or(PieceKind::Curved, |level| PieceKind::Flat { level }),
        };
        match (pieces.last_mut(), kind) {
            (Some(last), PieceKind::Flat { level }) if matches!(last.kind, PieceKind::Flat { level: prev } if (prev - level).abs() <= FLAT_SLOPE_TOL * prev.abs().max(1.0)) =>
            {
                last.hi = hi;
                last.kind = PieceKind::Flat { level: chord_slope(d, last.lo, hi) };
            }
            _ => pieces.push(ProjectionPiece { lo, hi, kind }),
        }
    }
    if let Some(first) = pieces.first_mut() {
        first.lo = 0.0;
    }
    let flat_count = pieces.iter().filter(|p| matches!(p.kind, PieceKind::Flat { .. })).count();
    if flat_count > MAX_FLAT_BLOCKS {
        return Err(invalid(format!("projection has {flat_count} flat blocks; finitely many are required")));
    }

    let mut segments = Vec::new();
    for p in &pieces {
        match p.kind {
            PieceKind::Flat { level } => segments.push(Segment::new(p.lo, p.hi, vec![level])),
            PieceKind::Curved => {
                for s in d.segments().iter().filter(|s| s.hi > p.lo && s.lo < p.hi) {
                    let (lo, hi) = (s.lo.max(p.lo), s.hi.min(p.hi));
                    if hi > lo {
                        segments.push(Segment { lo, hi, coeffs: s.coeffs.clone() });
                    }
                }
            }
        }
    }
    let projected = PiecewisePolyDensity::new(segments)?;
    Ok(KlProjection { source: d.clone(), projected, pieces, grid })
}

/// How the touch set `W` meets a flat block `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TouchKind {
    /// `W ∩ [a, b] = {a, b}`.
    EndpointsOnly,
    /// `W ∩ [a, b] = [a, b]`.
    Full,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatBlock {
    pub a: f64,
    pub b: f64,
    pub level: f64,
    /// `F0(b) - F0(a)`.
    pub mass: f64,
    /// `W ∩ [a, b]` as sorted closed intervals (points are degenerate intervals).
    pub touch: Vec<(f64, f64)>,
    pub touch_kind: TouchKind,
}

impl FlatBlock {
    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains_interior(&self, x: f64) -> bool {
        self.a < x && x < self.b
    }

    pub fn in_touch_set(&self, x: f64) -> bool {
        self.touch.iter().any(|&(lo, hi)| lo <= x && x <= hi)
    }

    /// Touch points that are not covered by a touch interval of positive width.
    pub fn isolated_touch_points(&self) -> impl Iterator<Item = f64> + '_ {
        self.touch.iter().filter(|(lo, hi)| lo == hi).map(|p| p.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionDecomposition {
    projection: KlProjection,
    tol: f64,
    pub blocks: Vec<FlatBlock>,
    /// Stretches where `f̂0 = f0` is non-constant.
    pub curved: Vec<(f64, f64)>,
    /// Open intervals where `F̂0 > F0`.
    pub misspecified: Vec<(f64, f64)>,
    /// Closed complement of the misspecified set within the support.
    pub well_specified: Vec<(f64, f64)>,
}

impl RegionDecomposition {
    pub fn projection(&self) -> &KlProjection {
        &self.projection
    }

    pub fn density(&self) -> &PiecewisePolyDensity {
        self.projection.source()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Index of the flat block with `a < x <= b` (or `x = 0` for a block at 0).
    pub fn block_at(&self, x: f64) -> Option<usize> {
        self.blocks.iter().position(|blk| (blk.a < x && x <= blk.b) || (x == 0.0 && blk.a == 0.0))
    }

    pub fn in_curved(&self, x: f64) -> bool {
        self.curved.iter().any(|&(lo, hi)| lo <= x && x <= hi) && self.block_at(x).is_none()
    }

    pub fn export(&self) -> DecompositionExport {
        DecompositionExport {
            support: (0.0, self.density().x_max()),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockExport { a: b.a, b: b.b, qhat: b.level, p: b.mass, touch: b.touch_kind })
                .collect(),
            misspecified: self.misspecified.clone(),
            well_specified: self.well_specified.clone(),
            curved: self.curved.clone(),
            pieces: self.projection.pieces.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockExport {
    pub a: f64,
    pub b: f64,
    pub qhat: f64,
    pub p: f64,
    pub touch: TouchKind,
}

/// Serializable projection + decomposition summary.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionExport {
    pub support: (f64, f64),
    pub blocks: Vec<BlockExport>,
    pub misspecified: Vec<(f64, f64)>,
    pub well_specified: Vec<(f64, f64)>,
    pub curved: Vec<(f64, f64)>,
    pub pieces: Vec<ProjectionPiece>,
}

fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in v {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

fn bisect_edge(pred: impl Fn(f64) -> bool, mut inside: f64, mut outside: f64) -> f64 {
    for _ in 0..100 {
        if (inside - outside).abs() <= 1e-13 {
            break;
        }
        let m = 0.5 * (inside + outside);
        if pred(m) {
            inside = m;
        } else {
            outside = m;
        }
    }
    inside
}

fn touch_set(d: &PiecewisePolyDensity, proj: &KlProjection, a: f64, b: f64, level: f64, tol: f64) -> Vec<(f64, f64)> {
    let h = d.x_max() / (proj.grid - 1) as f64;
    let m = (((b - a) / h).round() as usize).clamp(64, 1 << 15);
    let gap = |x: f64| proj.cdf(x) - d.cdf_clamped(x);
    let touching = |x: f64| gap(x) <= tol;
    let flat_here = |x: f64| (d.pdf(x) - level).abs() <= 1e-7 * level.abs().max(1.0);
    let at = |k: usize| a + (b - a) * k as f64 / m as f64;

    let mut touch = vec![(a, a), (b, b)];
    let mut k = 1;
    while k < m {
        if !touching(at(k)) {
            k += 1;
            continue;
        }
        let start = k;
        while k < m && touching(at(k)) {
            k += 1;
        }
        let end = k - 1;
        let mid = at((start + end) / 2);
        if end > start && flat_here(mid) && flat_here(at(start)) && flat_here(at(end)) {
            let lo = if start == 1 { a } else { bisect_edge(touching, at(start), at(start - 1)) };
            let hi = if end == m - 1 { b } else { bisect_edge(touching, at(end), at(end + 1)) };
            touch.push((lo, hi));
        } else if start > 1 && end < m - 1 {
            let best = (start..=end).min_by(|&i, &j| gap(at(i)).total_cmp(&gap(at(j)))).unwrap();
            touch.push((at(best), at(best)));
        }
    }
    merge_intervals(touch)
}

/// Splits the support into misspecified / well-specified, curved / flat parts.
pub fn decompose_regions(d: &PiecewisePolyDensity, proj: &KlProjection, tol: f64) -> Result<RegionDecomposition> {
    if proj.source() != d {
        return Err(invalid("projection was computed from a different density"));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(invalid("region tolerance must be finite and non-negative"));
    }
    let mut blocks = Vec::new();
    let mut curved = Vec::new();
    let mut misspecified = Vec::new();
    for p in &proj.pieces {
        match p.kind {
            PieceKind::Curved => curved.push((p.lo, p.hi)),
            PieceKind::Flat { level } => {
                let touch = touch_set(d, proj, p.lo, p.hi, level, tol);
                for w in touch.windows(2) {
                    misspecified.push((w[0].1, w[1].0));
                }
                let touch_kind = if touch.len() == 1 {
                    TouchKind::Full
                } else if touch.len() == 2 && touch[0] == (p.lo, p.lo) && touch[1] == (p.hi, p.hi) {
                    TouchKind::EndpointsOnly
                } else {
                    TouchKind::Mixed
                };
                let mass = d.cdf_clamped(p.hi) - d.cdf_clamped(p.lo);
                blocks.push(FlatBlock { a: p.lo, b: p.hi, level, mass, touch, touch_kind });
            }
        }
    }
    let curved = merge_intervals(curved);
    let mut well_specified = Vec::new();
    let mut cursor = 0.0;
    for &(lo, hi) in &misspecified {
        well_specified.push((cursor, lo));
        cursor = hi;
    }
    well_specified.push((cursor, d.x_max()));
    Ok(RegionDecomposition { projection: proj.clone(), tol, blocks, curved, misspecified, well_specified })
}

/// Convenience: projection on the default grid plus decomposition at the default tolerance.
pub fn decompose(d: &PiecewisePolyDensity) -> Result<RegionDecomposition> {
    let proj = kl_projection(d, DEFAULT_GRID)?;
    decompose_regions(d, &proj, DEFAULT_REGION_TOL)
}

/// `ḡ`: `g` on curved stretches, block averages on flat blocks.
pub struct Gbar<'a> {
    g: &'a dyn Integrand,
    blocks: Vec<(f64, f64, f64)>,
}

impl<'a> Gbar<'a> {
    pub fn eval(&self, x: f64) -> f64 {
        for &(a, b, mean) in &self.blocks {
            if (a < x && x <= b) || (x == 0.0 && a == 0.0) {
                return mean;
            }
        }
        self.g.eval(x)
    }

    /// `ḡ_j`.
    pub fn block_mean(&self, j: usize) -> f64 {
        self.blocks[j].2
    }

    /// `g_j(u) = g((b_j - a_j) u + a_j)`.
    pub fn local(&self, j: usize, u: f64) -> f64 {
        let (a, b, _) = self.blocks[j];
        self.g.eval((b - a) * u + a)
    }
}

/// Average of `g` over `[a, b]`.
pub fn block_average(g: &dyn Integrand, a: f64, b: f64) -> Result<f64> {
    let integral = match (g.antiderivative(a), g.antiderivative(b)) {
        (Some(ga), Some(gb)) => gb - ga,
        _ => quad::integrate(|x| g.eval(x), a, b, 1e-12)?,
    };
    Ok(integral / (b - a))
}

pub fn gbar<'a>(decomp: &RegionDecomposition, g: &'a dyn Integrand) -> Result<Gbar<'a>> {
    let blocks = decomp
        .blocks
        .iter()
        .map(|blk| Ok((blk.a, blk.b, block_average(g, blk.a, blk.b)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Gbar { g, blocks })
}
