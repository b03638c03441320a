//! Adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{numeric, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

const MAX_INTERVALS: usize = 4096;

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn piece<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Piece> {
    let (value, err) = kronrod15(f, a, b);
    if !value.is_finite() {
        return Err(numeric(format!("non-finite integrand on [{a}, {b}]")));
    }
    Ok(Piece { a, b, value, err })
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`, always
/// bisecting the interval with the largest error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(numeric("infinite integration bounds"));
    }
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    let tol = tol.max(1e-15);
    let mut heap = BinaryHeap::new();
    let first = piece(&f, a, b)?;
    let mut total_err = first.err;
    heap.push(first);
    // Intervals too narrow to split are set aside with whatever error they carry.
    let mut settled = 0.0;
    let mut settled_err = 0.0;
    while total_err > tol {
        let Some(worst) = heap.pop() else { break };
        let m = 0.5 * (worst.a + worst.b);
        if !(worst.a < m && m < worst.b) || worst.b - worst.a <= 4.0 * f64::EPSILON * worst.a.abs().max(worst.b.abs()) {
            settled += worst.value;
            settled_err += worst.err;
            total_err -= worst.err;
            continue;
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(numeric(format!("quadrature did not converge on [{a}, {b}] (error estimate {total_err:e})")));
        }
        let (left, right) = (piece(&f, worst.a, m)?, piece(&f, m, worst.b)?);
        total_err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
    }
    if settled_err > tol {
        return Err(numeric(format!("quadrature did not converge on [{a}, {b}] (error estimate {settled_err:e})")));
    }
    Ok(settled + heap.iter().map(|p| p.value).sum::<f64>())
}
