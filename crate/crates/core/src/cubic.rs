//! Positive root of the per-edge update `a w^3 + c w^2 - rhs = 0`.
//!
//! With `a >= 0` and `rhs >= 0` the cubic has at most one positive root: it
//! equals `-rhs` on `[0, max(0, -c/a)]` and is strictly increasing beyond.
//! The default back-end takes the eigenvalues of the companion matrix and
//! keeps the positive real one; bisection on the same bracket is kept for
//! cross-checking.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CubicMethod {
    #[default]
    Companion,
    Bisection,
}

impl std::str::FromStr for CubicMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "companion" | "companion-matrix" => Ok(Self::Companion),
            "bisection" => Ok(Self::Bisection),
            other => Err(format!(
                "unknown cubic method {other:?} (companion | bisection)"
            )),
        }
    }
}

/// The coefficients admit no nonnegative root (`a = 0`, `c <= 0`, `rhs > 0`),
/// or are outside `a >= 0`, `rhs >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoPositiveRoot {
    pub a: f64,
    pub c: f64,
    pub rhs: f64,
}

fn residual(a: f64, c: f64, rhs: f64, w: f64) -> f64 {
    w * w * (a * w + c) - rhs
}

/// Solves `a w^3 + c w^2 = rhs` for `w >= 0`, clamped to `[0, w_max]`.
pub fn solve_cubic(
    a: f64,
    c: f64,
    rhs: f64,
    method: CubicMethod,
    w_max: f64,
) -> Result<f64, NoPositiveRoot> {
    let err = NoPositiveRoot { a, c, rhs };
    if !(a >= 0.0) || !(rhs >= 0.0) || !a.is_finite() || !c.is_finite() || !rhs.is_finite() {
        return Err(err);
    }
    let root = if rhs == 0.0 {
        if a > 0.0 {
            (-c / a).max(0.0)
        } else {
            0.0
        }
    } else if a == 0.0 {
        if c <= 0.0 {
            return Err(err);
        }
        (rhs / c).sqrt()
    } else {
        let lo = (-c / a).max(0.0);
        let hi = lo + (rhs / a).cbrt();
        match method {
            CubicMethod::Companion => companion_root(a, c, rhs, lo, hi),
            CubicMethod::Bisection => bisect(a, c, rhs, lo, hi),
        }
    };
    Ok(root.clamp(0.0, w_max))
}

/// Eigenvalues of the companion matrix of `w^3 + (c/a) w^2 - rhs/a`, then a
/// bracketed Newton polish of the positive real one.
fn companion_root(a: f64, c: f64, rhs: f64, lo: f64, hi: f64) -> f64 {
    let b2 = c / a;
    let b0 = -rhs / a;
    #[rustfmt::skip]
    let companion = Matrix3::new(
        -b2, 0.0, -b0,
        1.0, 0.0, 0.0,
        0.0, 1.0, 0.0,
    );
    let guess = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.re > 0.0 && z.im.abs() <= 1e-8 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .min_by(|x, y| {
            residual(a, c, rhs, *x)
                .abs()
                .total_cmp(&residual(a, c, rhs, *y).abs())
        })
        .unwrap_or(0.5 * (lo + hi));
    polish(a, c, rhs, guess.clamp(lo, hi), lo, hi)
}

/// Safeguarded Newton on `[lo, hi]` where `g(lo) < 0 <= g(hi)`.
fn polish(a: f64, c: f64, rhs: f64, mut x: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..100 {
        let g = residual(a, c, rhs, x);
        if g == 0.0 {
            return x;
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dg = x * (3.0 * a * x + 2.0 * c);
        let mut next = x - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs() || hi - lo <= 2.0 * f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}

fn bisect(a: f64, c: f64, rhs: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(a, c, rhs, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick the endpoint with the smaller residual
    if residual(a, c, rhs, lo).abs() < residual(a, c, rhs, hi).abs() {
        lo
    } else {
        hi
    }
}
