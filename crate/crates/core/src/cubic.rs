//! Closed-form real-root solver for cubic polynomials with one Newton polish
//! step per root. Used by the amplitude update, which needs the real roots of
//! a degree-3 stationarity condition at deterministic cost.

/// Up to three real roots, unordered.
#[derive(Debug, Clone, Copy, Default)]
pub struct CubicRoots {
    roots: [f64; 3],
    count: usize,
}

impl CubicRoots {
    fn push(&mut self, r: f64) {
        self.roots[self.count] = r;
        self.count += 1;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.roots[..self.count]
    }
}

/// Real roots of `c3 x^3 + c2 x^2 + c1 x + c0 = 0` with `c3 != 0`.
///
/// Depressed-cubic substitution `x = y - a/3`, then the trigonometric form
/// for three real roots or Cardano's formula for one; each root gets one
/// Newton step against the original coefficients to shed the substitution's
/// rounding error.
pub fn solve_cubic(c3: f64, c2: f64, c1: f64, c0: f64) -> CubicRoots {
    debug_assert!(c3 != 0.0, "leading coefficient must be nonzero");
    let a = c2 / c3;
    let b = c1 / c3;
    let c = c0 / c3;

    // y^3 + p y + q = 0 with x = y - a/3.
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;

    let mut out = CubicRoots::default();
    let discriminant = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);

    if p == 0.0 && q == 0.0 {
        out.push(-shift);
    } else if discriminant > 0.0 {
        // One real root (Cardano).
        let sq = discriminant.sqrt();
        let u = cbrt(-q / 2.0 + sq);
        let v = cbrt(-q / 2.0 - sq);
        out.push(u + v - shift);
    } else if discriminant == 0.0 {
        // Double root plus a simple root.
        let u = cbrt(-q / 2.0);
        out.push(2.0 * u - shift);
        out.push(-u - shift);
    } else {
        // Three distinct real roots (p < 0 here).
        let rho = (-p / 3.0).sqrt();
        let arg = (3.0 * q / (2.0 * p * rho)).clamp(-1.0, 1.0);
        let theta = arg.acos();
        for i in 0..3 {
            let angle = (theta + 2.0 * std::f64::consts::PI * i as f64) / 3.0;
            out.push(2.0 * rho * angle.cos() - shift);
        }
    }

    for r in out.roots[..out.count].iter_mut() {
        *r = newton_polish(c3, c2, c1, c0, *r);
    }
    out
}

fn cbrt(x: f64) -> f64 {
    x.cbrt()
}

fn newton_polish(c3: f64, c2: f64, c1: f64, c0: f64, x: f64) -> f64 {
    let f = ((c3 * x + c2) * x + c1) * x + c0;
    let df = (3.0 * c3 * x + 2.0 * c2) * x + c1;
    if df != 0.0 && f.is_finite() {
        let next = x - f / df;
        if next.is_finite() {
            return next;
        }
    }
    x
}
