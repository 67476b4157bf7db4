//! Best uniform polynomial approximation by the Remez exchange algorithm.
//!
//! Polynomials are held in the Chebyshev basis of the interval mapped onto `[-1, 1]`,
//! which keeps the linear systems well conditioned up to the degree guard.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest degree accepted by [`remez_best_approx`].
pub const MAX_DEGREE: usize = 60;
const MAX_EXCHANGES: usize = 100;
const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestApproxResult {
    /// `E_L(f)`: the sup-norm error of the best approximation.
    pub error: f64,
    /// Levelled error `|h|` of the final reference; `|h| <= E_L <= error`.
    pub levelled_error: f64,
    /// Chebyshev coefficients on the mapped interval: `p(x) = Σ_j c_j T_j(t(x))`.
    pub coeffs: Vec<f64>,
    pub interval: (f64, f64),
    /// Final reference, where the residual alternates in sign with modulus `|h|`.
    pub alternation_points: Vec<f64>,
    /// Residual `f − p` at each alternation point.
    pub alternation_residuals: Vec<f64>,
    pub exchanges: usize,
}

impl BestApproxResult {
    /// Evaluates the approximating polynomial at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.interval;
        clenshaw(&self.coeffs, (2.0 * x - a - b) / (b - a))
    }
}

/// `Σ_j c_j T_j(t)`.
pub fn clenshaw(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &cj in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + cj;
        b2 = b1;
        b1 = b0;
    }
    c.first().copied().unwrap_or(0.0) + t * b1 - b2
}

fn chebyshev_row(t: f64, len: usize) -> impl Iterator<Item = f64> {
    let mut prev = 1.0;
    let mut cur = t;
    (0..len).map(move |j| match j {
        0 => 1.0,
        1 => t,
        _ => {
            let next = 2.0 * t * cur - prev;
            prev = cur;
            cur = next;
            next
        }
    })
}

struct Residual<'a, F> {
    f: &'a F,
    a: f64,
    b: f64,
}

impl<F: Fn(f64) -> f64> Residual<'_, F> {
    fn x(&self, t: f64) -> f64 {
        0.5 * (self.a + self.b) + 0.5 * (self.b - self.a) * t
    }

    fn f(&self, t: f64) -> f64 {
        (self.f)(self.x(t))
    }

    fn at(&self, coeffs: &[f64], t: f64) -> f64 {
        self.f(t) - clenshaw(coeffs, t)
    }
}

/// Maximises `|r|` on `[lo, hi]` by golden-section search started from a bracket.
fn refine_extremum(r: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (r(x1).abs(), r(x2).abs());
    for _ in 0..80 {
        if b - a < 1e-15 {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = r(x2).abs();
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = r(x1).abs();
        }
    }
    let mut best = (x1, f1);
    for t in [x2, lo, hi] {
        let v = r(t).abs();
        if v > best.1 {
            best = (t, v);
        }
    }
    (best.0, r(best.0))
}

/// Best approximation of `f` on `[a, b]` by polynomials of degree at most `degree`.
pub fn remez_best_approx<F: Fn(f64) -> f64>(f: F, interval: (f64, f64), degree: usize) -> Result<BestApproxResult> {
    let (a, b) = interval;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::invalid(format!("interval must satisfy a < b, got [{a}, {b}]")));
    }
    if degree > MAX_DEGREE {
        return Err(Error::invalid(format!("degree {degree} exceeds the conditioning guard {MAX_DEGREE}")));
    }
    let res = Residual { f: &f, a, b };
    let m = degree + 2;

    // dense Chebyshev-distributed grid for locating the residual's extrema
    let n_grid = (60 * m).max(2000);
    let grid: Vec<f64> = (0..=n_grid)
        .map(|j| -(std::f64::consts::PI * j as f64 / n_grid as f64).cos())
        .collect();
    let f_grid: Vec<f64> = grid.iter().map(|&t| res.f(t)).collect();
    if let Some(bad) = f_grid.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("f is not finite at x = {}", res.x(grid[bad]))));
    }
    let f_scale = f_grid.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    // rounding in f and in the polynomial puts a floor under any measurable error
    let noise = 64.0 * f64::EPSILON * f_scale.max(f64::MIN_POSITIVE);

    // extrema of T_{degree+1}, ascending
    let mut reference: Vec<f64> = (0..m)
        .map(|i| -(std::f64::consts::PI * i as f64 / (m - 1) as f64).cos())
        .collect();

    let mut last: Option<BestApproxResult> = None;
    for exchange in 0..MAX_EXCHANGES {
        let mut mat = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for (i, &t) in reference.iter().enumerate() {
            for (j, v) in chebyshev_row(t, degree + 1).enumerate() {
                mat[(i, j)] = v;
            }
            mat[(i, degree + 1)] = if i % 2 == 0 { 1.0 } else { -1.0 };
            rhs[i] = res.f(t);
        }
        let sol = mat.lu().solve(&rhs).ok_or_else(|| Error::NonConvergence {
            routine: "remez",
            detail: format!("singular reference system at exchange {exchange}"),
        })?;
        let coeffs: Vec<f64> = sol.iter().take(degree + 1).copied().collect();
        let h = sol[degree + 1];

        let r_grid: Vec<f64> = grid.iter().zip(&f_grid).map(|(&t, &fv)| fv - clenshaw(&coeffs, t)).collect();
        let r = |t: f64| res.at(&coeffs, t);

        // one extremum per maximal run of constant sign
        let mut extrema: Vec<(f64, f64)> = Vec::new();
        let mut start = 0usize;
        while start < r_grid.len() {
            let sign = r_grid[start] >= 0.0;
            let mut end = start;
            while end + 1 < r_grid.len() && (r_grid[end + 1] >= 0.0) == sign {
                end += 1;
            }
            let best = (start..=end)
                .max_by(|&i, &j| r_grid[i].abs().total_cmp(&r_grid[j].abs()))
                .expect("nonempty run");
            let lo = grid[best.saturating_sub(1).max(start)];
            let hi = grid[(best + 1).min(end)];
            let (t, v) = if lo < hi { refine_extremum(&r, lo, hi) } else { (grid[best], r_grid[best]) };
            extrema.push((t, v));
            start = end + 1;
        }

        let max_abs = extrema.iter().fold(0.0f64, |s, e| s.max(e.1.abs()));
        let reference_residuals: Vec<f64> = reference.iter().map(|&t| r(t)).collect();
        let current = BestApproxResult {
            error: max_abs.max(h.abs()),
            levelled_error: h.abs(),
            coeffs,
            interval,
            alternation_points: reference.iter().map(|&t| res.x(t)).collect(),
            alternation_residuals: reference_residuals,
            exchanges: exchange,
        };
        if max_abs <= noise {
            // f is (numerically) a polynomial of this degree
            return Ok(BestApproxResult { error: max_abs, levelled_error: max_abs, ..current });
        }
        if max_abs - h.abs() <= TOLERANCE * max_abs + noise {
            return Ok(current);
        }
        if extrema.len() < m {
            // the residual no longer alternates enough to exchange; with rounding at this
            // level the levelled reference is the best available answer
            if max_abs - h.abs() <= 1e-6 * max_abs + 1e3 * noise {
                return Ok(current);
            }
            return Err(Error::NonConvergence {
                routine: "remez",
                detail: format!(
                    "residual has only {} sign runs (need {m}) at exchange {exchange}; max |r| = {max_abs:e}, |h| = {:e}",
                    extrema.len(),
                    h.abs()
                ),
            });
        }

        // keep m consecutive alternating extrema that include the global maximum
        let global = extrema
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .1.abs().total_cmp(&y.1 .1.abs()))
            .map(|(i, _)| i)
            .expect("nonempty");
        let (mut lo, mut hi) = (0usize, extrema.len());
        while hi - lo > m {
            // drop the smaller end unless it is the global maximum
            let drop_front = if lo == global {
                false
            } else if hi - 1 == global {
                true
            } else {
                extrema[lo].1.abs() <= extrema[hi - 1].1.abs()
            };
            if drop_front {
                lo += 1;
            } else {
                hi -= 1;
            }
        }
        reference = extrema[lo..hi].iter().map(|e| e.0).collect();
        last = Some(current);
    }
    Err(Error::NonConvergence {
        routine: "remez",
        detail: format!(
            "no convergence after {MAX_EXCHANGES} exchanges (last error {:e})",
            last.map(|r| r.error).unwrap_or(f64::NAN)
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_zero_error() {
        let r = remez_best_approx(|_| 3.5, (-1.0, 1.0), 0).unwrap();
        assert_eq!(r.error, 0.0);
        assert!((r.eval(0.3) - 3.5).abs() < 1e-14);
    }

    #[test]
    fn best_constant_is_midrange() {
        let r = remez_best_approx(|x: f64| (-(x + 1.0)).exp(), (-1.0, 1.0), 0).unwrap();
        let expect = (1.0 - (-2f64).exp()) / 2.0;
        assert!((r.error - expect).abs() < 1e-12 * expect);
        assert!((r.eval(0.0) - (1.0 + (-2f64).exp()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn abs_on_symmetric_interval() {
        // E_1(|x|, [-1,1]) = 1/2 by symmetry; the best line is the constant 1/2
        let r = remez_best_approx(|x: f64| x.abs(), (-1.0, 1.0), 1).unwrap();
        assert!((r.error - 0.5).abs() < 1e-9);
    }

    #[test]
    fn chebyshev_monic_extremal_property() {
        // x^{L+1} minus its best degree-L approximation is T_{L+1}/2^L
        for l in 1..8usize {
            let r = remez_best_approx(|x: f64| x.powi(l as i32 + 1), (-1.0, 1.0), l).unwrap();
            let expect = 0.5f64.powi(l as i32);
            assert!((r.error - expect).abs() < 1e-9 * expect, "L={l}: {}", r.error);
        }
    }

    #[test]
    fn equioscillation_and_monotonicity() {
        let f = |x: f64| (3.0 * x).sin() + (x * 0.7).exp();
        let mut prev = f64::INFINITY;
        for l in 0..10usize {
            let r = remez_best_approx(f, (-1.0, 2.0), l).unwrap();
            assert_eq!(r.alternation_points.len(), l + 2);
            let resid: Vec<f64> = r.alternation_points.iter().map(|&x| f(x) - r.eval(x)).collect();
            for (a, b) in resid.iter().zip(&r.alternation_residuals) {
                assert!((a - b).abs() <= 1e-12);
            }
            for w in resid.windows(2) {
                assert!(w[0] * w[1] < 0.0, "L={l}: residual does not alternate");
            }
            for v in &resid {
                assert!((v.abs() - r.error).abs() <= 1e-8 * r.error, "L={l}");
            }
            assert!(r.error <= prev * (1.0 + 1e-12));
            prev = r.error;
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(remez_best_approx(|x| x, (1.0, 1.0), 2).is_err());
        assert!(remez_best_approx(|x| x, (-1.0, 1.0), MAX_DEGREE + 1).is_err());
    }
}
