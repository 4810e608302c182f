//! Piecewise-cubic Hermite interpolation with continuous first derivative.

use serde::{Deserialize, Serialize};

/// Cubic Hermite interpolant through `(x, y)` with nodal slopes estimated
/// from the samples: the derivative of the Lagrange polynomial through the
/// (up to) five nearest nodes. Two nodes reduce to the straight line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl HermiteSpline {
    /// `x` must be strictly increasing with at least two entries.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len());
        debug_assert!(x.windows(2).all(|w| w[1] > w[0]));
        let n = x.len();
        let width = n.min(5);
        let slope = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(width / 2).min(n - width);
                lagrange_derivative(&x[lo..lo + width], &y[lo..lo + width], x[i])
            })
            .collect();
        Self { x, y, slope }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slope
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn interval(&self, x: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&xi| xi <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    /// Value and first derivative at `x` (extrapolates the end cubics).
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let k = self.interval(x);
        let h = self.x[k + 1] - self.x[k];
        let t = (x - self.x[k]) / h;
        let (y0, y1) = (self.y[k], self.y[k + 1]);
        let (m0, m1) = (self.slope[k] * h, self.slope[k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let value = h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let d11 = 3.0 * t2 - 2.0 * t;
        let deriv = (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / h;
        (value, deriv)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }
}

/// d/dx of the Lagrange polynomial through `(xs, ys)` evaluated at `x`.
fn lagrange_derivative(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let mut total = 0.0;
    for j in 0..n {
        // derivative of basis l_j(x) = prod_{m != j} (x - x_m)/(x_j - x_m)
        let mut denom = 1.0;
        for m in 0..n {
            if m != j {
                denom *= xs[j] - xs[m];
            }
        }
        let mut sum = 0.0;
        for i in 0..n {
            if i == j {
                continue;
            }
            let mut prod = 1.0;
            for m in 0..n {
                if m != j && m != i {
                    prod *= x - xs[m];
                }
            }
            sum += prod;
        }
        total += ys[j] * sum / denom;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_nodes_is_linear() {
        let s = HermiteSpline::new(vec![1.0, 3.0], vec![2.0, 6.0]);
        for x in [1.0, 1.5, 2.0, 2.7, 3.0] {
            let (v, d) = s.eval(x);
            assert!((v - 2.0 * x).abs() < 1e-14);
            assert!((d - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reproduces_quartic_exactly() {
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.37 + 0.01 * (i * i) as f64).collect();
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.1 * x.powi(3);
        let y = x.iter().map(|&v| f(v)).collect();
        let s = HermiteSpline::new(x.clone(), y);
        for w in x.windows(2) {
            let m = 0.5 * (w[0] + w[1]);
            assert!((s.value(m) - f(m)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_is_continuous_at_nodes() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (0.3 * v).sin()).collect();
        let s = HermiteSpline::new(x.clone(), y);
        for &xi in &x[1..19] {
            let (_, left) = s.eval(xi - 1e-12);
            let (_, right) = s.eval(xi + 1e-12);
            assert!((left - right).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn interpolates_nodes(ys in prop::collection::vec(-10.0f64..10.0, 2..30)) {
            let x: Vec<f64> = (0..ys.len()).map(|i| i as f64 * 0.5).collect();
            let s = HermiteSpline::new(x.clone(), ys.clone());
            for (xi, yi) in x.iter().zip(&ys) {
                prop_assert!((s.value(*xi) - yi).abs() <= 1e-12 * (1.0 + yi.abs()));
            }
        }
    }
}
