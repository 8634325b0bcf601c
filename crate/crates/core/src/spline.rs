//! Periodic cubic spline on a uniform grid, with exact antiderivative.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSpline {
    period: f64,
    h: f64,
    values: Vec<f64>,
    /// Second derivatives at the nodes.
    curv: Vec<f64>,
    /// `cumulative[j]` is the integral from 0 to node j.
    cumulative: Vec<f64>,
}

impl PeriodicSpline {
    /// Builds a spline through `values[j]` at `t_j = j * period / values.len()`.
    pub fn new(period: f64, values: Vec<f64>) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidParameter(format!("spline period must be positive, got {period}")));
        }
        let n = values.len();
        if n < 3 {
            return Err(Error::InvalidParameter(format!("periodic spline needs at least 3 samples, got {n}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("spline samples must be finite".into()));
        }
        let h = period / n as f64;
        let rhs: Vec<f64> = (0..n)
            .map(|j| {
                let prev = values[(j + n - 1) % n];
                let next = values[(j + 1) % n];
                6.0 * (next - 2.0 * values[j] + prev) / (h * h)
            })
            .collect();
        // M_{j-1} + 4 M_j + M_{j+1} = rhs_j, cyclic.
        let curv = solve_cyclic(1.0, 4.0, 1.0, &rhs);

        let mut cumulative = Vec::with_capacity(n + 1);
        cumulative.push(0.0);
        for j in 0..n {
            let jn = (j + 1) % n;
            let cell = 0.5 * h * (values[j] + values[jn]) - h * h * h / 24.0 * (curv[j] + curv[jn]);
            cumulative.push(cumulative[j] + cell);
        }
        Ok(Self { period, h, values, curv, cumulative })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.values
    }

    /// Integral over one full period.
    pub fn period_integral(&self) -> f64 {
        self.cumulative[self.values.len()]
    }

    pub fn mean(&self) -> f64 {
        self.period_integral() / self.period
    }

    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let wraps = (t / self.period).floor();
        let local = t - wraps * self.period;
        let n = self.values.len();
        let mut j = (local / self.h).floor() as usize;
        if j >= n {
            j = n - 1;
        }
        let b = ((local - j as f64 * self.h) / self.h).clamp(0.0, 1.0);
        (j, b, wraps)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (j, b, _) = self.locate(t);
        let jn = (j + 1) % self.values.len();
        let a = 1.0 - b;
        let h2 = self.h * self.h / 6.0;
        a * self.values[j]
            + b * self.values[jn]
            + ((a * a * a - a) * self.curv[j] + (b * b * b - b) * self.curv[jn]) * h2
    }

    /// Integral of the spline from 0 to `t` (any real `t`, negative allowed).
    pub fn integral(&self, t: f64) -> f64 {
        let (j, b, wraps) = self.locate(t);
        let jn = (j + 1) % self.values.len();
        let h = self.h;
        let one_minus = 1.0 - b;
        let int_a = h * (b - 0.5 * b * b);
        let int_b = 0.5 * h * b * b;
        let int_a3 = h * ((1.0 - one_minus.powi(4)) / 4.0 - (b - 0.5 * b * b));
        let int_b3 = h * (b.powi(4) / 4.0 - 0.5 * b * b);
        let partial = int_a * self.values[j]
            + int_b * self.values[jn]
            + (int_a3 * self.curv[j] + int_b3 * self.curv[jn]) * h * h / 6.0;
        wraps * self.period_integral() + self.cumulative[j] + partial
    }
}

/// Solves the cyclic tridiagonal system with constant bands
/// `lower * x[j-1] + diag * x[j] + upper * x[j+1] = rhs[j]` (indices mod n).
fn solve_cyclic(lower: f64, diag: f64, upper: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    // Sherman-Morrison on top of the Thomas algorithm.
    let gamma = -diag;
    let mut b = vec![diag; n];
    b[0] = diag - gamma;
    b[n - 1] = diag - lower * upper / gamma;
    let x = solve_tridiagonal(lower, &b, upper, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = upper;
    let z = solve_tridiagonal(lower, &b, upper, &u);
    let fact = (x[0] + lower * x[n - 1] / gamma) / (1.0 + z[0] + lower * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn solve_tridiagonal(lower: f64, diag: &[f64], upper: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower * c[i - 1];
        c[i] = upper / m;
        d[i] = (rhs[i] - lower * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cosine_spline(n: usize) -> PeriodicSpline {
        let period = PI;
        let vals = (0..n).map(|j| 1.0 + 0.5 * (2.0 * j as f64 * period / n as f64).cos()).collect();
        PeriodicSpline::new(period, vals).unwrap()
    }

    #[test]
    fn interpolates_nodes_exactly() {
        let s = cosine_spline(64);
        for (j, v) in s.samples().iter().enumerate() {
            assert!((s.eval(j as f64 * PI / 64.0) - v).abs() < 1e-13);
        }
    }

    #[test]
    fn tracks_smooth_periodic_function() {
        let s = cosine_spline(256);
        for i in 0..1000 {
            let t = -3.0 + 0.0123 * i as f64;
            let exact = 1.0 + 0.5 * (2.0 * t).cos();
            assert!((s.eval(t) - exact).abs() < 1e-7, "t = {t}");
        }
    }

    #[test]
    fn antiderivative_matches_closed_form() {
        let s = cosine_spline(256);
        for &t in &[0.0, 0.3, 1.0, PI, 4.0, -2.2, 17.5] {
            let exact = t + 0.25 * (2.0 * t).sin();
            assert!((s.integral(t) - exact).abs() < 1e-7, "t = {t}");
        }
        assert!((s.mean() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_samples_stay_constant() {
        let s = PeriodicSpline::new(2.0, vec![7.0; 64]).unwrap();
        assert!((s.eval(0.77) - 7.0).abs() < 1e-14);
        assert!((s.integral(3.0) - 21.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(PeriodicSpline::new(1.0, vec![1.0, 2.0]).is_err());
        assert!(PeriodicSpline::new(0.0, vec![1.0; 8]).is_err());
        assert!(PeriodicSpline::new(1.0, vec![f64::NAN; 8]).is_err());
    }
}
