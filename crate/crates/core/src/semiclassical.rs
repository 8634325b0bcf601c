//! Mean photon number of the subharmonic modes.
//!
//! Two independent routes:
//!
//! * ODE: `dn0/dt = 2 n0 (eps(t) - gamma - lambda n0)`, integrated in `u = ln n0` so that
//!   positivity holds and eight-decade swings stay well conditioned.
//! * Quadrature: the periodic attractor
//!   `1/n0(t) = 2 lambda ∫_0^∞ exp(-2 ∫_{t-s}^t (eps - gamma)) ds`.
//!   Since `∫_{t-s-T}^{t-s} eps = eps_bar T`, the kernel over `[T, ∞)` is the kernel over
//!   `[0, T)` times a geometric series, so one period of adaptive quadrature gives the full
//!   integral.

use crate::error::{Error, Result};
use crate::model::{regime_classify, ModelParams, Regime};
use crate::ode::{DenseSolution, Dopri5};
use crate::quad::Quadrature;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiclassicalOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Relative period-to-period tolerance for declaring the orbit periodic.
    pub periodic_tol: f64,
    pub max_periods: usize,
    /// Uniform samples per period in the returned trajectory.
    pub grid_points: usize,
    /// Allowed relative disagreement between the ODE and quadrature routes.
    pub cross_tol: f64,
    /// Number of phases at which the two routes are compared; 0 disables the check.
    pub cross_points: usize,
}

impl Default for SemiclassicalOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            periodic_tol: 1e-8,
            max_periods: 10_000,
            grid_points: 2048,
            cross_tol: 1e-4,
            cross_points: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiclassicalTrajectory {
    /// Times in units of `1/gamma`. For periodic solutions these are phases in `[0, T)`.
    pub t_grid: Vec<f64>,
    pub n0: Vec<f64>,
    pub converged_periodic: bool,
    pub periods_to_converge: usize,
}

impl SemiclassicalTrajectory {
    /// The below-threshold attractor `n0 = 0` sampled over one period.
    pub fn zero(period: f64, grid_points: usize) -> Self {
        let n = grid_points.max(1);
        Self {
            t_grid: (0..n).map(|i| period * i as f64 / n as f64).collect(),
            n0: vec![0.0; n],
            converged_periodic: true,
            periods_to_converge: 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.n0.iter().all(|&n| n == 0.0)
    }

    pub fn max(&self) -> f64 {
        self.n0.iter().copied().fold(0.0, f64::max)
    }
}

/// Right-hand side for `w = ln n0 - offset`. Keeping `w` of order one makes the relative
/// tolerance act on `n0` itself rather than on `ln n0`.
fn log_rhs(p: &ModelParams, offset: f64) -> impl Fn(f64, &[f64; 1]) -> [f64; 1] + '_ {
    let (gamma, lambda) = (p.gamma, p.lambda());
    let scale = lambda * offset.exp();
    move |t, w| [2.0 * (p.eps(t) - gamma - scale * w[0].exp())]
}

/// `integrate_n0`: solves the photon-number equation on `[t_span.0, t_span.1]` and samples it
/// on `n_points` uniform times (endpoints included).
pub fn integrate_n0(p: &ModelParams, t_span: (f64, f64), n0_init: f64, n_points: usize) -> Result<SemiclassicalTrajectory> {
    integrate_n0_with(p, t_span, n0_init, n_points, &SemiclassicalOptions::default())
}

pub fn integrate_n0_with(
    p: &ModelParams,
    t_span: (f64, f64),
    n0_init: f64,
    n_points: usize,
    opts: &SemiclassicalOptions,
) -> Result<SemiclassicalTrajectory> {
    p.validate()?;
    if !(n0_init >= 0.0 && n0_init.is_finite()) {
        return Err(Error::InvalidParameter(format!("initial photon number must be >= 0, got {n0_init}")));
    }
    let (t0, t1) = t_span;
    if !(t1 >= t0) {
        return Err(Error::InvalidParameter("time span must be increasing".into()));
    }
    let n = n_points.max(2);
    let t_grid: Vec<f64> = (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect();
    if n0_init == 0.0 {
        // n0 = 0 is an exact fixed point.
        return Ok(SemiclassicalTrajectory { n0: vec![0.0; n], t_grid, converged_periodic: false, periods_to_converge: 0 });
    }
    let solver = Dopri5::new(opts.rtol, opts.atol);
    let offset = n0_init.ln();
    let (_, sol) = solver.integrate_dense(log_rhs(p, offset), t0, [0.0], t1)?;
    let n0 = t_grid.iter().map(|&t| (sol.eval(t)[0] + offset).exp()).collect();
    Ok(SemiclassicalTrajectory { t_grid, n0, converged_periodic: false, periods_to_converge: 0 })
}

/// Quadrature evaluation of the periodic above-threshold photon number.
#[derive(Debug, Clone)]
pub struct N0Quadrature<'a> {
    p: &'a ModelParams,
    period: f64,
    /// `ln(2 lambda) - ln(1 - q)` with `q = exp(-2 (eps_bar - gamma) T)`.
    log_prefactor: f64,
    quad: Quadrature,
}

impl<'a> N0Quadrature<'a> {
    pub fn new(p: &'a ModelParams) -> Result<Self> {
        p.validate()?;
        if regime_classify(p) != Regime::AboveThreshold {
            return Err(Error::BelowThreshold { ratio: p.pump_ratio() });
        }
        let period = p.period();
        let decay = 2.0 * (p.eps_bar() - p.gamma) * period;
        let log_prefactor = (2.0 * p.lambda()).ln() - (-(-decay).exp_m1()).ln();
        Ok(Self { p, period, log_prefactor, quad: Quadrature::with_rel_tol(1e-12) })
    }

    /// `-ln n0(t)`.
    pub fn ln_inverse(&self, t: f64) -> Result<f64> {
        let p = self.p;
        let e_t = p.eps_integral(t);
        let gamma = p.gamma;
        let exponent = |s: f64| -2.0 * (e_t - p.eps_integral(t - s) - gamma * s);
        let ln_kernel = self.quad.integrate_log_exp(exponent, 0.0, self.period, 256)?;
        Ok(self.log_prefactor + ln_kernel)
    }

    pub fn ln_n0(&self, t: f64) -> Result<f64> {
        self.ln_inverse(t).map(|v| -v)
    }

    pub fn n0(&self, t: f64) -> Result<f64> {
        self.ln_n0(t).map(f64::exp)
    }
}

/// `asymptotic_n0`: periodic photon number at time `t` from the closed-form quadrature.
/// Refuses (with [`Error::BelowThreshold`]) unless the period-averaged pump is above threshold.
pub fn asymptotic_n0(p: &ModelParams, t: f64) -> Result<f64> {
    N0Quadrature::new(p)?.n0(t)
}

/// Converged periodic orbit of the photon-number ODE, stored as the dense solution over
/// one period starting at phase 0.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub period: f64,
    pub periods_to_converge: usize,
    /// `ln n0 - offset` over `[0, T]`.
    pub(crate) dense: DenseSolution<1>,
    pub(crate) offset: f64,
}

impl PeriodicOrbit {
    pub fn ln_n0(&self, t: f64) -> f64 {
        self.dense.eval(t.rem_euclid(self.period))[0] + self.offset
    }

    pub fn n0(&self, t: f64) -> f64 {
        self.ln_n0(t).exp()
    }
}

/// Integrates from `n0 = gamma/lambda` until the orbit repeats to `periodic_tol`.
pub fn converge_orbit(p: &ModelParams, opts: &SemiclassicalOptions) -> Result<PeriodicOrbit> {
    p.validate()?;
    if regime_classify(p) != Regime::AboveThreshold {
        return Err(Error::BelowThreshold { ratio: p.pump_ratio() });
    }
    let period = p.period();
    let solver = Dopri5::new(opts.rtol, opts.atol);
    // Stationary level of the unmodulated problem.
    let offset = ((p.eps_bar() - p.gamma) / p.lambda()).ln();
    let rhs = log_rhs(p, offset);
    // Linear contraction factor of the orbit per period.
    let contraction = (-2.0 * (p.eps_bar() - p.gamma) * period).exp();
    let amplification = 1.0 / (1.0 - contraction).max(1e-300);
    let probes = 64;

    let mut u0 = (p.gamma / p.lambda()).ln() - offset;
    let mut prev: Option<Vec<f64>> = None;
    let mut last_change = f64::INFINITY;
    for k in 0..opts.max_periods {
        let t_start = k as f64 * period;
        let (u_end, sol) = solver.integrate_dense(&rhs, t_start, [u0], t_start + period)?;
        let samples: Vec<f64> = (0..probes).map(|i| sol.eval(t_start + period * i as f64 / probes as f64)[0]).collect();
        if let Some(prev) = &prev {
            let max_log = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let change = samples
                .iter()
                .zip(prev)
                .map(|(a, b)| (a.exp() - b.exp()).abs())
                .fold(0.0, f64::max)
                / max_log.exp();
            last_change = change * amplification;
            if last_change < opts.periodic_tol {
                // Re-integrate the final period from phase 0 for a clean dense record.
                let (_, dense) = solver.integrate_dense(&rhs, 0.0, [u0], period)?;
                return Ok(PeriodicOrbit { period, periods_to_converge: k + 1, dense, offset });
            }
        }
        prev = Some(samples);
        u0 = u_end[0];
    }
    Err(Error::NoConvergence { periods: opts.max_periods, last_change })
}

/// `periodic_steady_state`: one converged period of `n0(t)` on a uniform phase grid,
/// cross-checked against [`asymptotic_n0`].
pub fn periodic_steady_state(p: &ModelParams) -> Result<SemiclassicalTrajectory> {
    periodic_steady_state_with(p, &SemiclassicalOptions::default())
}

pub fn periodic_steady_state_with(p: &ModelParams, opts: &SemiclassicalOptions) -> Result<SemiclassicalTrajectory> {
    let orbit = converge_orbit(p, opts)?;
    let period = orbit.period;
    let n = opts.grid_points.max(1);
    let t_grid: Vec<f64> = (0..n).map(|i| period * i as f64 / n as f64).collect();
    let n0: Vec<f64> = t_grid.iter().map(|&t| orbit.n0(t)).collect();

    if opts.cross_points > 0 {
        let quad = N0Quadrature::new(p)?;
        for i in 0..opts.cross_points {
            let t = period * (i as f64 + 0.5) / opts.cross_points as f64;
            let ode = orbit.ln_n0(t);
            let q = quad.ln_n0(t)?;
            let deviation = (ode - q).exp_m1().abs();
            if deviation > opts.cross_tol {
                return Err(Error::CrossCheck { t, deviation });
            }
        }
    }
    Ok(SemiclassicalTrajectory { t_grid, n0, converged_periodic: true, periods_to_converge: orbit.periods_to_converge })
}
