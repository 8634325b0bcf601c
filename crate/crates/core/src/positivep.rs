//! Positive-P stochastic trajectories for the pump-eliminated NOPO.
//!
//! Ito equations (the `2` pair follows by exchanging subscripts):
//!
//! ```text
//! d alpha1 = [-(gamma + lambda alpha2 beta2) alpha1 + eps(t) beta2] dt + dW_alpha1
//! d beta1  = [-(gamma + lambda alpha2 beta2) beta1  + eps(t) alpha2] dt + dW_beta1
//! <dW_alpha1 dW_alpha2> = (eps - lambda alpha1 alpha2) dt
//! <dW_beta1  dW_beta2>  = (eps - lambda beta1 beta2) dt
//! ```
//!
//! All other second moments of the increments vanish.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::{run_blocks, trajectory_rng, Accumulator, Moments, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::model::{regime_classify, ModelParams, Regime};
use crate::semiclassical::{converge_orbit, SemiclassicalOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PPState {
    pub alpha1: Complex64,
    pub alpha2: Complex64,
    pub beta1: Complex64,
    pub beta2: Complex64,
    pub t: f64,
}

impl PPState {
    pub fn vacuum(t: f64) -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self { alpha1: z, alpha2: z, beta1: z, beta2: z, t }
    }

    /// Classical point `alpha = beta = sqrt(n0)` on both modes (phase sum zero).
    pub fn classical(n0: f64, t: f64) -> Self {
        let a = Complex64::new(n0.max(0.0).sqrt(), 0.0);
        Self { alpha1: a, alpha2: a, beta1: a, beta2: a, t }
    }

    pub fn components(&self) -> [Complex64; 4] {
        [self.alpha1, self.alpha2, self.beta1, self.beta2]
    }

    pub fn is_within(&self, bound: f64) -> bool {
        let b2 = bound * bound;
        self.components().iter().all(|c| c.is_finite() && c.norm_sqr() <= b2)
    }

    pub fn n1(&self) -> Complex64 {
        self.alpha1 * self.beta1
    }

    pub fn n2(&self) -> Complex64 {
        self.alpha2 * self.beta2
    }

    /// `(alpha1 - beta2)(beta1 - alpha2)`, whose average is `<R>`.
    pub fn r(&self) -> Complex64 {
        (self.alpha1 - self.beta2) * (self.beta1 - self.alpha2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseIncrement {
    pub dw_alpha1: Complex64,
    pub dw_alpha2: Complex64,
    pub dw_beta1: Complex64,
    pub dw_beta2: Complex64,
}

impl NoiseIncrement {
    /// Sum/difference construction from four standard normals:
    /// `dW_1,2 = sqrt(d/2) (eta_a ± i eta_b) sqrt(dt)` gives `<dW_1 dW_2> = d dt` and
    /// `<dW_1^2> = <dW_2^2> = 0`.
    pub fn from_gaussians(d_alpha: Complex64, d_beta: Complex64, eta: [f64; 4], dt: f64) -> Self {
        let sdt = dt.sqrt();
        let sa = (d_alpha * 0.5).sqrt() * sdt;
        let sb = (d_beta * 0.5).sqrt() * sdt;
        Self {
            dw_alpha1: sa * Complex64::new(eta[0], eta[1]),
            dw_alpha2: sa * Complex64::new(eta[0], -eta[1]),
            dw_beta1: sb * Complex64::new(eta[2], eta[3]),
            dw_beta2: sb * Complex64::new(eta[2], -eta[3]),
        }
    }
}

/// Diffusion coefficients `(eps - lambda alpha1 alpha2, eps - lambda beta1 beta2)`.
pub fn diffusion(state: &PPState, eps_t: f64, lambda: f64) -> (Complex64, Complex64) {
    (eps_t - lambda * state.alpha1 * state.alpha2, eps_t - lambda * state.beta1 * state.beta2)
}

/// `sample_noise`: correlated complex increments over `dt`.
pub fn sample_noise<R: Rng + ?Sized>(state: &PPState, eps_t: f64, lambda: f64, dt: f64, rng: &mut R) -> NoiseIncrement {
    let (d_alpha, d_beta) = diffusion(state, eps_t, lambda);
    let eta = [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ];
    NoiseIncrement::from_gaussians(d_alpha, d_beta, eta, dt)
}

/// Deterministic part of the Ito equations.
pub fn drift(state: &PPState, eps_t: f64, gamma: f64, lambda: f64) -> [Complex64; 4] {
    let damp1 = gamma + lambda * state.alpha2 * state.beta2;
    let damp2 = gamma + lambda * state.alpha1 * state.beta1;
    [
        -damp1 * state.alpha1 + eps_t * state.beta2,
        -damp2 * state.alpha2 + eps_t * state.beta1,
        -damp1 * state.beta1 + eps_t * state.alpha2,
        -damp2 * state.beta2 + eps_t * state.alpha1,
    ]
}

/// Divergence bound `factor * sqrt(gamma / lambda)`.
pub fn divergence_guard(p: &ModelParams, factor: f64) -> f64 {
    factor * (p.gamma / p.lambda()).sqrt()
}

/// One Euler-Maruyama step with an explicit noise increment (`None` = noise switched off).
pub fn advance(state: &PPState, p: &ModelParams, dt: f64, noise: Option<&NoiseIncrement>) -> PPState {
    let eps = p.eps(state.t);
    let d = drift(state, eps, p.gamma, p.lambda());
    let mut next = PPState {
        alpha1: state.alpha1 + d[0] * dt,
        alpha2: state.alpha2 + d[1] * dt,
        beta1: state.beta1 + d[2] * dt,
        beta2: state.beta2 + d[3] * dt,
        t: state.t + dt,
    };
    if let Some(w) = noise {
        next.alpha1 += w.dw_alpha1;
        next.alpha2 += w.dw_alpha2;
        next.beta1 += w.dw_beta1;
        next.beta2 += w.dw_beta2;
    }
    next
}

/// `step_trajectory`: one Ito Euler-Maruyama step, failing if the state leaves the
/// default divergence guard.
pub fn step_trajectory<R: Rng + ?Sized>(state: &PPState, p: &ModelParams, dt: f64, rng: &mut R) -> Result<PPState> {
    step_guarded(state, p, dt, divergence_guard(p, PositivePOptions::default().guard_factor), rng)
}

fn step_guarded<R: Rng + ?Sized>(state: &PPState, p: &ModelParams, dt: f64, guard: f64, rng: &mut R) -> Result<PPState> {
    let noise = sample_noise(state, p.eps(state.t), p.lambda(), dt, rng);
    let next = advance(state, p, dt, Some(&noise));
    if next.is_within(guard) {
        Ok(next)
    } else {
        Err(Error::Divergence { t: next.t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivePOptions {
    pub dt: f64,
    /// Time discarded before the first recorded grid point.
    pub relaxation: f64,
    pub guard_factor: f64,
    /// Maximum tolerated fraction of diverged trajectories.
    pub divergence_budget: f64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Switch off the noise (classical limit).
    pub noise: bool,
    pub semiclassical: SemiclassicalOptions,
}

impl Default for PositivePOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            relaxation: 5.0,
            guard_factor: 1e3,
            divergence_budget: 1e-3,
            workers: None,
            noise: true,
            semiclassical: SemiclassicalOptions { grid_points: 16, cross_points: 0, ..SemiclassicalOptions::default() },
        }
    }
}

/// Per-trajectory observables at one time, real parts:
/// `[d n1/dt, d n2/dt, dR/dt, dZ/dt, n1, n2, R, Z, n+^2, n+ R]`.
/// The derivatives are finite differences along the trajectory.
pub const OBSERVABLES: usize = 10;
const IDX_DN1: usize = 0;
const IDX_DN2: usize = 1;
const IDX_DR: usize = 2;
const IDX_DZ: usize = 3;
const IDX_N1: usize = 4;
const IDX_N2: usize = 5;
const IDX_R: usize = 6;
const IDX_Z: usize = 7;
const IDX_N2P: usize = 8;
const IDX_NR: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct EnsembleMoments {
    pub t_grid: Vec<f64>,
    pub n_plus: Vec<Estimate>,
    pub r: Vec<Estimate>,
    pub z: Vec<Estimate>,
    pub v: Vec<Estimate>,
    /// `<alpha1 beta1>` and `<alpha2 beta2>` separately.
    pub n1: Vec<Estimate>,
    pub n2: Vec<Estimate>,
    pub n_traj: usize,
    pub discarded: usize,
    pub seed: u64,
    pub dt: f64,
    /// Full per-time statistics of [`OBSERVABLES`], used by [`check_moment_equations`].
    pub stats: Vec<Moments<OBSERVABLES>>,
}

struct PPAccumulator {
    stats: Vec<Moments<OBSERVABLES>>,
    discarded: usize,
}

impl Accumulator for PPAccumulator {
    fn merge(&mut self, later: Self) {
        for (a, b) in self.stats.iter_mut().zip(&later.stats) {
            a.merge(b);
        }
        self.discarded += later.discarded;
    }
}

/// Step indices (from the start of the relaxation window) at which each grid time is recorded.
fn record_steps(t_grid: &[f64], t_start: f64, dt: f64) -> Result<Vec<usize>> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("time grid must be non-empty".into()));
    }
    let steps: Vec<usize> = t_grid.iter().map(|&t| ((t - t_start) / dt).round() as usize).collect();
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be increasing with spacing >= dt".into()));
    }
    Ok(steps)
}

/// Initial positive-P point: the deterministic periodic orbit (zero field below threshold).
pub fn initial_state(p: &ModelParams, t_start: f64, opts: &SemiclassicalOptions) -> Result<PPState> {
    Ok(match regime_classify(p) {
        Regime::AboveThreshold => PPState::classical(converge_orbit(p, opts)?.n0(t_start), t_start),
        _ => PPState::vacuum(t_start),
    })
}

/// Finite-difference slopes along one trajectory.
fn with_slopes(t_grid: &[f64], rec: &[[f64; 6]]) -> Vec<[f64; OBSERVABLES]> {
    let n = rec.len();
    (0..n)
        .map(|k| {
            let (lo, hi) = if n == 1 {
                (0, 0)
            } else if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            let span = t_grid[hi] - t_grid[lo];
            let slope = |i: usize| if span > 0.0 { (rec[hi][i] - rec[lo][i]) / span } else { 0.0 };
            let x = rec[k];
            [slope(0), slope(1), slope(2), slope(3), x[0], x[1], x[2], x[3], x[4], x[5]]
        })
        .collect()
}

/// `simulate_ensemble` with default options.
pub fn simulate_ensemble(p: &ModelParams, n_traj: usize, t_grid: &[f64], seed: u64) -> Result<EnsembleMoments> {
    simulate_ensemble_with(p, n_traj, t_grid, seed, &PositivePOptions::default())
}

pub fn simulate_ensemble_with(
    p: &ModelParams,
    n_traj: usize,
    t_grid: &[f64],
    seed: u64,
    opts: &PositivePOptions,
) -> Result<EnsembleMoments> {
    p.validate()?;
    if n_traj < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 trajectories, got {n_traj}")));
    }
    if !(opts.dt > 0.0) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    let t_start = t_grid.first().copied().unwrap_or(0.0) - opts.relaxation;
    let steps = record_steps(t_grid, t_start, opts.dt)?;
    let start = initial_state(p, t_start, &opts.semiclassical)?;
    let guard = divergence_guard(p, opts.guard_factor);
    let total = *steps.last().expect("non-empty");

    let fresh = || PPAccumulator { stats: vec![Moments::default(); t_grid.len()], discarded: 0 };
    let run = |index: usize, acc: &mut PPAccumulator| {
        let mut rng = trajectory_rng(seed, index as u64);
        let mut state = start;
        let mut rec = Vec::with_capacity(steps.len());
        let mut next = 0;
        for step in 0..=total {
            if step == steps[next] {
                let (n1, n2, r) = (state.n1(), state.n2(), state.r());
                let np = n1 + n2;
                let dn = n1 - n2;
                let z = dn * dn + np;
                rec.push([n1.re, n2.re, r.re, z.re, (np * np).re, (np * r).re]);
                next += 1;
                if next == steps.len() {
                    break;
                }
            }
            state.t = t_start + step as f64 * opts.dt;
            let advanced = if opts.noise {
                step_guarded(&state, p, opts.dt, guard, &mut rng)
            } else {
                let s = advance(&state, p, opts.dt, None);
                if s.is_within(guard) { Ok(s) } else { Err(Error::Divergence { t: s.t }) }
            };
            match advanced {
                Ok(s) => state = s,
                Err(_) => {
                    acc.discarded += 1;
                    return;
                }
            }
        }
        for (m, y) in acc.stats.iter_mut().zip(with_slopes(t_grid, &rec)) {
            m.push(&y);
        }
    };
    let acc = run_blocks(n_traj, opts.workers, fresh, run);
    if acc.discarded as f64 > opts.divergence_budget * n_traj as f64 {
        return Err(Error::DivergenceBudget { discarded: acc.discarded, n_traj });
    }

    let pick = |c: [f64; OBSERVABLES]| -> Vec<Estimate> {
        acc.stats
            .iter()
            .map(|m| {
                let (mean, stderr) = m.linear(&c);
                Estimate { mean, stderr }
            })
            .collect()
    };
    let unit = |i: usize| {
        let mut c = [0.0; OBSERVABLES];
        c[i] = 1.0;
        c
    };
    let mut c_np = [0.0; OBSERVABLES];
    c_np[IDX_N1] = 1.0;
    c_np[IDX_N2] = 1.0;
    let r = pick(unit(IDX_R));
    let v = r.iter().map(|e| Estimate { mean: 1.0 + e.mean, stderr: e.stderr }).collect();
    Ok(EnsembleMoments {
        t_grid: t_grid.to_vec(),
        n_plus: pick(c_np),
        r,
        z: pick(unit(IDX_Z)),
        v,
        n1: pick(unit(IDX_N1)),
        n2: pick(unit(IDX_N2)),
        n_traj,
        discarded: acc.discarded,
        seed,
        dt: opts.dt,
        stats: acc.stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
}

impl Residual {
    /// `|mean| / stderr`, zero when both vanish.
    pub fn sigma(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.mean.abs() / self.stderr
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResidualReport {
    /// Residuals of the `<n+>`, `<R>` and `<Z>` moment equations at interior grid points.
    pub n_plus: Vec<Residual>,
    pub r: Vec<Residual>,
    pub z: Vec<Residual>,
}

impl ResidualReport {
    pub fn max_sigma(&self) -> f64 {
        self.n_plus.iter().chain(&self.r).chain(&self.z).map(Residual::sigma).fold(0.0, f64::max)
    }

    /// Mean and root-mean-square of the signed z-scores over all residuals; close to 0 and 1
    /// when the moment equations hold and only sampling noise remains.
    pub fn z_summary(&self) -> (f64, f64) {
        let z: Vec<f64> = self
            .n_plus
            .iter()
            .chain(&self.r)
            .chain(&self.z)
            .filter(|r| r.stderr > 0.0)
            .map(|r| r.mean / r.stderr)
            .collect();
        if z.is_empty() {
            return (0.0, 0.0);
        }
        let n = z.len() as f64;
        (z.iter().sum::<f64>() / n, (z.iter().map(|x| x * x).sum::<f64>() / n).sqrt())
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.max_sigma() <= sigmas
    }
}

/// `check_moment_equations`: residuals of the exact Ito moment equations
///
/// ```text
/// d<n+>/dt = (2 eps - 2 gamma - lambda) <n+> - lambda <n+^2> - 2 eps <R> + lambda <Z>
/// d<R>/dt  = -(2 eps + 2 gamma + lambda) <R> - lambda <n+ R> - 2 eps + lambda <Z>
/// d<Z>/dt  = -4 gamma <Z> + 2 gamma <n+>
/// ```
///
/// with derivatives from central differences of the ensemble and standard errors from the
/// full across-trajectory covariance of every term.
pub fn check_moment_equations(moments: &EnsembleMoments, p: &ModelParams) -> ResidualReport {
    let (gamma, lambda) = (p.gamma, p.lambda());
    let mut report = ResidualReport::default();
    let n = moments.t_grid.len();
    for k in 1..n.saturating_sub(1) {
        let t = moments.t_grid[k];
        let eps = p.eps(t);
        let m = &moments.stats[k];
        let eval = |c: [f64; OBSERVABLES], constant: f64| {
            let (mean, stderr) = m.linear(&c);
            Residual { t, mean: mean + constant, stderr }
        };
        let mut c = [0.0; OBSERVABLES];
        c[IDX_DN1] = 1.0;
        c[IDX_DN2] = 1.0;
        c[IDX_N1] = -(2.0 * eps - 2.0 * gamma - lambda);
        c[IDX_N2] = c[IDX_N1];
        c[IDX_N2P] = lambda;
        c[IDX_R] = 2.0 * eps;
        c[IDX_Z] = -lambda;
        report.n_plus.push(eval(c, 0.0));

        let mut c = [0.0; OBSERVABLES];
        c[IDX_DR] = 1.0;
        c[IDX_R] = 2.0 * eps + 2.0 * gamma + lambda;
        c[IDX_NR] = lambda;
        c[IDX_Z] = -lambda;
        report.r.push(eval(c, 2.0 * eps));

        let mut c = [0.0; OBSERVABLES];
        c[IDX_DZ] = 1.0;
        c[IDX_Z] = 4.0 * gamma;
        c[IDX_N1] = -2.0 * gamma;
        c[IDX_N2] = -2.0 * gamma;
        report.z.push(eval(c, 0.0));
    }
    report
}

/// Uniform grid helper: `n` points from `t0` with spacing `step`.
pub fn uniform_grid(t0: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t0 + step * i as f64).collect()
}

/// Convenience seed for callers without one.
pub fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::trajectory_rng;
    use crate::semiclassical::integrate_n0;

    fn params(lambda: f64, r: f64, f1: f64) -> ModelParams {
        ModelParams::from_lambda(lambda, 25.0, r, f1, 2.0).unwrap()
    }

    #[test]
    fn noise_covariance_matches_diffusion() {
        // Stationary above threshold: lambda alpha1 alpha2 = eps - gamma, so d = gamma.
        let p = params(1e-2, 2.0, 0.0);
        let n0 = (p.eps_bar() - p.gamma) / p.lambda();
        let state = PPState::classical(n0, 0.0);
        let dt = 1e-3;
        let mut rng = trajectory_rng(11, 0);
        let samples = 100_000;
        let (mut cross, mut cross2, mut self1, mut ab) =
            (Complex64::new(0.0, 0.0), 0.0, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for _ in 0..samples {
            let w = sample_noise(&state, p.eps_bar(), p.lambda(), dt, &mut rng);
            let c = w.dw_alpha1 * w.dw_alpha2;
            cross += c;
            cross2 += c.norm_sqr();
            self1 += w.dw_alpha1 * w.dw_alpha1;
            ab += w.dw_alpha1 * w.dw_beta2;
        }
        let n = samples as f64;
        let mean = cross / n;
        let se = (cross2 / n - mean.norm_sqr()).sqrt() / n.sqrt();
        assert!((mean.re - p.gamma * dt).abs() < 3.0 * se, "{mean} vs {}", p.gamma * dt);
        assert!(mean.im.abs() < 3.0 * se);
        assert!((self1 / n).norm() < 3.0 * se * 1.5);
        assert!((ab / n).norm() < 3.0 * se * 1.5);
    }

    #[test]
    fn zero_field_gives_zero_increments() {
        let mut rng = trajectory_rng(3, 0);
        let w = sample_noise(&PPState::vacuum(0.0), 0.0, 0.5, 1e-3, &mut rng);
        for c in [w.dw_alpha1, w.dw_alpha2, w.dw_beta1, w.dw_beta2] {
            assert_eq!(c, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn sqrt_branch_does_not_change_statistics() {
        // Negating the square root is the same as negating both Gaussians.
        let d = Complex64::new(-0.3, 1.7);
        let eta = [0.4, -1.2, 0.9, 0.1];
        let a = NoiseIncrement::from_gaussians(d, d, eta, 1e-3);
        let b = NoiseIncrement::from_gaussians(d, d, eta.map(|x| -x), 1e-3);
        assert!((a.dw_alpha1 * a.dw_alpha2 - b.dw_alpha1 * b.dw_alpha2).norm() < 1e-15);
        assert_eq!(a.dw_alpha1, -b.dw_alpha1);
        // Product has mean d dt: (eta_a^2 + eta_b^2) d dt / 2.
        let prod = a.dw_alpha1 * a.dw_alpha2;
        let expected = d * 0.5 * (eta[0] * eta[0] + eta[1] * eta[1]) * 1e-3;
        assert!((prod - expected).norm() < 1e-15);
    }

    #[test]
    fn noise_free_steps_follow_photon_number_equation() {
        let p = params(1e-2, 2.0, 0.5);
        let n0 = 30.0;
        let dt = 1e-4;
        let mut s = PPState::classical(n0, 0.0);
        for _ in 0..2 {
            s = advance(&s, &p, dt, None);
        }
        let reference = integrate_n0(&p, (0.0, 2.0 * dt), n0, 2).unwrap();
        let n = s.n1().re;
        assert!((n - reference.n0[1]).abs() < 10.0 * dt * dt * n0 * 10.0);
        assert!((s.n1() - s.n2()).norm() < 1e-12);
    }

    #[test]
    fn decay_without_pump() {
        let p = params(1e-6, 0.0, 0.0);
        let dt = 1e-3;
        let mut s = PPState::classical(4.0, 0.0);
        for _ in 0..1000 {
            s = advance(&s, &p, dt, None);
        }
        assert!((s.alpha1.re - 2.0 * (-1.0f64).exp()).abs() < 2e-3);
    }

    #[test]
    fn vacuum_kick_has_pump_covariance() {
        let p = params(1e-2, 0.5, 0.0);
        let eps = p.eps(0.0);
        let dt = 1e-3;
        let n = 50_000;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut rng = trajectory_rng(5, i);
            let s = step_trajectory(&PPState::vacuum(0.0), &p, dt, &mut rng).unwrap();
            acc += s.alpha1 * s.alpha2;
        }
        let mean = acc / n as f64;
        // sd of alpha1 alpha2 per sample is eps dt / sqrt(2) * sqrt(2) ~ eps dt
        assert!((mean.re - eps * dt).abs() < 4.0 * eps * dt / (n as f64).sqrt() * 1.5);
    }

    #[test]
    fn zero_field_ensemble_is_vacuum() {
        let p = params(1e-2, 0.0, 0.0);
        let grid = uniform_grid(0.0, 0.05, 5);
        let m = simulate_ensemble_with(&p, 8, &grid, 1, &PositivePOptions { relaxation: 0.1, ..Default::default() }).unwrap();
        for k in 0..5 {
            assert_eq!(m.v[k].mean, 1.0);
            assert_eq!(m.n_plus[k].mean, 0.0);
        }
        let rep = check_moment_equations(&m, &p);
        assert_eq!(rep.max_sigma(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = params(1e-2, 2.0, 0.0);
        assert!(simulate_ensemble(&p, 1, &[0.0, 0.1], 0).is_err());
        assert!(simulate_ensemble(&p, 4, &[0.1, 0.1], 0).is_err());
        assert!(simulate_ensemble(&p, 4, &[], 0).is_err());
    }

    #[test]
    fn classical_limit_reproduces_orbit() {
        let p = params(1e-2, 2.0, 0.5);
        let opts = PositivePOptions { noise: false, dt: 1e-4, ..Default::default() };
        let grid = uniform_grid(0.0, 0.25, 13);
        let m = simulate_ensemble_with(&p, 2, &grid, 0, &opts).unwrap();
        let orbit = converge_orbit(&p, &SemiclassicalOptions::default()).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let n = orbit.n0(t);
            assert!((m.n1[k].mean - n).abs() / n < 2e-3, "t = {t}: {} vs {n}", m.n1[k].mean);
            assert!(m.r[k].mean.abs() < 1e-9);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let p = params(5e-2, 1.5, 0.5);
        let grid = uniform_grid(0.0, 0.1, 6);
        let run = |w| {
            let opts = PositivePOptions { workers: Some(w), relaxation: 0.5, ..Default::default() };
            simulate_ensemble_with(&p, 150, &grid, 42, &opts).unwrap()
        };
        let (a, b) = (run(1), run(3));
        for k in 0..grid.len() {
            assert_eq!(a.v[k].mean.to_bits(), b.v[k].mean.to_bits());
            assert_eq!(a.z[k].stderr.to_bits(), b.z[k].stderr.to_bits());
        }
    }
}
