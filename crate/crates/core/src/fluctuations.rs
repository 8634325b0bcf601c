//! Linearized quantum fluctuations: the two-mode squeezed variance `V(t)`.
//!
//! The variance obeys
//! `dV/dt = -2 (gamma + eps + lambda n0) V + 2 lambda n0 + 2 gamma + J`,
//! where the memory term `J(t) = 4 gamma lambda ∫_{-∞}^t e^{4 gamma (tau - t)} n0(tau) dtau`
//! is carried as an extra state with `dJ/dt = -4 gamma J + 4 gamma lambda n0`.
//! [`integrate_variance`] integrates this system to its periodic state;
//! [`VarianceQuadrature`] evaluates the equivalent periodic integral directly and serves as
//! the independent check. Below (and at) threshold `n0 = 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{regime_classify, ModelParams, Regime};
use crate::ode::{DenseSolution, Dopri5};
use crate::quad::{gauss_kronrod, Quadrature};
use crate::semiclassical::{periodic_steady_state_with, N0Quadrature, SemiclassicalOptions, SemiclassicalTrajectory};
use crate::spline::PeriodicSpline;

/// Default "much greater than" factor in the linearization validity condition.
pub const VALIDITY_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationOptions {
    pub semiclassical: SemiclassicalOptions,
    pub rtol: f64,
    pub atol: f64,
    pub periodic_tol: f64,
    pub max_periods: usize,
    /// Uniform scan points per period before golden-section refinement.
    pub n_scan: usize,
    /// Golden-section time tolerance as a fraction of the period.
    pub refine_tol: f64,
    pub validity_factor: f64,
    /// Nodes per period for the tabulated `ln n0` used by the quadrature route.
    pub quad_nodes: usize,
}

impl Default for FluctuationOptions {
    fn default() -> Self {
        Self {
            semiclassical: SemiclassicalOptions::default(),
            rtol: 1e-9,
            atol: 1e-12,
            periodic_tol: 1e-8,
            max_periods: 10_000,
            n_scan: 2048,
            refine_tol: 1e-6,
            validity_factor: VALIDITY_FACTOR,
            quad_nodes: 1024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VarianceTrajectory {
    /// Phases in `[0, T)`.
    pub t_grid: Vec<f64>,
    pub v: Vec<f64>,
    pub n0: Vec<f64>,
    pub n0_ref: SemiclassicalTrajectory,
    /// Optimal quadrature angle sum, reported in the laboratory phase convention.
    pub theta_opt: f64,
    pub periods_to_converge: usize,
    pub period: f64,
    dense: DenseSolution<3>,
    /// `ln n0(0)`; the dense state stores `ln n0 - offset`.
    offset: f64,
    zero_field: bool,
}

impl VarianceTrajectory {
    /// `V` at any time (periodic extension).
    pub fn v_at(&self, t: f64) -> f64 {
        self.dense.eval(t.rem_euclid(self.period))[1]
    }

    pub fn n0_at(&self, t: f64) -> f64 {
        if self.zero_field {
            0.0
        } else {
            (self.dense.eval(t.rem_euclid(self.period))[0] + self.offset).exp()
        }
    }

    /// Memory term `J(t)`.
    pub fn memory_at(&self, t: f64) -> f64 {
        self.dense.eval(t.rem_euclid(self.period))[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub value: f64,
    pub bound: f64,
    pub satisfied: bool,
}

impl Criterion {
    fn below(value: f64, bound: f64) -> Self {
        Self { value, bound, satisfied: value < bound }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    /// Duan-Simon sum: `V+ + V- < 2`.
    pub sum_criterion: Criterion,
    /// Product form of inseparability: `V+ V- < 1`.
    pub product_criterion: Criterion,
    /// Reid EPR: `V+ V- < 1/4`.
    pub epr_criterion: Criterion,
    pub inseparable: bool,
    pub epr: bool,
}

/// `classify_entanglement`: evaluates the inseparability and EPR inequalities.
pub fn classify_entanglement(v_plus: f64, v_minus: f64) -> CriteriaReport {
    let sum_criterion = Criterion::below(v_plus + v_minus, 2.0);
    let product_criterion = Criterion::below(v_plus * v_minus, 1.0);
    let epr_criterion = Criterion::below(v_plus * v_minus, 0.25);
    CriteriaReport {
        sum_criterion,
        product_criterion,
        epr_criterion,
        inseparable: sum_criterion.satisfied,
        epr: epr_criterion.satisfied,
    }
}

/// Moments `<n+>`, `<R>`, `<Z>`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentSet {
    pub n_plus: f64,
    pub r: f64,
    pub z: f64,
}

impl MomentSet {
    /// Variance at the optimal quadrature angle, `1 + <R>`.
    pub fn variance(&self) -> f64 {
        1.0 + self.r
    }
}

/// `linearization_validity`:
/// `|fbar/f_th - 1| / ((lambda/gamma) exp(2 (f1/f_th)(gamma/delta)))`.
/// The linear theory is trusted when this exceeds [`VALIDITY_FACTOR`].
pub fn linearization_validity(p: &ModelParams) -> f64 {
    let f_th = p.f_th();
    let distance = (p.modulation.mean() / f_th - 1.0).abs();
    let depth = p.modulation.depth() / f_th;
    let delta = p.modulation.frequency();
    distance / (p.lambda() / p.gamma * (2.0 * depth * p.gamma / delta).exp())
}

/// Photon-number trajectory appropriate for the regime: the converged periodic orbit above
/// threshold, `n0 = 0` otherwise.
pub fn semiclassical_reference(p: &ModelParams, opts: &FluctuationOptions) -> Result<SemiclassicalTrajectory> {
    match regime_classify(p) {
        Regime::AboveThreshold => periodic_steady_state_with(p, &opts.semiclassical),
        Regime::BelowThreshold | Regime::AtThreshold => {
            Ok(SemiclassicalTrajectory::zero(p.period(), opts.semiclassical.grid_points))
        }
    }
}

/// `integrate_variance` with default options.
pub fn integrate_variance(p: &ModelParams, n0: &SemiclassicalTrajectory) -> Result<VarianceTrajectory> {
    integrate_variance_with(p, n0, &FluctuationOptions::default())
}

pub fn integrate_variance_with(
    p: &ModelParams,
    n0: &SemiclassicalTrajectory,
    opts: &FluctuationOptions,
) -> Result<VarianceTrajectory> {
    p.validate()?;
    let zero_field = n0.is_zero();
    if !zero_field && !(n0.converged_periodic && n0.t_grid.first() == Some(&0.0)) {
        return Err(Error::InvalidParameter(
            "variance integration needs a converged periodic photon-number trajectory starting at phase 0".into(),
        ));
    }
    let (gamma, lambda) = (p.gamma, p.lambda());
    let period = p.period();
    let offset = if zero_field { 0.0 } else { n0.n0[0].ln() };
    let n_ref = if zero_field { 0.0 } else { n0.n0[0] };
    let rhs = move |t: f64, y: &[f64; 3]| -> [f64; 3] {
        let eps = p.eps(t);
        let n = n_ref * y[0].exp();
        let du = if zero_field { 0.0 } else { 2.0 * (eps - gamma - lambda * n) };
        let ln = lambda * n;
        [du, -2.0 * (gamma + eps + ln) * y[1] + 2.0 * ln + 2.0 * gamma + y[2], -4.0 * gamma * y[2] + 4.0 * gamma * ln]
    };
    let solver = Dopri5::new(opts.rtol, opts.atol);

    let u0 = 0.0;
    let n_mean = n0.n0.iter().sum::<f64>() / n0.n0.len() as f64;
    let mut state = [u0, 1.0, lambda * n0.n0[0]];
    let contraction_v = (-2.0 * (gamma + p.eps_bar() + lambda * n_mean) * period).exp();
    let contraction_j = (-4.0 * gamma * period).exp();
    let amplification = 1.0 / (1.0 - contraction_v.max(contraction_j)).max(1e-300);

    let probes = 64;
    let mut prev: Option<Vec<[f64; 2]>> = None;
    let mut last_change = f64::INFINITY;
    let mut converged = None;
    for k in 0..opts.max_periods {
        let t_start = k as f64 * period;
        let (end, sol) = solver.integrate_dense(rhs, t_start, state, t_start + period)?;
        let samples: Vec<[f64; 2]> = (0..probes)
            .map(|i| {
                let y = sol.eval(t_start + period * i as f64 / probes as f64);
                [y[1], y[2]]
            })
            .collect();
        if let Some(prev) = &prev {
            let scale_v = samples.iter().fold(1.0f64, |m, s| m.max(s[0].abs()));
            let scale_j = samples.iter().fold(1e-300f64, |m, s| m.max(s[1].abs()));
            let change = samples
                .iter()
                .zip(prev)
                .map(|(a, b)| ((a[0] - b[0]).abs() / scale_v).max((a[1] - b[1]).abs() / scale_j.max(1e-12)))
                .fold(0.0, f64::max);
            last_change = change * amplification;
            if last_change < opts.periodic_tol {
                converged = Some(k + 1);
                break;
            }
        }
        prev = Some(samples);
        // u stays on its converged orbit; pin it to the phase-0 value to stop drift.
        state = [if zero_field { 0.0 } else { u0 }, end[1], end[2]];
    }
    let periods_to_converge =
        converged.ok_or(Error::NoConvergence { periods: opts.max_periods, last_change })?;

    let (_, dense) = solver.integrate_dense(rhs, 0.0, state, period)?;
    let n_scan = opts.n_scan.max(1);
    let t_grid: Vec<f64> = (0..n_scan).map(|i| period * i as f64 / n_scan as f64).collect();
    let mut v = Vec::with_capacity(n_scan);
    let mut n0_samples = Vec::with_capacity(n_scan);
    for &t in &t_grid {
        let y = dense.eval(t);
        v.push(y[1]);
        n0_samples.push(n_ref * y[0].exp());
    }
    Ok(VarianceTrajectory {
        t_grid,
        v,
        n0: n0_samples,
        n0_ref: n0.clone(),
        theta_opt: p.theta_opt(),
        periods_to_converge,
        period,
        dense,
        offset,
        zero_field,
    })
}

/// Regime-aware convenience: photon number then variance.
pub fn variance_trajectory(p: &ModelParams, opts: &FluctuationOptions) -> Result<VarianceTrajectory> {
    let n0 = semiclassical_reference(p, opts)?;
    integrate_variance_with(p, &n0, opts)
}

/// Direct evaluation of the periodic variance integral
/// `V(t) = 2 ∫_{-∞}^t exp(-2 ∫_tau^t (gamma + eps + lambda n0)) [gamma + lambda n0 + J/2](tau) dtau`.
///
/// `n0` comes from [`N0Quadrature`] on a periodic node grid (interpolated in `ln n0`), so this
/// route shares no integrator with [`integrate_variance`].
#[derive(Debug, Clone)]
pub struct VarianceQuadrature<'a> {
    p: &'a ModelParams,
    period: f64,
    h: f64,
    ln_n0: Option<PeriodicSpline>,
    /// `∫_0^{t_j} lambda n0` at the nodes (one extra entry for the full period).
    cumulative: Vec<f64>,
    /// `J(t_j)` at the nodes.
    memory: Vec<f64>,
    /// `ln(2) - ln(1 - exp(-2 G_T))`, `G_T = ∫_0^T (gamma + eps + lambda n0)`.
    log_prefactor: f64,
    quad: Quadrature,
}

impl<'a> VarianceQuadrature<'a> {
    pub fn new(p: &'a ModelParams, nodes: usize) -> Result<Self> {
        p.validate()?;
        let period = p.period();
        let nodes = nodes.max(16);
        let h = period / nodes as f64;
        let (gamma, lambda) = (p.gamma, p.lambda());

        let ln_n0 = match regime_classify(p) {
            Regime::AboveThreshold => {
                let n0q = N0Quadrature::new(p)?;
                let values = (0..nodes).map(|j| n0q.ln_n0(j as f64 * h)).collect::<Result<Vec<_>>>()?;
                Some(PeriodicSpline::new(period, values)?)
            }
            _ => None,
        };

        let mut cumulative = vec![0.0; nodes + 1];
        let mut memory = vec![0.0; nodes + 1];
        if let Some(spline) = &ln_n0 {
            let decay = (-4.0 * gamma * h).exp();
            for j in 0..nodes {
                let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
                let (cell, _) = gauss_kronrod(&mut |s| lambda * spline.eval(s).exp(), a, b);
                cumulative[j + 1] = cumulative[j] + cell;
                let (drive, _) =
                    gauss_kronrod(&mut |s| 4.0 * gamma * lambda * (4.0 * gamma * (s - b)).exp() * spline.eval(s).exp(), a, b);
                memory[j + 1] = decay * memory[j] + drive;
            }
            // Periodic closure: J(0) = J(T) with the homogeneous part added back.
            let j0 = memory[nodes] / (1.0 - (-4.0 * gamma * period).exp());
            for (j, m) in memory.iter_mut().enumerate() {
                *m += (-4.0 * gamma * j as f64 * h).exp() * j0;
            }
        }
        let g_period = gamma * period + p.eps_bar() * period + cumulative[nodes];
        let log_prefactor = 2f64.ln() - (-(-2.0 * g_period).exp_m1()).ln();
        Ok(Self { p, period, h, ln_n0, cumulative, memory, log_prefactor, quad: Quadrature::with_rel_tol(1e-11) })
    }

    fn locate(&self, x: f64) -> (f64, usize, f64) {
        let wraps = (x / self.period).floor();
        let local = x - wraps * self.period;
        let j = ((local / self.h).floor() as usize).min(self.cumulative.len() - 2);
        (wraps, j, j as f64 * self.h)
    }

    /// Photon number used by this route.
    pub fn n0(&self, t: f64) -> f64 {
        self.ln_n0.as_ref().map_or(0.0, |s| s.eval(t).exp())
    }

    /// `∫_0^x lambda n0`.
    fn cumulative_at(&self, x: f64) -> f64 {
        let Some(spline) = &self.ln_n0 else { return 0.0 };
        let (wraps, j, tj) = self.locate(x);
        let local = x - wraps * self.period;
        let lambda = self.p.lambda();
        let (part, _) = gauss_kronrod(&mut |s| lambda * spline.eval(s).exp(), tj, local);
        wraps * self.cumulative[self.cumulative.len() - 1] + self.cumulative[j] + part
    }

    /// Memory term `J(x)`.
    pub fn memory_at(&self, x: f64) -> f64 {
        let Some(spline) = &self.ln_n0 else { return 0.0 };
        let (wraps, j, tj) = self.locate(x);
        let local = x - wraps * self.period;
        let (gamma, lambda) = (self.p.gamma, self.p.lambda());
        let (part, _) = gauss_kronrod(
            &mut |s| 4.0 * gamma * lambda * (4.0 * gamma * (s - local)).exp() * spline.eval(s).exp(),
            tj,
            local,
        );
        (-4.0 * gamma * (local - tj)).exp() * self.memory[j] + part
    }

    /// `G(x) = ∫_0^x (gamma + eps + lambda n0)`.
    fn g(&self, x: f64) -> f64 {
        self.p.gamma * x + self.p.eps_integral(x) + self.cumulative_at(x)
    }

    /// `V(t)`.
    pub fn variance(&self, t: f64) -> Result<f64> {
        let g_t = self.g(t);
        let gamma = self.p.gamma;
        let lambda = self.p.lambda();
        let exponent = |s: f64| -2.0 * (g_t - self.g(t - s));
        let n = 256;
        let shift = (0..=n)
            .map(|i| exponent(self.period * i as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        let integral = self.quad.integrate(
            |s| {
                let tau = t - s;
                let source = gamma + lambda * self.n0(tau) + 0.5 * self.memory_at(tau);
                (exponent(s) - shift).exp() * source
            },
            0.0,
            self.period,
        )?;
        if !(integral > 0.0) {
            return Err(Error::TruncationFailure(format!("variance integral non-positive at t = {t}")));
        }
        Ok((self.log_prefactor + shift + integral.ln()).exp())
    }
}

/// `asymptotic_variance`: Eq.-(14)-type periodic integral at time `t`.
pub fn asymptotic_variance(p: &ModelParams, t: f64) -> Result<f64> {
    VarianceQuadrature::new(p, FluctuationOptions::default().quad_nodes)?.variance(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VminResult {
    pub v_min: f64,
    /// Phase of the minimum in `[0, T)`; minima recur at `t0 + m T`.
    pub t0: f64,
    pub n0_at_t0: f64,
    pub criteria: CriteriaReport,
    pub regime: Regime,
    pub validity_ratio: f64,
    /// Set when the validity ratio is below the configured factor.
    pub validity_warning: bool,
}

/// `find_vmin` with default options.
pub fn find_vmin(p: &ModelParams) -> Result<VminResult> {
    find_vmin_with(p, &FluctuationOptions::default())
}

pub fn find_vmin_with(p: &ModelParams, opts: &FluctuationOptions) -> Result<VminResult> {
    let traj = variance_trajectory(p, opts)?;
    Ok(locate_minimum(p, &traj, opts))
}

/// Relative peak-to-peak ripple below which a variance curve counts as flat.
pub const FLAT_TOLERANCE: f64 = 1e-7;

/// Scans a converged variance trajectory and refines its minimum.
pub fn locate_minimum(p: &ModelParams, traj: &VarianceTrajectory, opts: &FluctuationOptions) -> VminResult {
    let period = traj.period;
    let (imin, &vscan) = traj
        .v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty scan");
    let vmax = traj.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // Ripple below this is integration noise (tolerances are ~1e-9).
    let (t0, v_min) = if vmax - vscan <= FLAT_TOLERANCE * vmax.abs().max(1.0) {
        // Flat: no preferred phase.
        (0.0, traj.v_at(0.0))
    } else {
        let step = period / traj.t_grid.len() as f64;
        let center = traj.t_grid[imin];
        let (t, v) = golden_section(|t| traj.v_at(t), center - step, center + step, opts.refine_tol * period);
        if v <= vscan {
            (t.rem_euclid(period), v)
        } else {
            (center, vscan)
        }
    };
    let validity_ratio = linearization_validity(p);
    VminResult {
        v_min,
        t0,
        n0_at_t0: traj.n0_at(t0),
        criteria: classify_entanglement(v_min, v_min),
        regime: regime_classify(p),
        validity_ratio,
        validity_warning: validity_ratio < opts.validity_factor,
    }
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub fbar_over_fth: f64,
    pub f1_over_fbar: f64,
    pub regime: Regime,
    pub validity_ratio: f64,
    pub result: std::result::Result<VminResult, Error>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    /// Ordered by modulation level, then by pump ratio.
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Minimum variances of one modulation level, in pump-grid order (NaN for failed cells).
    pub fn curve(&self, f1_over_fbar: f64) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.f1_over_fbar == f1_over_fbar)
            .map(|r| (r.fbar_over_fth, r.result.as_ref().map_or(f64::NAN, |v| v.v_min)))
            .collect()
    }
}

/// `sweep_vmin`: minimum variance over a grid of pump ratios and modulation depths, keeping the
/// coupling, damping and modulation frequency of `p`. Failed cells are recorded, not fatal.
pub fn sweep_vmin(p: &ModelParams, fbar_grid: &[f64], f1_levels: &[f64], opts: &FluctuationOptions) -> SweepTable {
    let cells: Vec<(f64, f64)> = f1_levels.iter().flat_map(|&f1| fbar_grid.iter().map(move |&fb| (fb, f1))).collect();
    let rows = cells
        .par_iter()
        .map(|&(fb, f1)| match p.with_pump(fb, f1) {
            Ok(cell) => SweepRow {
                fbar_over_fth: fb,
                f1_over_fbar: f1,
                regime: regime_classify(&cell),
                validity_ratio: linearization_validity(&cell),
                result: find_vmin_with(&cell, opts),
            },
            Err(e) => SweepRow {
                fbar_over_fth: fb,
                f1_over_fbar: f1,
                regime: Regime::BelowThreshold,
                validity_ratio: f64::NAN,
                result: Err(e),
            },
        })
        .collect();
    SweepTable { rows }
}
