//! Quantum state diffusion in a truncated two-mode Fock basis.
//!
//! Hamiltonian `H = i eps(t) (a1† a2† - a1 a2)`, channels `L1 = sqrt(2 gamma) a1`,
//! `L2 = sqrt(2 gamma) a2`, `L3 = sqrt(2 lambda) a1 a2`. Each step is a Gisin-Percival Euler
//! update followed by renormalization; the Lindblad evolution is recovered as the ensemble mean.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensemble::{run_blocks, trajectory_rng, Accumulator, Moments};
use crate::error::{Error, Result};
use crate::model::{regime_classify, ModelParams, Regime};
use crate::positivep::Estimate;
use crate::semiclassical::{converge_orbit, SemiclassicalOptions};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed, exact zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            if last == Some((r, c)) {
                *vals.last_mut().expect("previous entry") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = Self { dim, row_ptr, cols, vals };
        m.prune();
        m
    }

    fn prune(&mut self) {
        let mut row_ptr = vec![0; self.dim + 1];
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.vals[k] != ZERO {
                    cols.push(self.cols[k]);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, Complex64)> {
        (0..self.dim)
            .flat_map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, k)))
            .map(|(r, k)| (r, self.cols[k], self.vals[k]))
            .collect()
    }

    /// `out = self * x`.
    pub fn apply_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        for r in 0..self.dim {
            let mut acc = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            out[r] = acc;
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.dim];
        self.apply_into(x, &mut out);
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().into_iter().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let (mid, a) = (self.cols[k], self.vals[k]);
                for j in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    out.push((r, other.cols[j], a * other.vals[j]));
                }
            }
        }
        Self::from_triplets(self.dim, out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut t = self.triplets();
        t.extend(other.triplets());
        Self::from_triplets(self.dim, t)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_triplets(self.dim, self.triplets().into_iter().map(|(r, c, v)| (r, c, v * s)).collect())
    }

    /// `(row, col)` entry, zero if absent.
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        (self.row_ptr[row]..self.row_ptr[row + 1]).find(|&k| self.cols[k] == col).map_or(ZERO, |k| self.vals[k])
    }
}

/// Default limit on the two-mode dimension `(n_max + 1)^2`.
pub const DIMENSION_BUDGET: usize = 40_000;

/// Mode operators and QSD channels on the truncated basis `|n1, n2>`, index `n1 (n_max + 1) + n2`.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub n_max: usize,
    pub dim: usize,
    pub a1: SparseMatrix,
    pub a2: SparseMatrix,
    /// `a1† a2† - a1 a2`, so that `-i H = eps(t) * pump`.
    pub pump: SparseMatrix,
    /// `L1, L2, L3`.
    pub channels: [SparseMatrix; 3],
    /// Diagonal of `sum_j Lj† Lj`.
    pub loss_diag: Vec<f64>,
}

impl OperatorSet {
    pub fn index(&self, n1: usize, n2: usize) -> usize {
        n1 * (self.n_max + 1) + n2
    }

    pub fn number1(&self) -> SparseMatrix {
        self.a1.adjoint().mul(&self.a1)
    }

    pub fn number2(&self) -> SparseMatrix {
        self.a2.adjoint().mul(&self.a2)
    }
}

/// `build_operators` with the default dimension budget.
pub fn build_operators(p: &ModelParams, n_max: usize) -> Result<OperatorSet> {
    build_operators_with_budget(p, n_max, DIMENSION_BUDGET)
}

pub fn build_operators_with_budget(p: &ModelParams, n_max: usize, budget: usize) -> Result<OperatorSet> {
    p.validate()?;
    let side = n_max + 1;
    let dim = side.checked_mul(side).unwrap_or(usize::MAX);
    if dim > budget {
        return Err(Error::DimensionOverflow { dim, budget });
    }
    let idx = |n1: usize, n2: usize| n1 * side + n2;
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    for n1 in 0..side {
        for n2 in 0..side {
            if n1 > 0 {
                t1.push((idx(n1 - 1, n2), idx(n1, n2), Complex64::new((n1 as f64).sqrt(), 0.0)));
            }
            if n2 > 0 {
                t2.push((idx(n1, n2 - 1), idx(n1, n2), Complex64::new((n2 as f64).sqrt(), 0.0)));
            }
        }
    }
    let a1 = SparseMatrix::from_triplets(dim, t1);
    let a2 = SparseMatrix::from_triplets(dim, t2);
    let pair = a1.mul(&a2);
    let pump = pair.adjoint().add(&pair.scale(Complex64::new(-1.0, 0.0)));
    let (g, l) = ((2.0 * p.gamma).sqrt(), (2.0 * p.lambda()).sqrt());
    let channels = [a1.scale(g.into()), a2.scale(g.into()), pair.scale(l.into())];
    let loss_diag = (0..dim)
        .map(|i| {
            let (n1, n2) = ((i / side) as f64, (i % side) as f64);
            2.0 * p.gamma * (n1 + n2) + 2.0 * p.lambda() * n1 * n2
        })
        .collect();
    Ok(OperatorSet { n_max, dim, a1, a2, pump, channels, loss_diag })
}

/// Normalized pure state on the truncated basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    pub n_max: usize,
    pub amps: Vec<Complex64>,
    pub t: f64,
}

impl FockState {
    pub fn vacuum(n_max: usize, t: f64) -> Self {
        let mut amps = vec![ZERO; (n_max + 1) * (n_max + 1)];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { n_max, amps, t }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.amps.iter_mut().for_each(|a| *a /= n);
        }
    }

    /// Population with either mode above `n_max - 3`.
    pub fn tail_population(&self) -> f64 {
        let side = self.n_max + 1;
        let edge = self.n_max.saturating_sub(3) + 1;
        let mut tail = 0.0;
        for n1 in 0..side {
            for n2 in 0..side {
                if n1 >= edge || n2 >= edge {
                    tail += self.amps[n1 * side + n2].norm_sqr();
                }
            }
        }
        tail
    }
}

pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `<psi| op |psi>`.
pub fn expectation(state: &FockState, op: &SparseMatrix) -> Result<Complex64> {
    if op.dim() != state.amps.len() {
        return Err(Error::DimensionMismatch { expected: op.dim(), found: state.amps.len() });
    }
    Ok(inner(&state.amps, &op.apply(&state.amps)))
}

/// Tail-population health threshold.
pub const TAIL_TOLERANCE: f64 = 1e-6;

/// Scratch buffers reused across steps.
#[derive(Debug, Clone)]
pub struct Workspace {
    lpsi: [Vec<Complex64>; 3],
    pump: Vec<Complex64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self { lpsi: std::array::from_fn(|_| vec![ZERO; dim]), pump: vec![ZERO; dim] }
    }
}

/// Euler step with explicit complex Wiener increments `dxi_j` (`<|dxi|^2> = dt`).
pub fn qsd_step_with_noise(
    state: &mut FockState,
    ops: &OperatorSet,
    eps_t: f64,
    dt: f64,
    dxi: &[Complex64; 3],
    work: &mut Workspace,
) -> Result<()> {
    if state.amps.len() != ops.dim {
        return Err(Error::DimensionMismatch { expected: ops.dim, found: state.amps.len() });
    }
    let psi = &state.amps;
    let mut l_mean = [ZERO; 3];
    for j in 0..3 {
        ops.channels[j].apply_into(psi, &mut work.lpsi[j]);
        l_mean[j] = inner(psi, &work.lpsi[j]);
    }
    ops.pump.apply_into(psi, &mut work.pump);
    let l_sq: f64 = l_mean.iter().map(Complex64::norm_sqr).sum();
    let mut next = Vec::with_capacity(ops.dim);
    for i in 0..ops.dim {
        let mut d = eps_t * work.pump[i] - 0.5 * (ops.loss_diag[i] + l_sq) * psi[i];
        let mut noise = ZERO;
        for j in 0..3 {
            let l = work.lpsi[j][i];
            d += l_mean[j].conj() * l;
            noise += (l - l_mean[j] * psi[i]) * dxi[j];
        }
        next.push(psi[i] + d * dt + noise);
    }
    state.amps = next;
    state.t += dt;
    state.normalize();
    let tail = state.tail_population();
    if !(tail <= TAIL_TOLERANCE) {
        return Err(Error::TruncationHealth { tail, n_max: state.n_max });
    }
    Ok(())
}

/// `qsd_step`: one stochastic step with fresh noise, `dxi = (eta_a + i eta_b) sqrt(dt / 2)`.
pub fn qsd_step<R: Rng + ?Sized>(
    state: &mut FockState,
    ops: &OperatorSet,
    eps_t: f64,
    dt: f64,
    work: &mut Workspace,
    rng: &mut R,
) -> Result<()> {
    let s = (0.5 * dt).sqrt();
    let dxi: [Complex64; 3] = std::array::from_fn(|_| {
        let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        Complex64::new(a, b) * s
    });
    qsd_step_with_noise(state, ops, eps_t, dt, &dxi, work)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsdOptions {
    pub dt: f64,
    pub relaxation: f64,
    /// Fixed cutoff; `None` selects one from the classical photon number.
    pub n_max: Option<usize>,
    /// Cutoff increment after a truncation failure.
    pub n_max_step: usize,
    pub dimension_budget: usize,
    pub workers: Option<usize>,
}

impl Default for QsdOptions {
    fn default() -> Self {
        Self { dt: 1e-3, relaxation: 5.0, n_max: None, n_max_step: 4, dimension_budget: DIMENSION_BUDGET, workers: None }
    }
}

/// Cutoff `ceil(4 n + 10)` with `n` the largest classical photon number over a period: the
/// periodic orbit above threshold, the instantaneous `(eps - gamma) / lambda` otherwise.
pub fn auto_n_max(p: &ModelParams) -> Result<usize> {
    let samples = 256;
    let period = p.period();
    let instantaneous = (0..samples)
        .map(|i| ((p.eps(period * i as f64 / samples as f64) - p.gamma) / p.lambda()).max(0.0))
        .fold(0.0, f64::max);
    let orbit = if regime_classify(p) == Regime::AboveThreshold {
        let opts = SemiclassicalOptions { grid_points: 16, cross_points: 0, ..SemiclassicalOptions::default() };
        let orbit = converge_orbit(p, &opts)?;
        (0..samples).map(|i| orbit.n0(period * i as f64 / samples as f64)).fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok((4.0 * instantaneous.max(orbit) + 10.0).ceil() as usize)
}

#[derive(Debug, Clone)]
pub struct QsdEnsemble {
    pub t_grid: Vec<f64>,
    pub v: Vec<Estimate>,
    pub n1: Vec<Estimate>,
    pub n2: Vec<Estimate>,
    /// Largest tail population over the ensemble at each time.
    pub tail_pop: Vec<f64>,
    pub n_traj: usize,
    pub n_max: usize,
    pub seed: u64,
    pub dt: f64,
}

struct QsdAccumulator {
    stats: Vec<Moments<3>>,
    tail: Vec<f64>,
    failure: Option<Error>,
}

impl Accumulator for QsdAccumulator {
    fn merge(&mut self, later: Self) {
        for (a, b) in self.stats.iter_mut().zip(&later.stats) {
            a.merge(b);
        }
        for (a, b) in self.tail.iter_mut().zip(&later.tail) {
            *a = a.max(*b);
        }
        if self.failure.is_none() {
            self.failure = later.failure;
        }
    }
}

fn run_fixed(p: &ModelParams, n_max: usize, n_traj: usize, t_grid: &[f64], seed: u64, opts: &QsdOptions) -> Result<QsdEnsemble> {
    let ops = build_operators_with_budget(p, n_max, opts.dimension_budget)?;
    let t_start = t_grid[0] - opts.relaxation;
    let steps: Vec<usize> = t_grid.iter().map(|&t| ((t - t_start) / opts.dt).round() as usize).collect();
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be increasing with spacing >= dt".into()));
    }
    let total = *steps.last().expect("non-empty grid");
    let n1_op = ops.number1();
    let n2_op = ops.number2();
    let pair = ops.a1.mul(&ops.a2);

    let fresh = || QsdAccumulator { stats: vec![Moments::default(); t_grid.len()], tail: vec![0.0; t_grid.len()], failure: None };
    let run = |index: usize, acc: &mut QsdAccumulator| {
        if acc.failure.is_some() {
            return;
        }
        let mut rng = trajectory_rng(seed, index as u64);
        let mut state = FockState::vacuum(n_max, t_start);
        let mut work = Workspace::new(ops.dim);
        let mut rec = Vec::with_capacity(steps.len());
        let mut next = 0;
        for step in 0..=total {
            if step == steps[next] {
                let n1 = inner(&state.amps, &n1_op.apply(&state.amps)).re;
                let n2 = inner(&state.amps, &n2_op.apply(&state.amps)).re;
                let c = inner(&state.amps, &pair.apply(&state.amps)).re;
                rec.push(([1.0 + n1 + n2 - 2.0 * c, n1, n2], state.tail_population()));
                next += 1;
                if next == steps.len() {
                    break;
                }
            }
            let t = t_start + step as f64 * opts.dt;
            state.t = t;
            if let Err(e) = qsd_step(&mut state, &ops, p.eps(t), opts.dt, &mut work, &mut rng) {
                acc.failure = Some(e);
                return;
            }
        }
        for (k, (x, tail)) in rec.into_iter().enumerate() {
            acc.stats[k].push(&x);
            acc.tail[k] = acc.tail[k].max(tail);
        }
    };
    let acc = run_blocks(n_traj, opts.workers, fresh, run);
    if let Some(e) = acc.failure {
        return Err(e);
    }
    let pick = |i: usize| acc.stats.iter().map(|m| Estimate { mean: m.mean[i], stderr: m.stderr(i) }).collect();
    Ok(QsdEnsemble {
        t_grid: t_grid.to_vec(),
        v: pick(0),
        n1: pick(1),
        n2: pick(2),
        tail_pop: acc.tail,
        n_traj,
        n_max,
        seed,
        dt: opts.dt,
    })
}

/// `simulate_qsd_ensemble` with default options and automatic cutoff.
pub fn simulate_qsd_ensemble(p: &ModelParams, n_traj: usize, t_grid: &[f64], seed: u64) -> Result<QsdEnsemble> {
    simulate_qsd_ensemble_with(p, n_traj, t_grid, seed, &QsdOptions::default())
}

/// Runs the ensemble from vacuum. With an automatic cutoff, a truncation failure restarts the
/// whole ensemble at a larger `n_max` until the dimension budget is exhausted.
pub fn simulate_qsd_ensemble_with(
    p: &ModelParams,
    n_traj: usize,
    t_grid: &[f64],
    seed: u64,
    opts: &QsdOptions,
) -> Result<QsdEnsemble> {
    p.validate()?;
    if n_traj < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 trajectories, got {n_traj}")));
    }
    if t_grid.is_empty() || !(opts.dt > 0.0) {
        return Err(Error::InvalidParameter("need a non-empty grid and positive dt".into()));
    }
    let Some(mut n_max) = opts.n_max.map(Ok).or_else(|| Some(auto_n_max(p))).transpose()? else {
        unreachable!()
    };
    loop {
        match run_fixed(p, n_max, n_traj, t_grid, seed, opts) {
            Err(Error::TruncationHealth { .. }) if opts.n_max.is_none() => {
                n_max += opts.n_max_step.max(1);
            }
            other => return other,
        }
    }
}
