//! Reproducible trajectory-parallel execution.
//!
//! Each trajectory draws from its own ChaCha stream selected by `(seed, index)`, and
//! trajectories are reduced in fixed-size blocks that are merged in index order. Results are
//! therefore bit-identical for any number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Default RNG seed; outputs never depend on wall-clock time.
pub const DEFAULT_SEED: u64 = 0x5EED_0F_0DD;

/// Trajectories per reduction block.
pub const BLOCK_SIZE: usize = 64;

/// Counter-based generator for trajectory `index`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Anything that can absorb single trajectories and merge with a later block.
pub trait Accumulator: Send {
    fn merge(&mut self, later: Self);
}

/// Runs `n_traj` trajectories on `workers` threads (`None` = rayon default).
///
/// `run(index, acc)` simulates one trajectory into the block accumulator; `fresh()` creates an
/// empty accumulator.
pub fn run_blocks<A, N, R>(n_traj: usize, workers: Option<usize>, fresh: N, run: R) -> A
where
    A: Accumulator,
    N: Fn() -> A + Sync,
    R: Fn(usize, &mut A) + Sync,
{
    let n_blocks = n_traj.div_ceil(BLOCK_SIZE);
    let work = || {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = fresh();
                for i in b * BLOCK_SIZE..((b + 1) * BLOCK_SIZE).min(n_traj) {
                    run(i, &mut acc);
                }
                acc
            })
            .collect::<Vec<A>>()
    };
    let blocks = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(work),
        None => work(),
    };
    let mut out = fresh();
    for block in blocks {
        out.merge(block);
    }
    out
}

/// Streaming mean / covariance of a fixed-length vector (Chan et al. pairwise update).
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<const D: usize> {
    pub count: f64,
    pub mean: [f64; D],
    /// Sum of outer products of deviations.
    pub m2: [[f64; D]; D],
}

impl<const D: usize> Default for Moments<D> {
    fn default() -> Self {
        Self { count: 0.0, mean: [0.0; D], m2: [[0.0; D]; D] }
    }
}

impl<const D: usize> Moments<D> {
    pub fn push(&mut self, x: &[f64; D]) {
        self.count += 1.0;
        let delta: [f64; D] = std::array::from_fn(|i| x[i] - self.mean[i]);
        for i in 0..D {
            self.mean[i] += delta[i] / self.count;
        }
        for i in 0..D {
            let di = x[i] - self.mean[i];
            for j in 0..D {
                self.m2[i][j] += delta[j] * di;
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0.0 {
            return;
        }
        if self.count == 0.0 {
            *self = other.clone();
            return;
        }
        let n = self.count + other.count;
        let delta: [f64; D] = std::array::from_fn(|i| other.mean[i] - self.mean[i]);
        let w = self.count * other.count / n;
        for i in 0..D {
            for j in 0..D {
                self.m2[i][j] += other.m2[i][j] + delta[i] * delta[j] * w;
            }
        }
        for i in 0..D {
            self.mean[i] += delta[i] * other.count / n;
        }
        self.count = n;
    }

    /// Sample covariance (Bessel-corrected).
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.count < 2.0 {
            return f64::NAN;
        }
        self.m2[i][j] / (self.count - 1.0)
    }

    /// Standard error of `mean[i]`.
    pub fn stderr(&self, i: usize) -> f64 {
        (self.covariance(i, i) / self.count).sqrt()
    }

    /// Mean and standard error of the linear combination `c · x`.
    pub fn linear(&self, c: &[f64; D]) -> (f64, f64) {
        let mean = (0..D).map(|i| c[i] * self.mean[i]).sum();
        let mut var = 0.0;
        for i in 0..D {
            for j in 0..D {
                var += c[i] * c[j] * self.covariance(i, j);
            }
        }
        (mean, (var.max(0.0) / self.count).sqrt())
    }
}
