//! Adaptive Dormand-Prince 5(4) integrator with continuous (dense) output.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step; `f64::INFINITY` for none.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, h_max: f64::INFINITY, max_steps: 50_000_000 }
    }
}

/// One accepted step, enough to evaluate the interpolant inside it.
#[derive(Debug, Clone, Copy)]
pub struct DenseSegment<const N: usize> {
    t0: f64,
    h: f64,
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    fn eval(&self, t: f64) -> [f64; N] {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let r = &self.rcont;
        std::array::from_fn(|i| {
            r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])))
        })
    }
}

/// Piecewise continuous extension of an integrated solution.
#[derive(Debug, Clone)]
pub struct DenseSolution<const N: usize> {
    segments: Vec<DenseSegment<N>>,
}

impl<const N: usize> DenseSolution<N> {
    pub fn t_start(&self) -> f64 {
        self.segments.first().map_or(f64::NAN, |s| s.t0)
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(f64::NAN, |s| s.t0 + s.h)
    }

    pub fn steps(&self) -> usize {
        self.segments.len()
    }

    /// Evaluates the interpolant; `t` is clamped to the integrated span.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let idx = self.segments.partition_point(|s| s.t0 + s.h < t);
        let seg = &self.segments[idx.min(self.segments.len() - 1)];
        seg.eval(t.clamp(seg.t0, seg.t0 + seg.h))
    }
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t1` and returns the final state.
    pub fn integrate<const N: usize, F>(&self, f: F, t0: f64, y0: [f64; N], t1: f64) -> Result<[f64; N]>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        self.run(f, t0, y0, t1, None)
    }

    /// Like [`Dopri5::integrate`], additionally recording the dense output.
    pub fn integrate_dense<const N: usize, F>(
        &self,
        f: F,
        t0: f64,
        y0: [f64; N],
        t1: f64,
    ) -> Result<([f64; N], DenseSolution<N>)>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let mut segments = Vec::new();
        let y = self.run(f, t0, y0, t1, Some(&mut segments))?;
        Ok((y, DenseSolution { segments }))
    }

    fn run<const N: usize, F>(
        &self,
        mut f: F,
        t0: f64,
        y0: [f64; N],
        t1: f64,
        mut dense: Option<&mut Vec<DenseSegment<N>>>,
    ) -> Result<[f64; N]>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let span = t1 - t0;
        if span <= 0.0 {
            if let Some(d) = dense.as_deref_mut() {
                d.push(DenseSegment { t0, h: 0.0, rcont: [y0, [0.0; N], [0.0; N], [0.0; N], [0.0; N]] });
            }
            return Ok(y0);
        }
        let mut t = t0;
        let mut y = y0;
        let mut k1 = f(t, &y);
        let mut h = self.initial_step(&k1, &y, span);
        let h_min_rel = 1e-14;

        for _ in 0..self.max_steps {
            let last = t + h >= t1;
            if last {
                h = t1 - t;
            }
            let stage = |base: &[f64; N], terms: &[(f64, &[f64; N])]| -> [f64; N] {
                std::array::from_fn(|i| base[i] + h * terms.iter().map(|(a, k)| a * k[i]).sum::<f64>())
            };
            let k2 = f(t + C2 * h, &stage(&y, &[(A21, &k1)]));
            let k3 = f(t + C3 * h, &stage(&y, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + C4 * h, &stage(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(t + C5 * h, &stage(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
            let k6 = f(t + h, &stage(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
            let y_new = stage(&y, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = f(t + h, &y_new);

            let mut err_sq = 0.0;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / sc) * (e / sc);
            }
            let err = (err_sq / N as f64).sqrt();

            if err.is_finite() && err <= 1.0 {
                if let Some(d) = dense.as_deref_mut() {
                    let mut rcont = [[0.0; N]; 5];
                    for i in 0..N {
                        let dy = y_new[i] - y[i];
                        let bspl = h * k1[i] - dy;
                        rcont[0][i] = y[i];
                        rcont[1][i] = dy;
                        rcont[2][i] = bspl;
                        rcont[3][i] = dy - h * k7[i] - bspl;
                        rcont[4][i] = h
                            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                    }
                    d.push(DenseSegment { t0: t, h, rcont });
                }
                t = if last { t1 } else { t + h };
                y = y_new;
                k1 = k7;
                if last {
                    return Ok(y);
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h * fac).min(self.h_max);
            } else {
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) } else { 0.2 };
                h *= fac;
                if h < h_min_rel * t.abs().max(1.0) {
                    return Err(Error::IntegrationFailure { t, h });
                }
            }
        }
        Err(Error::StepBudget { t, max_steps: self.max_steps })
    }

    fn initial_step<const N: usize>(&self, k1: &[f64; N], y: &[f64; N], span: f64) -> f64 {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = self.atol + self.rtol * y[i].abs();
            d0 += (y[i] / sc).powi(2);
            d1 += (k1[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(span).min(self.h_max).max(1e-12 * span)
    }
}
