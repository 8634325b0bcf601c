//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { rel_tol: 1e-12, abs_tol: 0.0, max_intervals: 4000 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Single 15-point Kronrod rule with the embedded 7-point Gauss error estimate.
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

impl Quadrature {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }

    /// Integrates `f` over `[a, b]`, bisecting the worst panel until the summed error estimate
    /// is below `max(abs_tol, rel_tol * |I|)`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let (value, error) = gauss_kronrod(&mut f, a, b);
        let mut panels = vec![Panel { a, b, value, error }];
        loop {
            let total: f64 = panels.iter().map(|p| p.value).sum();
            let err: f64 = panels.iter().map(|p| p.error).sum();
            if !total.is_finite() || !err.is_finite() {
                return Err(Error::TruncationFailure(format!("non-finite integrand on [{a}, {b}]")));
            }
            if err <= self.abs_tol.max(self.rel_tol * total.abs()) {
                return Ok(total);
            }
            if panels.len() >= self.max_intervals {
                return Err(Error::TruncationFailure(format!(
                    "error estimate {err:e} above tolerance after {} panels",
                    panels.len()
                )));
            }
            let (worst, _) = panels
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
                .expect("non-empty");
            let p = panels.swap_remove(worst);
            let mid = 0.5 * (p.a + p.b);
            if mid <= p.a || mid >= p.b {
                // Panel at floating-point resolution; accept as is.
                panels.push(Panel { error: 0.0, ..p });
                continue;
            }
            let (lv, le) = gauss_kronrod(&mut f, p.a, mid);
            let (rv, re) = gauss_kronrod(&mut f, mid, p.b);
            panels.push(Panel { a: p.a, b: mid, value: lv, error: le });
            panels.push(Panel { a: mid, b: p.b, value: rv, error: re });
        }
    }

    /// Returns `ln ∫ exp(g(s)) ds` over `[a, b]`, shifting the exponent by its sampled maximum so
    /// that integrands spanning hundreds of e-folds neither overflow nor underflow.
    pub fn integrate_log_exp<G: FnMut(f64) -> f64>(&self, mut g: G, a: f64, b: f64, samples: usize) -> Result<f64> {
        let n = samples.max(2);
        let shift = (0..=n)
            .map(|i| g(a + (b - a) * i as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::TruncationFailure("non-finite exponent".into()));
        }
        let value = self.integrate(|s| (g(s) - shift).exp(), a, b)?;
        if value <= 0.0 {
            return Err(Error::TruncationFailure("integral underflowed".into()));
        }
        Ok(shift + value.ln())
    }
}
