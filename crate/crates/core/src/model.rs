//! Physical parameters of the modulated NOPO, pump profiles and derived constants.
//!
//! Internally everything lives in the phase-cancelled frame: couplings are real and
//! positive, and the effective pump is `eps(t) = k f(t) / gamma3` with nonlinearity
//! `lambda = k^2 / gamma3`. The pump and coupling phases only set the optimal
//! quadrature angle reported to the user.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::PeriodicSpline;

/// Default relative band `|fbar/f_th - 1|` inside which a setup counts as marginal.
pub const AT_THRESHOLD_BAND: f64 = 1e-9;

/// Minimum `gamma3/gamma` for which the pump-mode adiabatic elimination is trusted.
pub const ADIABATIC_RATIO_MIN: f64 = 10.0;

/// Minimum samples per period for a tabulated pump profile.
pub const MIN_TABULATED_SAMPLES: usize = 64;

/// Tabulated one-period pump amplitude, interpolated by a periodic cubic spline.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedProfile {
    spline: PeriodicSpline,
}

impl TabulatedProfile {
    pub fn period(&self) -> f64 {
        self.spline.period()
    }

    pub fn samples(&self) -> &[f64] {
        self.spline.samples()
    }
}

/// Pump amplitude `f(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ModulationProfile {
    /// `f(t) = fbar + f1 cos(delta t + phi)`.
    Harmonic { fbar: f64, f1: f64, delta: f64, phi: f64 },
    TabulatedPeriodic(TabulatedProfile),
}

impl ModulationProfile {
    pub fn harmonic(fbar: f64, f1: f64, delta: f64, phi: f64) -> Result<Self> {
        let m = Self::Harmonic { fbar, f1, delta, phi };
        m.validate()?;
        Ok(m)
    }

    /// Uniform samples `f(j T / n)`, `j = 0..n`, over one period `T`.
    pub fn tabulated(period: f64, samples: Vec<f64>) -> Result<Self> {
        if samples.len() < MIN_TABULATED_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "tabulated profile needs at least {MIN_TABULATED_SAMPLES} samples per period, got {}",
                samples.len()
            )));
        }
        Ok(Self::TabulatedPeriodic(TabulatedProfile { spline: PeriodicSpline::new(period, samples)? }))
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Harmonic { fbar, f1, delta, phi } => {
                if !(fbar.is_finite() && f1.is_finite() && phi.is_finite()) {
                    return Err(Error::InvalidParameter("harmonic profile values must be finite".into()));
                }
                if f1 < 0.0 {
                    return Err(Error::InvalidParameter(format!("modulation depth f1 must be >= 0, got {f1}")));
                }
                if !(delta.is_finite() && delta > 0.0) {
                    return Err(Error::InvalidParameter(format!("modulation frequency must be > 0, got {delta}")));
                }
                Ok(())
            }
            Self::TabulatedPeriodic(_) => Ok(()),
        }
    }

    pub fn period(&self) -> f64 {
        match self {
            Self::Harmonic { delta, .. } => 2.0 * PI / delta,
            Self::TabulatedPeriodic(tab) => tab.period(),
        }
    }

    /// `f(t)`.
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Self::Harmonic { fbar, f1, delta, phi } => fbar + f1 * (delta * t + phi).cos(),
            Self::TabulatedPeriodic(ref tab) => tab.spline.eval(t),
        }
    }

    /// `∫_0^t f(s) ds`, valid for any real `t`.
    pub fn integral(&self, t: f64) -> f64 {
        match *self {
            Self::Harmonic { fbar, f1, delta, phi } => fbar * t + f1 / delta * ((delta * t + phi).sin() - phi.sin()),
            Self::TabulatedPeriodic(ref tab) => tab.spline.integral(t),
        }
    }

    /// Period average of `f`.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Harmonic { fbar, .. } => fbar,
            // Equal to the trapezoid rule on the samples (spline curvatures sum to zero).
            Self::TabulatedPeriodic(ref tab) => tab.spline.mean(),
        }
    }

    /// Largest excursion above the mean: `f1` for harmonic profiles.
    pub fn depth(&self) -> f64 {
        match *self {
            Self::Harmonic { f1, .. } => f1,
            Self::TabulatedPeriodic(ref tab) => {
                let mean = self.mean();
                tab.samples().iter().fold(0.0f64, |m, v| m.max(v - mean))
            }
        }
    }

    /// Angular modulation frequency `2 pi / T`.
    pub fn frequency(&self) -> f64 {
        2.0 * PI / self.period()
    }

    /// Same profile with its modulation phase advanced by `dphi` (harmonic only).
    pub fn with_phase_shift(&self, dphi: f64) -> Self {
        match *self {
            Self::Harmonic { fbar, f1, delta, phi } => Self::Harmonic { fbar, f1, delta, phi: phi + dphi },
            ref other => other.clone(),
        }
    }
}

/// `pump_amplitude`: `f(t)` for the given profile.
pub fn pump_amplitude(m: &ModulationProfile, t: f64) -> f64 {
    m.value(t)
}

/// `period_average`: mean of `f` over one period.
pub fn period_average(m: &ModulationProfile) -> f64 {
    m.mean()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gamma: f64,
    pub gamma3: f64,
    pub k: f64,
    pub modulation: ModulationProfile,
    pub phi_l: f64,
    pub phi_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    pub lambda: f64,
    pub f_th: f64,
    pub eps_bar: f64,
    pub period: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    BelowThreshold,
    AtThreshold,
    AboveThreshold,
}

impl ModelParams {
    pub fn new(gamma: f64, gamma3: f64, k: f64, modulation: ModulationProfile) -> Result<Self> {
        let p = Self { gamma, gamma3, k, modulation, phi_l: 0.0, phi_k: 0.0 };
        p.validate()?;
        Ok(p)
    }

    /// Harmonic setup in dimensionless ratios with `gamma = 1`.
    pub fn from_ratios(
        gamma3_over_gamma: f64,
        k_over_gamma: f64,
        fbar_over_fth: f64,
        f1_over_fbar: f64,
        delta_over_gamma: f64,
    ) -> Result<Self> {
        ModelConfig {
            gamma3_over_gamma,
            k_over_gamma,
            fbar_over_fth,
            f1_over_fbar,
            delta_over_gamma,
            ..ModelConfig::default()
        }
        .to_params()
    }

    /// Harmonic setup fixed by `lambda/gamma` and `gamma3/gamma` instead of `k/gamma`.
    pub fn from_lambda(
        lambda_over_gamma: f64,
        gamma3_over_gamma: f64,
        fbar_over_fth: f64,
        f1_over_fbar: f64,
        delta_over_gamma: f64,
    ) -> Result<Self> {
        if !(lambda_over_gamma > 0.0 && gamma3_over_gamma > 0.0) {
            return Err(Error::InvalidParameter("lambda and gamma3 must be positive".into()));
        }
        let k = (lambda_over_gamma * gamma3_over_gamma).sqrt();
        Self::from_ratios(gamma3_over_gamma, k, fbar_over_fth, f1_over_fbar, delta_over_gamma)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("gamma3", self.gamma3), ("k", self.k)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.phi_l.is_finite() && self.phi_k.is_finite()) {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        self.modulation.validate()
    }

    pub fn lambda(&self) -> f64 {
        self.k * self.k / self.gamma3
    }

    pub fn f_th(&self) -> f64 {
        self.gamma * self.gamma3 / self.k
    }

    /// Effective pump `eps(t) = k f(t) / gamma3`.
    pub fn eps(&self, t: f64) -> f64 {
        self.k * self.modulation.value(t) / self.gamma3
    }

    /// `∫_0^t eps(s) ds`.
    pub fn eps_integral(&self, t: f64) -> f64 {
        self.k * self.modulation.integral(t) / self.gamma3
    }

    pub fn eps_bar(&self) -> f64 {
        self.k * self.modulation.mean() / self.gamma3
    }

    pub fn period(&self) -> f64 {
        self.modulation.period()
    }

    /// Period-averaged pump relative to threshold, `fbar / f_th`.
    pub fn pump_ratio(&self) -> f64 {
        self.modulation.mean() / self.f_th()
    }

    /// Whether `gamma3/gamma` is large enough for the adiabatic elimination of the pump.
    pub fn adiabatic_regime(&self, min_ratio: f64) -> bool {
        self.gamma3 / self.gamma >= min_ratio
    }

    /// Optimal quadrature angle sum `Theta1 + Theta2 = -(Phi_L + Phi_k)`.
    pub fn theta_opt(&self) -> f64 {
        -(self.phi_l + self.phi_k)
    }

    /// Copy with a different modulation profile.
    pub fn with_modulation(&self, modulation: ModulationProfile) -> Self {
        Self { modulation, ..self.clone() }
    }

    /// Copy whose period-averaged pump is `fbar_over_fth` and harmonic depth `f1_over_fbar * fbar`,
    /// keeping the modulation frequency and phase.
    pub fn with_pump(&self, fbar_over_fth: f64, f1_over_fbar: f64) -> Result<Self> {
        let fbar = fbar_over_fth * self.f_th();
        let (delta, phi) = match self.modulation {
            ModulationProfile::Harmonic { delta, phi, .. } => (delta, phi),
            ModulationProfile::TabulatedPeriodic(_) => (self.modulation.frequency(), 0.0),
        };
        Ok(self.with_modulation(ModulationProfile::harmonic(fbar, f1_over_fbar * fbar, delta, phi)?))
    }
}

/// `derive_params`: lambda, threshold, mean effective pump and modulation period.
pub fn derive_params(p: &ModelParams) -> Result<DerivedParams> {
    p.validate()?;
    Ok(DerivedParams { lambda: p.lambda(), f_th: p.f_th(), eps_bar: p.eps_bar(), period: p.period() })
}

/// `regime_classify` with the default marginal band.
pub fn regime_classify(p: &ModelParams) -> Regime {
    regime_classify_with(p, AT_THRESHOLD_BAND)
}

pub fn regime_classify_with(p: &ModelParams, band: f64) -> Regime {
    let ratio = p.pump_ratio();
    if (ratio - 1.0).abs() < band {
        Regime::AtThreshold
    } else if ratio > 1.0 {
        Regime::AboveThreshold
    } else {
        Regime::BelowThreshold
    }
}

/// Dimensionless configuration document (JSON). Unknown keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub gamma3_over_gamma: f64,
    pub k_over_gamma: f64,
    pub fbar_over_fth: f64,
    pub f1_over_fbar: f64,
    pub delta_over_gamma: f64,
    pub phi: f64,
    #[serde(rename = "phi_L")]
    pub phi_l: f64,
    #[serde(rename = "phi_K")]
    pub phi_k: f64,
}

impl Default for ModelConfig {
    /// Figure 1/2 parameters: `k/gamma = 5e-4`, `gamma3/gamma = 25`, `delta/gamma = 2`, `fbar = 3 f_th`.
    fn default() -> Self {
        Self {
            gamma3_over_gamma: 25.0,
            k_over_gamma: 5e-4,
            fbar_over_fth: 3.0,
            f1_over_fbar: 0.0,
            delta_over_gamma: 2.0,
            phi: 0.0,
            phi_l: 0.0,
            phi_k: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        let gamma = 1.0;
        let gamma3 = self.gamma3_over_gamma * gamma;
        let k = self.k_over_gamma * gamma;
        if !(gamma3 > 0.0 && k > 0.0) {
            return Err(Error::InvalidParameter("gamma3_over_gamma and k_over_gamma must be positive".into()));
        }
        let f_th = gamma * gamma3 / k;
        let fbar = self.fbar_over_fth * f_th;
        let modulation =
            ModulationProfile::harmonic(fbar, self.f1_over_fbar * fbar, self.delta_over_gamma * gamma, self.phi)?;
        let p = ModelParams { gamma, gamma3, k, modulation, phi_l: self.phi_l, phi_k: self.phi_k };
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ModelParams {
        ModelParams::from_ratios(25.0, 5e-4, 3.0, 0.0, 2.0).unwrap()
    }

    #[test]
    fn derived_values_for_figure_parameters() {
        let d = derive_params(&reference()).unwrap();
        assert!((d.lambda - 1e-8).abs() < 1e-20);
        assert!((d.f_th - 5e4).abs() < 1e-9);
        // eps_bar / gamma = fbar / f_th
        assert!((d.eps_bar - 3.0).abs() < 1e-12);
        assert!((d.period - PI).abs() < 1e-15);
    }

    #[test]
    fn identity_parameters() {
        let p = ModelParams::new(1.0, 1.0, 1.0, ModulationProfile::harmonic(1.0, 0.0, 1.0, 0.0).unwrap()).unwrap();
        let d = derive_params(&p).unwrap();
        assert_eq!((d.lambda, d.f_th), (1.0, 1.0));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let m = ModulationProfile::harmonic(1.0, 0.0, 1.0, 0.0).unwrap();
        assert!(ModelParams::new(0.0, 1.0, 1.0, m.clone()).is_err());
        assert!(ModelParams::new(1.0, -1.0, 1.0, m.clone()).is_err());
        assert!(ModelParams::new(1.0, 1.0, f64::NAN, m).is_err());
        assert!(ModulationProfile::harmonic(1.0, -0.1, 1.0, 0.0).is_err());
        assert!(ModulationProfile::harmonic(1.0, 0.1, 0.0, 0.0).is_err());
        assert!(ModulationProfile::tabulated(1.0, vec![1.0; 63]).is_err());
    }

    #[test]
    fn harmonic_pump_values() {
        let fth = reference().f_th();
        let flat = ModulationProfile::harmonic(3.0 * fth, 0.0, 2.0, 0.0).unwrap();
        assert_eq!(pump_amplitude(&flat, 1.7), 3.0 * fth);
        let m = ModulationProfile::harmonic(1.0, 0.5, 2.0, 0.0).unwrap();
        assert_eq!(pump_amplitude(&m, 0.0), 1.5);
        assert!((pump_amplitude(&m, PI / 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn period_averages() {
        assert_eq!(period_average(&ModulationProfile::harmonic(2.0, 5.0, 3.0, 0.0).unwrap()), 2.0);
        let flat = ModulationProfile::tabulated(1.3, vec![7.0; 64]).unwrap();
        assert!((period_average(&flat) - 7.0).abs() < 1e-13);
        let n = 4096;
        let samples = (0..n).map(|j| 1.0 + 0.5 * (2.0 * PI * j as f64 / n as f64).cos()).collect();
        let tab = ModulationProfile::tabulated(PI, samples).unwrap();
        // quadrature oracle: composite Simpson on the exact function
        let m = 2000;
        let h = PI / m as f64;
        let simpson: f64 = (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * (1.0 + 0.5 * (2.0 * i as f64 * h).cos())
            })
            .sum::<f64>()
            * h
            / 3.0
            / PI;
        assert!((period_average(&tab) - simpson).abs() < 1e-6);
        assert!((period_average(&tab) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tabulated_interpolation_is_periodic() {
        let n = 128;
        let samples = (0..n).map(|j| 2.0 + (2.0 * PI * j as f64 / n as f64).sin()).collect();
        let tab = ModulationProfile::tabulated(5.0, samples).unwrap();
        for &t in &[0.1, 1.37, 4.99] {
            assert!((tab.value(t + 5.0) - tab.value(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn regimes() {
        let base = reference();
        assert_eq!(regime_classify(&base), Regime::AboveThreshold);
        assert_eq!(regime_classify(&base.with_pump(0.5, 0.0).unwrap()), Regime::BelowThreshold);
        assert_eq!(regime_classify(&base.with_pump(1.0 + 1e-12, 0.3).unwrap()), Regime::AtThreshold);
        assert_eq!(regime_classify(&base.with_pump(1.0 - 1e-12, 0.3).unwrap()), Regime::AtThreshold);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(ModelConfig::from_json(r#"{"k_over_gamma": 1e-3, "detuning": 0.1}"#).is_err());
        let c = ModelConfig::from_json(r#"{"fbar_over_fth": 2.0, "phi_L": 0.3, "phi_K": 0.1}"#).unwrap();
        assert_eq!(c.fbar_over_fth, 2.0);
        assert_eq!(c.k_over_gamma, 5e-4);
        let p = c.to_params().unwrap();
        assert!((p.theta_opt() + 0.4).abs() < 1e-15);
        assert_eq!(ModelConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn adiabatic_warning_threshold() {
        assert!(reference().adiabatic_regime(ADIABATIC_RATIO_MIN));
        let p = ModelParams::from_ratios(5.0, 5e-4, 3.0, 0.0, 2.0).unwrap();
        assert!(!p.adiabatic_regime(ADIABATIC_RATIO_MIN));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scale_covariance(c in 0.01f64..100.0, g3 in 10.0f64..100.0, k in 1e-5f64..1e-1,
                                r in 0.1f64..4.0, d in 0.1f64..10.0, depth in 0.0f64..2.0, t in -10.0f64..10.0) {
                let base = ModelParams::new(1.0, g3, k,
                    ModulationProfile::harmonic(r * g3 / k, depth * r * g3 / k, d, 0.0).unwrap()).unwrap();
                let scaled = ModelParams::new(c, c * g3, c * k,
                    ModulationProfile::harmonic(c * r * g3 / k, c * depth * r * g3 / k, c * d, 0.0).unwrap()).unwrap();
                let (a, b) = (derive_params(&base).unwrap(), derive_params(&scaled).unwrap());
                prop_assert!((b.lambda / a.lambda - c).abs() < 1e-9 * c);
                prop_assert!((b.f_th / a.f_th - c).abs() < 1e-9 * c);
                prop_assert!((scaled.eps(t / c) / base.eps(t) - c).abs() < 1e-6 * c || base.eps(t).abs() < 1e-9);
                prop_assert!((scaled.pump_ratio() - base.pump_ratio()).abs() < 1e-12 * base.pump_ratio());
                prop_assert_eq!(regime_classify(&base), regime_classify(&scaled));
            }

            #[test]
            fn harmonic_periodicity(f in 0.0f64..10.0, f1 in 0.0f64..10.0, d in 0.01f64..100.0,
                                    phi in -3.0f64..3.0, t in -100.0f64..100.0) {
                let m = ModulationProfile::harmonic(f, f1, d, phi).unwrap();
                let period = m.period();
                prop_assert!((m.value(t + period) - m.value(t)).abs() < 1e-9 * (1.0 + f + f1));
            }
        }
    }
}
