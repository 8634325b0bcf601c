//! Simulation suite for a nondegenerate optical parametric oscillator (NOPO)
//! driven by an amplitude-modulated pump.
//!
//! The crate is organised by computational route:
//!
//! * [`model`]: physical parameters, pump modulation profiles, threshold classification.
//! * [`semiclassical`]: mean photon number `n0(t)` by ODE integration and by quadrature.
//! * [`fluctuations`]: linearized two-mode squeezed variance `V(t)`, minima, sweeps and
//!   entanglement criteria.
//! * [`positivep`]: positive-P stochastic trajectory ensembles.
//! * [`qsd`]: quantum-state-diffusion trajectories in a truncated two-mode Fock space.
//!
//! All rates are measured in units of the subharmonic damping `gamma` and times in
//! units of `1/gamma` when parameters are built from dimensionless ratios.

pub mod ensemble;
pub mod error;
pub mod fluctuations;
pub mod model;
pub mod ode;
pub mod positivep;
pub mod qsd;
pub mod quad;
pub mod report;
pub mod semiclassical;
pub mod spline;

pub use error::{Error, Result};
pub use model::{derive_params, DerivedParams, ModelConfig, ModelParams, ModulationProfile, Regime};

/// Version string written into output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
