//! Simulation and analysis toolkit for a frequency-resolved,
//! polarization-entangled photon-pair source used as a wavelength-division
//! multiplexed QKD source.
//!
//! The crate is organised bottom-up:
//!
//! * [`biphoton`]: analytic two-photon polarization model (pure `(f, α)`
//!   state and the separable product state) and coincidence statistics.
//! * [`correlation`]: maximizing idler angle, basis shifts, visibility,
//!   CHSH value and estimation of `f` from measured HV/VH rates.
//! * [`spectral`]: wavelength channels with energy-conservation pairing and
//!   per-channel HV/VH rates.
//! * [`detection`]: seeded Poisson Monte Carlo of coincidence counts.
//! * [`fit`]: weighted nonlinear least-squares fit of polarizer scans.
//! * [`qkd`]: per-channel BBM92 simulation and WDM aggregation.
//!
//! Angles are degrees at every public interface unless a name says
//! otherwise; wavelengths are nm; rates are counts/s.

pub mod biphoton;
pub mod correlation;
pub mod detection;
pub mod error;
pub mod fit;
pub mod qkd;
pub mod rng;
pub mod spectral;

pub use biphoton::{
    BiphotonPureState, CoincidenceModel, JointOutcomeDistribution, MeasurementSetting,
    ProductState, SourceState,
};
pub use error::{Error, Result};
