//! Offline calibration of the asset-specific model: geometry, skin modulus
//! and the mass/damping parameters of the first two bending modes.

mod geometry;
pub mod io;
mod kde;
mod lm;
mod modal;
mod nelder_mead;
mod spectrum;
mod stiffness;

pub use geometry::{calibrate_geometry, GeometryCalibration, GeometryPrior};
pub use kde::{silverman_bandwidth, GaussianKde, GriddedDensity, BANDWIDTH_FLOOR};
pub use lm::{fit_two_mode, LmSettings, TwoModeFit};
pub use modal::{
    average_estimates, calibrate_modal, estimate_modes, fit_point_masses, rayleigh_coefficients,
    rayleigh_zeta, undamped_from_fit, ModalCalibration, ModalEstimate, ModalSample,
    ModalSummary,
};
pub use nelder_mead::{minimize_bounded_1d, Minimum1d};
pub use spectrum::{extract_peaks, power_spectrum, RingdownRecord, Spectrum, TwoModeSignal};
pub use stiffness::{
    calibrate_stiffness, e_hat_from_pair, kde_likelihood, particle_update, synthetic_pairs,
    GaussianPrior, KdeLikelihood, LoadDisplacementPair, PairNoise, StiffnessCalibration,
    WeightedParticles,
};

/// Standard gravity, m/s^2.
pub const STANDARD_GRAVITY: f64 = 9.80665;
/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Standard deviation of a Gaussian whose 95% credible interval is `mean ± half_width`.
pub fn sigma_from_ci95(half_width: f64) -> f64 {
    half_width / Z95
}

/// Tip force in Newtons produced by a hanging mass in grams.
pub fn grams_to_newtons(mass_g: f64) -> f64 {
    mass_g * STANDARD_GRAVITY * 1e-3
}
