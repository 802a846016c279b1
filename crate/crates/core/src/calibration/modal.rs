//! Mass and Rayleigh-damping identification from free-decay experiments.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{CalibrationPosterior, DigitalState, GeometricParams, HealthState, Moments, UNMODELLED_MASS_G};
use crate::rng;
use crate::surrogate::SurrogateConfig;

use super::lm::{fit_two_mode, LmSettings};
use super::nelder_mead::minimize_bounded_1d;
use super::spectrum::{extract_peaks, power_spectrum, RingdownRecord};

/// Undamped frequencies (Hz) and damping ratios of the first two bending modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalEstimate {
    pub omega_hz: [f64; 2],
    pub zeta: [f64; 2],
}

impl ModalEstimate {
    pub fn validate(&self) -> Result<()> {
        let [w1, w2] = self.omega_hz;
        if !(w1 > 0.0 && w2 > w1 && w2.is_finite()) {
            return Err(invalid("modal estimate frequencies must be positive and ascending"));
        }
        if self.zeta.iter().any(|z| !(*z >= 0.0 && *z < 1.0)) {
            return Err(invalid("damping ratios must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Undamped frequency and damping ratio of a mode fitted as
/// `exp(-b t) cos(2π ω_d t)`: the simultaneous solution of
/// `ω = ω_d / sqrt(1 - ζ²)` and `ζ = b / (2π ω)`.
pub fn undamped_from_fit(omega_d_hz: f64, b: f64) -> (f64, f64) {
    let decay_hz = b / (2.0 * PI);
    let omega = omega_d_hz.hypot(decay_hz);
    (omega, decay_hz / omega)
}

/// Spectrum, peak picking, two-mode fit and undamped conversion for one record.
pub fn estimate_modes(rec: &RingdownRecord) -> Result<ModalEstimate> {
    let spectrum = power_spectrum(rec)?;
    let damped = extract_peaks(&spectrum)?;
    let fit = fit_two_mode(rec, damped, &LmSettings::default())?;
    let mut omega_hz = [0.0; 2];
    let mut zeta = [0.0; 2];
    for i in 0..2 {
        let (w, z) = undamped_from_fit(damped[i], fit.signal.b[i]);
        omega_hz[i] = w;
        zeta[i] = z;
    }
    let est = ModalEstimate { omega_hz, zeta };
    est.validate()?;
    Ok(est)
}

pub fn average_estimates(estimates: &[ModalEstimate]) -> Result<ModalEstimate> {
    if estimates.is_empty() {
        return Err(invalid("no modal estimates to average"));
    }
    let n = estimates.len() as f64;
    let mut avg = ModalEstimate { omega_hz: [0.0; 2], zeta: [0.0; 2] };
    for e in estimates {
        e.validate()?;
        for i in 0..2 {
            avg.omega_hz[i] += e.omega_hz[i] / n;
            avg.zeta[i] += e.zeta[i] / n;
        }
    }
    Ok(avg)
}

/// `ζ_i = α / (2 ω_i) + β ω_i / 2`, with `ω` in rad/s.
pub fn rayleigh_zeta(alpha: f64, beta: f64, omega_rad: f64) -> f64 {
    0.5 * alpha / omega_rad + 0.5 * beta * omega_rad
}

/// Rayleigh coefficients that reproduce both target damping ratios exactly.
/// Frequencies in rad/s.
pub fn rayleigh_coefficients(omega_rad: [f64; 2], zeta: [f64; 2]) -> Result<(f64, f64)> {
    let [w1, w2] = omega_rad;
    if !(w1 > 0.0 && w2 > 0.0) {
        return Err(invalid("Rayleigh frequencies must be positive"));
    }
    let det = w2 * w2 - w1 * w1;
    if det.abs() <= 1e-12 * w1.max(w2).powi(2) {
        return Err(Error::SingularRayleigh { omega: w1 });
    }
    let alpha = 2.0 * w1 * w2 * (zeta[0] * w2 - zeta[1] * w1) / det;
    let beta = 2.0 * (zeta[1] * w2 - zeta[0] * w1) / det;
    Ok((alpha, beta))
}

/// Servo and pitot masses that best reproduce the target undamped
/// frequencies (Hz), subject to `2 m_servo + m_pitot = 472 g`, both
/// nonnegative. Minimizes the summed relative frequency error over
/// `m_servo ∈ [0, 236]`.
pub fn fit_point_masses(cfg: &SurrogateConfig, e: f64, targets_hz: [f64; 2]) -> Result<(f64, f64)> {
    if !(targets_hz[0] > 0.0 && targets_hz[1] >= targets_hz[0]) {
        return Err(invalid("target frequencies must be positive and ascending"));
    }
    if !(e > 0.0) {
        return Err(invalid("e must be positive"));
    }
    let upper = UNMODELLED_MASS_G / 2.0;
    let objective = |ms: f64| {
        let w = cfg.modal_frequencies(ms, UNMODELLED_MASS_G - 2.0 * ms, e);
        (0..2).map(|i| (w[i] - targets_hz[i]).abs() / targets_hz[i]).sum::<f64>()
    };

    const PROBES: usize = 257;
    let probes: Vec<(f64, f64)> = (0..PROBES)
        .map(|i| {
            let x = upper * i as f64 / (PROBES - 1) as f64;
            (x, objective(x))
        })
        .collect();
    let (lo, hi) = probes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if hi - lo < 1e-12 {
        return Err(Error::MassesNotIdentifiable);
    }
    let start = probes.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    let m = minimize_bounded_1d(objective, 0.0, upper, start, upper / (PROBES - 1) as f64, 1e-6, 10_000);
    let m_servo = m.x.clamp(0.0, upper);
    Ok((m_servo, UNMODELLED_MASS_G - 2.0 * m_servo))
}

/// One calibrated draw of the dynamic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalSample {
    pub e: f64,
    pub m_servo_g: f64,
    pub m_pitot_g: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Model frequencies (Hz) at the fitted masses.
    pub omega_hz: [f64; 2],
    /// Model damping ratios implied by `alpha`, `beta`.
    pub zeta: [f64; 2],
}

impl ModalSample {
    /// Full digital state for this draw; health is pristine during calibration.
    pub fn digital_state(&self, g: GeometricParams) -> DigitalState {
        DigitalState {
            g,
            e: self.e,
            m_servo_g: self.m_servo_g,
            m_pitot_g: self.m_pitot_g,
            alpha: self.alpha,
            beta: self.beta,
            z: HealthState::PRISTINE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalSummary {
    pub e: Moments,
    pub m_servo_g: Moments,
    pub m_pitot_g: Moments,
    pub alpha: Moments,
    pub beta: Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalCalibration {
    /// Average of the experimental estimates.
    pub targets: ModalEstimate,
    pub samples: Vec<ModalSample>,
    pub summary: ModalSummary,
    /// Minus the mean relative discrepancy between model and experimental
    /// frequencies and damping ratios.
    pub reward: f64,
}

const MODAL_STREAM: u64 = 0x4d4f_4441_4c00_0004;

/// Draws `n_samples` values of `e` from the stiffness posterior and, for each,
/// fits the point masses and solves for Rayleigh damping.
pub fn calibrate_modal(
    cfg: &SurrogateConfig,
    posterior_e: &CalibrationPosterior,
    estimates: &[ModalEstimate],
    n_samples: usize,
    seed: u64,
) -> Result<ModalCalibration> {
    if n_samples == 0 {
        return Err(invalid("need at least one modal sample"));
    }
    let targets = average_estimates(estimates)?;
    let mut rng = rng::stream(seed, MODAL_STREAM);
    let e_draws = posterior_e.sample(n_samples, &mut rng)?;

    let mut samples = Vec::with_capacity(n_samples);
    let mut discrepancy = 0.0;
    for (index, &e) in e_draws.iter().enumerate() {
        let wrap = |source: Error| Error::ModalSample { index, source: Box::new(source) };
        let (m_servo_g, m_pitot_g) = fit_point_masses(cfg, e, targets.omega_hz).map_err(wrap)?;
        let omega_hz = cfg.modal_frequencies(m_servo_g, m_pitot_g, e);
        let omega_rad = omega_hz.map(|w| 2.0 * PI * w);
        let (alpha, beta) = rayleigh_coefficients(omega_rad, targets.zeta).map_err(wrap)?;
        let zeta = omega_rad.map(|w| rayleigh_zeta(alpha, beta, w));
        let mut d = 0.0;
        for i in 0..2 {
            d += (omega_hz[i] - targets.omega_hz[i]).abs() / targets.omega_hz[i];
            d += relative_or_absolute(zeta[i], targets.zeta[i]);
        }
        discrepancy += d / 4.0;
        samples.push(ModalSample { e, m_servo_g, m_pitot_g, alpha, beta, omega_hz, zeta });
    }

    let moments = |f: fn(&ModalSample) -> f64| {
        Moments::weighted(samples.iter().map(|s| (f(s), 1.0)))
    };
    let summary = ModalSummary {
        e: moments(|s| s.e),
        m_servo_g: moments(|s| s.m_servo_g),
        m_pitot_g: moments(|s| s.m_pitot_g),
        alpha: moments(|s| s.alpha),
        beta: moments(|s| s.beta),
    };
    Ok(ModalCalibration { targets, summary, reward: -discrepancy / n_samples as f64, samples })
}

fn relative_or_absolute(model: f64, target: f64) -> f64 {
    if target > 0.0 {
        (model - target).abs() / target
    } else {
        (model - target).abs()
    }
}
