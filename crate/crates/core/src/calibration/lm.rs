//! Two-mode damped-cosine reconstruction of a ring-down, fitted by
//! Levenberg-Marquardt with the damped frequencies held fixed.

use std::f64::consts::PI;

use nalgebra::{SMatrix, SVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::spectrum::{RingdownRecord, TwoModeSignal};

type Mat6 = SMatrix<f64, 6, 6>;
type Vec6 = SVector<f64, 6>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmSettings {
    pub initial_lambda: f64,
    pub lambda_factor: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub relative_tolerance: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings {
            initial_lambda: 1e-3,
            lambda_factor: 10.0,
            max_iterations: 200,
            relative_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoModeFit {
    pub signal: TwoModeSignal,
    pub cost: f64,
    pub iterations: usize,
    /// Cost after the initial guess and after every accepted step.
    pub cost_history: Vec<f64>,
}

impl TwoModeFit {
    /// `(a1, a2, b1, b2, c1, c2)`.
    pub fn coefficients(&self) -> [f64; 6] {
        self.signal.coefficients()
    }
}

struct Problem<'a> {
    t: Vec<f64>,
    y: &'a [f64],
    freq: [f64; 2],
}

impl Problem<'_> {
    fn cost(&self, p: &[f64; 6]) -> f64 {
        let sig = TwoModeSignal::from_coefficients(self.freq, *p);
        self.t.iter().zip(self.y).map(|(&t, &y)| (y - sig.eval(t)).powi(2)).sum()
    }

    fn residuals(&self, p: &[f64; 6]) -> Vec<f64> {
        let sig = TwoModeSignal::from_coefficients(self.freq, *p);
        self.t.iter().zip(self.y).map(|(&t, &y)| y - sig.eval(t)).collect()
    }

    /// Normal equations `JᵀJ`, `Jᵀr` from a central-difference Jacobian.
    fn normal_equations(&self, p: &[f64; 6], r: &[f64]) -> (Mat6, Vec6) {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(6);
        for j in 0..6 {
            let h = 1e-7 * p[j].abs().max(1e-3);
            let (mut up, mut dn) = (*p, *p);
            up[j] += h;
            dn[j] -= h;
            let ru = self.residuals(&up);
            let rd = self.residuals(&dn);
            cols.push(ru.iter().zip(&rd).map(|(a, b)| (a - b) / (2.0 * h)).collect());
        }
        let mut jtj = Mat6::zeros();
        let mut jtr = Vec6::zeros();
        for a in 0..6 {
            jtr[a] = cols[a].iter().zip(r).map(|(x, y)| x * y).sum();
            for b in a..6 {
                let v: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
                jtj[(a, b)] = v;
                jtj[(b, a)] = v;
            }
        }
        (jtj, jtr)
    }

    /// For fixed decay rates the model is linear in `a cos(2πfc)` and
    /// `a sin(2πfc)`; scan a grid of decay rates and keep the best linear fit.
    fn initial_guess(&self) -> [f64; 6] {
        let mut rates = vec![0.0];
        rates.extend((0..=40).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 40.0)));
        let basis = |f: f64, b: f64| -> [Vec<f64>; 2] {
            let w = 2.0 * PI * f;
            [
                self.t.iter().map(|&t| (-b * t).exp() * (w * t).cos()).collect(),
                self.t.iter().map(|&t| (-b * t).exp() * (w * t).sin()).collect(),
            ]
        };
        let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(a, b)| a * b).sum() };
        let b1: Vec<_> = rates.iter().map(|&b| basis(self.freq[0], b)).collect();
        let b2: Vec<_> = rates.iter().map(|&b| basis(self.freq[1], b)).collect();
        let yy = dot(self.y, self.y);

        let mut best = (f64::INFINITY, [0.0; 6]);
        for (i, m1) in b1.iter().enumerate() {
            for (k, m2) in b2.iter().enumerate() {
                let cols = [&m1[0], &m1[1], &m2[0], &m2[1]];
                let g = Matrix4::from_fn(|r, c| dot(cols[r], cols[c]));
                let rhs = Vector4::from_fn(|r, _| dot(cols[r], self.y));
                let Some(x) = g.cholesky().map(|ch| ch.solve(&rhs)) else { continue };
                let cost = yy - x.dot(&rhs);
                if cost < best.0 {
                    let to_polar = |ca: f64, sa: f64, f: f64| {
                        (ca.hypot(sa), sa.atan2(ca) / (2.0 * PI * f))
                    };
                    let (a1, c1) = to_polar(x[0], x[1], self.freq[0]);
                    let (a2, c2) = to_polar(x[2], x[3], self.freq[1]);
                    best = (cost, [a1, a2, rates[i], rates[k], c1, c2]);
                }
            }
        }
        best.1
    }
}

/// Canonical form: nonnegative amplitudes, phases in `(-T/2, T/2]`.
fn canonicalize(p: &mut [f64; 6], freq: [f64; 2]) {
    for i in 0..2 {
        let period = 1.0 / freq[i];
        if p[i] < 0.0 {
            p[i] = -p[i];
            p[4 + i] += 0.5 * period;
        }
        let mut c = p[4 + i] - period * (p[4 + i] / period).round();
        if c <= -0.5 * period {
            c += period;
        }
        p[4 + i] = c;
    }
}

/// Least-squares fit of `(a1, a2, b1, b2, c1, c2)` to the record.
pub fn fit_two_mode(rec: &RingdownRecord, freq_hz: [f64; 2], settings: &LmSettings) -> Result<TwoModeFit> {
    rec.validate()?;
    let problem = Problem {
        t: (0..rec.samples.len()).map(|i| rec.time(i)).collect(),
        y: &rec.samples,
        freq: freq_hz,
    };
    let mut p = problem.initial_guess();
    let mut cost = problem.cost(&p);
    let mut history = vec![cost];
    let mut lambda = settings.initial_lambda;
    let scale = problem.y.iter().map(|y| y * y).sum::<f64>();

    let mut iterations = 0;
    let mut converged = cost <= 1e-30 * scale.max(f64::MIN_POSITIVE);
    while !converged {
        if iterations == settings.max_iterations {
            return Err(Error::FitNotConverged { iterations, cost, params: p });
        }
        iterations += 1;
        let r = problem.residuals(&p);
        let (jtj, jtr) = problem.normal_equations(&p, &r);
        let max_diag = (0..6).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        loop {
            let mut lhs = jtj;
            for i in 0..6 {
                lhs[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * max_diag);
            }
            let step = lhs.cholesky().map(|ch| ch.solve(&(-jtr)));
            if let Some(step) = step {
                let mut trial = p;
                for i in 0..6 {
                    trial[i] += step[i];
                }
                let trial_cost = problem.cost(&trial);
                if trial_cost < cost {
                    let rel = (cost - trial_cost) / cost;
                    p = trial;
                    cost = trial_cost;
                    history.push(cost);
                    lambda /= settings.lambda_factor;
                    converged = rel < settings.relative_tolerance || cost <= 1e-30 * scale;
                    break;
                }
            }
            lambda *= settings.lambda_factor;
            if lambda > 1e16 {
                // No damped step lowers the cost: stationary to working precision.
                converged = true;
                break;
            }
        }
    }
    canonicalize(&mut p, freq_hz);
    Ok(TwoModeFit {
        signal: TwoModeSignal::from_coefficients(freq_hz, p),
        cost: problem.cost(&p),
        iterations,
        cost_history: history,
    })
}
