use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Smallest bandwidth ever used; keeps degenerate (all equal) samples finite.
pub const BANDWIDTH_FLOOR: f64 = 1e-6;

/// Silverman's rule of thumb, `0.9 · min(sd, IQR/1.34) · n^(-1/5)`, floored at
/// [`BANDWIDTH_FLOOR`]. Falls back to whichever spread estimate is nonzero.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return BANDWIDTH_FLOOR;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => 0.0,
    };
    (0.9 * spread * (n as f64).powf(-0.2)).max(BANDWIDTH_FLOOR)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// One-dimensional Gaussian kernel density estimate.
#[derive(Debug, Clone)]
pub struct GaussianKde {
    samples: Vec<f64>,
    bandwidth: f64,
}

impl GaussianKde {
    /// Panics on an empty sample set.
    pub fn new(samples: Vec<f64>) -> Self {
        assert!(!samples.is_empty(), "KDE needs at least one sample");
        let bandwidth = silverman_bandwidth(&samples);
        GaussianKde { samples, bandwidth }
    }

    pub fn with_bandwidth(samples: Vec<f64>, bandwidth: f64) -> Self {
        assert!(!samples.is_empty(), "KDE needs at least one sample");
        GaussianKde { samples, bandwidth: bandwidth.max(BANDWIDTH_FLOOR) }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Direct O(n) evaluation.
    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.samples.len() as f64 * h * (2.0 * PI).sqrt());
        norm * self
            .samples
            .iter()
            .map(|s| (-0.5 * ((x - s) / h).powi(2)).exp())
            .sum::<f64>()
    }

    /// Tabulates the density on a regular grid by linear binning followed by a
    /// discrete convolution with the kernel (truncated at 8 bandwidths). The
    /// grid step is at most an eighth of the bandwidth.
    pub fn gridded(&self) -> GriddedDensity {
        const STEPS_PER_BANDWIDTH: f64 = 8.0;
        const MAX_POINTS: usize = 1 << 18;
        const CUTOFF: f64 = 8.0;

        let h = self.bandwidth;
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let start = lo - CUTOFF * h;
        let span = (hi + CUTOFF * h) - start;
        let points = ((span / (h / STEPS_PER_BANDWIDTH)).ceil() as usize + 1).clamp(64, MAX_POINTS);
        let step = span / (points - 1) as f64;

        let mut counts = vec![0.0; points];
        for &x in &self.samples {
            let pos = (x - start) / step;
            let i = (pos.floor() as usize).min(points - 2);
            let frac = pos - i as f64;
            counts[i] += 1.0 - frac;
            counts[i + 1] += frac;
        }

        let reach = ((CUTOFF * h) / step).ceil() as usize;
        let kernel: Vec<f64> = (0..=reach)
            .map(|d| (-0.5 * (d as f64 * step / h).powi(2)).exp())
            .collect();
        let norm = 1.0 / (self.samples.len() as f64 * h * (2.0 * PI).sqrt());
        let mut values = vec![0.0; points];
        for (i, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let a = i.saturating_sub(reach);
            let b = (i + reach).min(points - 1);
            for (k, v) in values[a..=b].iter_mut().enumerate() {
                *v += c * kernel[(a + k).abs_diff(i)];
            }
        }
        for v in &mut values {
            *v *= norm;
        }
        GriddedDensity { start, step, values }
    }
}

/// Density tabulated on `start + k·step`, linearly interpolated, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedDensity {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl GriddedDensity {
    pub fn eval(&self, x: f64) -> f64 {
        let pos = (x - self.start) / self.step;
        if !(pos >= 0.0) || pos > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.values.len() - 1) as f64
    }

    /// Trapezoidal integral over the whole grid.
    pub fn integral(&self) -> f64 {
        let n = self.values.len();
        self.step * (self.values.iter().sum::<f64>() - 0.5 * (self.values[0] + self.values[n - 1]))
    }

    /// Grid point with the largest density.
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        self.start + best as f64 * self.step
    }
}
