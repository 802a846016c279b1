use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Free-decay strain record, already at the analysis sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingdownRecord {
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
}

impl RingdownRecord {
    pub fn new(sample_rate_hz: f64, samples: Vec<f64>) -> Result<Self> {
        let rec = RingdownRecord { sample_rate_hz, samples };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(invalid("sample_rate_hz must be positive"));
        }
        if self.samples.len() < 2 {
            return Err(invalid("ring-down needs at least two samples"));
        }
        if self.samples.iter().any(|s| !s.is_finite()) {
            return Err(invalid("ring-down contains non-finite samples"));
        }
        Ok(())
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.sample_rate_hz
    }
}

/// One-sided power spectrum; bin `k` sits at `k · rate / len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub bin_width_hz: f64,
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
}

/// `|X_k|^2` of the unwindowed DFT folded onto the non-negative frequencies:
/// bins with a negative-frequency twin are doubled, so the total power equals
/// `len · Σ x²`.
pub fn power_spectrum(rec: &RingdownRecord) -> Result<Spectrum> {
    rec.validate()?;
    let n = rec.samples.len();
    if n < 64 {
        return Err(invalid(format!("power spectrum needs at least 64 samples, got {n}")));
    }
    let mut buf: Vec<Complex<f64>> = rec.samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bins = n / 2 + 1;
    let bin_width_hz = rec.sample_rate_hz / n as f64;
    let power = (0..bins)
        .map(|k| {
            let p = buf[k].norm_sqr();
            let has_twin = k != 0 && !(n.is_multiple_of(2) && k == n / 2);
            if has_twin {
                2.0 * p
            } else {
                p
            }
        })
        .collect();
    let freqs_hz = (0..bins).map(|k| k as f64 * bin_width_hz).collect();
    Ok(Spectrum { bin_width_hz, freqs_hz, power })
}

/// Damped frequencies of the two strongest spectral peaks, ascending.
///
/// Candidates are interior local maxima holding at least 1% of the global
/// maximum; the two largest are refined by a parabola through the peak bin
/// and its neighbours.
pub fn extract_peaks(spectrum: &Spectrum) -> Result<[f64; 2]> {
    let p = &spectrum.power;
    if p.len() < 3 {
        return Err(Error::ModesNotFound);
    }
    let global = p.iter().cloned().fold(0.0, f64::max);
    let floor = 0.01 * global;
    let mut peaks: Vec<usize> = (1..p.len() - 1)
        .filter(|&k| p[k] > p[k - 1] && p[k] >= p[k + 1] && p[k] >= floor && p[k] > 0.0)
        .collect();
    if peaks.len() < 2 {
        return Err(Error::ModesNotFound);
    }
    peaks.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let mut f: [f64; 2] = std::array::from_fn(|i| {
        let k = peaks[i];
        let (l, c, r) = (p[k - 1], p[k], p[k + 1]);
        let denom = l - 2.0 * c + r;
        let delta = if denom != 0.0 { (0.5 * (l - r) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        (k as f64 + delta) * spectrum.bin_width_hz
    });
    f.sort_by(f64::total_cmp);
    Ok(f)
}

/// `Σ a_i exp(-b_i t) cos(2π f_i (t - c_i))` with `f_i` the damped frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeSignal {
    pub freq_hz: [f64; 2],
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
}

impl TwoModeSignal {
    pub fn eval(&self, t: f64) -> f64 {
        (0..2)
            .map(|i| {
                self.a[i] * (-self.b[i] * t).exp() * (2.0 * PI * self.freq_hz[i] * (t - self.c[i])).cos()
            })
            .sum()
    }

    /// Coefficients in fit order `(a1, a2, b1, b2, c1, c2)`.
    pub fn coefficients(&self) -> [f64; 6] {
        [self.a[0], self.a[1], self.b[0], self.b[1], self.c[0], self.c[1]]
    }

    pub fn from_coefficients(freq_hz: [f64; 2], p: [f64; 6]) -> Self {
        TwoModeSignal { freq_hz, a: [p[0], p[1]], b: [p[2], p[3]], c: [p[4], p[5]] }
    }

    pub fn sample(&self, sample_rate_hz: f64, n: usize) -> RingdownRecord {
        RingdownRecord {
            sample_rate_hz,
            samples: (0..n).map(|i| self.eval(i as f64 / sample_rate_hz)).collect(),
        }
    }
}

const RINGDOWN_STREAM: u64 = 0x5249_4e47_0000_0007;

impl TwoModeSignal {
    /// `sample` plus independent Gaussian measurement noise.
    pub fn sample_noisy(&self, sample_rate_hz: f64, n: usize, noise_std: f64, seed: u64) -> Result<RingdownRecord> {
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(invalid("ring-down noise std must be nonnegative"));
        }
        let mut rec = self.sample(sample_rate_hz, n);
        if noise_std > 0.0 {
            let noise = Normal::new(0.0, noise_std).map_err(|e| invalid(e.to_string()))?;
            let mut rng = crate::rng::stream(seed, RINGDOWN_STREAM);
            for s in &mut rec.samples {
                *s += noise.sample(&mut rng);
            }
        }
        rec.validate()?;
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: f64, n: usize) -> RingdownRecord {
        RingdownRecord {
            sample_rate_hz: rate,
            samples: (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate).cos()).collect(),
        }
    }

    #[test]
    fn bin_center_cosine_has_one_dominant_bin() {
        let s = power_spectrum(&tone(50.0, 1000.0, 1000)).unwrap();
        assert_eq!(s.bin_width_hz, 1.0);
        let (kmax, pmax) = s.power.iter().enumerate().fold((0, 0.0), |b, (k, &p)| if p > b.1 { (k, p) } else { b });
        assert_eq!(kmax, 50);
        let rest: f64 = s.power.iter().enumerate().filter(|(k, _)| *k != 50).map(|(_, p)| p).sum();
        assert!(rest < 1e-12 * pmax);
    }

    #[test]
    fn parseval_holds() {
        for n in [256usize, 257, 1000] {
            let rec = RingdownRecord {
                sample_rate_hz: 100.0,
                samples: (0..n).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) + 0.2).collect(),
            };
            let s = power_spectrum(&rec).unwrap();
            let lhs: f64 = s.power.iter().sum();
            let rhs = n as f64 * rec.samples.iter().map(|x| x * x).sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-6 * rhs, "n={n}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn short_records_rejected() {
        assert!(power_spectrum(&tone(5.0, 100.0, 63)).is_err());
    }

    #[test]
    fn two_mode_peaks_recovered() {
        let sig = TwoModeSignal { freq_hz: [7.0, 43.0], a: [1.0, 0.6], b: [0.9, 2.5], c: [0.01, 0.002] };
        let s = power_spectrum(&sig.sample(2000.0, 4000)).unwrap();
        let f = extract_peaks(&s).unwrap();
        assert!((f[0] - 7.0).abs() < s.bin_width_hz, "{f:?}");
        assert!((f[1] - 43.0).abs() < s.bin_width_hz, "{f:?}");
        assert!(f[0] < f[1]);
    }

    #[test]
    fn peaks_are_ascending_even_when_high_mode_dominates() {
        let sig = TwoModeSignal { freq_hz: [12.0, 40.0], a: [0.3, 1.0], b: [0.5, 0.5], c: [0.0, 0.0] };
        let s = power_spectrum(&sig.sample(1000.0, 2000)).unwrap();
        let f = extract_peaks(&s).unwrap();
        assert!(f[0] < f[1]);
        assert!((f[0] - 12.0).abs() < 0.5 && (f[1] - 40.0).abs() < 0.5);
    }

    #[test]
    fn single_tone_is_not_two_modes() {
        let s = power_spectrum(&tone(50.0, 1000.0, 1000)).unwrap();
        assert!(matches!(extract_peaks(&s), Err(Error::ModesNotFound)));
    }

    #[test]
    fn noisy_sample_is_seeded() {
        let sig = TwoModeSignal { freq_hz: [7.0, 43.0], a: [1.0, 0.5], b: [0.3, 1.0], c: [0.0, 0.0] };
        let clean = sig.sample_noisy(2000.0, 4000, 0.0, 1).unwrap();
        assert_eq!(clean, sig.sample(2000.0, 4000));
        let a = sig.sample_noisy(2000.0, 4000, 0.1, 1).unwrap();
        assert_eq!(a, sig.sample_noisy(2000.0, 4000, 0.1, 1).unwrap());
        assert_ne!(a, sig.sample_noisy(2000.0, 4000, 0.1, 2).unwrap());
    }
}
