//! Skin-modulus calibration from static load-displacement pairs.
//!
//! Each pair is turned into a non-Gaussian likelihood over `e` by sampling
//! the measurement noise, mapping every draw through `k = f / x` and the
//! stiffness-to-modulus relation, and fitting a Gaussian KDE. A fixed cloud of
//! prior particles is then reweighted by each likelihood in turn.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{CalibrationPosterior, Particle};
use crate::rng::{self, TwinRng};
use crate::surrogate::{e_from_stiffness, STIFFNESS_INTERCEPT, STIFFNESS_SLOPE};

use super::kde::{GaussianKde, GriddedDensity};
use super::{grams_to_newtons, sigma_from_ci95};

const PRIOR_STREAM: u64 = 0x5052_494f_5200_0001;
const KDE_STREAM: u64 = 0x4b44_4500_0000_0002;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadDisplacementPair {
    pub applied_mass_g: f64,
    pub tip_displacement_mm: f64,
}

impl LoadDisplacementPair {
    pub fn validate(&self) -> Result<()> {
        if !(self.applied_mass_g > 0.0 && self.applied_mass_g.is_finite()) {
            return Err(invalid("applied_mass_g must be positive"));
        }
        if !(self.tip_displacement_mm > 0.0 && self.tip_displacement_mm.is_finite()) {
            return Err(invalid("tip_displacement_mm must be positive"));
        }
        Ok(())
    }
}

/// Modulus scale implied by one pair: `k = f / x`, then invert the stiffness map.
pub fn e_hat_from_pair(pair: &LoadDisplacementPair) -> Result<f64> {
    pair.validate()?;
    e_from_stiffness(grams_to_newtons(pair.applied_mass_g) / pair.tip_displacement_mm)
}

/// Measurement uncertainty of a pair, as 95% half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairNoise {
    /// Applied load, expressed as an equivalent mass.
    pub force_ci95_g: f64,
    pub displacement_ci95_mm: f64,
}

impl Default for PairNoise {
    fn default() -> Self {
        PairNoise { force_ci95_g: 10.0, displacement_ci95_mm: 1.0 }
    }
}

impl PairNoise {
    pub fn sigma_mass_g(&self) -> f64 {
        sigma_from_ci95(self.force_ci95_g)
    }

    pub fn sigma_displacement_mm(&self) -> f64 {
        sigma_from_ci95(self.displacement_ci95_mm)
    }
}

/// Sampled likelihood `p(ê | e)` for one pair.
#[derive(Debug, Clone)]
pub struct KdeLikelihood {
    pub pair: LoadDisplacementPair,
    pub e_hat: f64,
    pub kde: GaussianKde,
    pub grid: GriddedDensity,
}

impl KdeLikelihood {
    pub fn eval(&self, e: f64) -> f64 {
        self.grid.eval(e)
    }

    pub fn bandwidth(&self) -> f64 {
        self.kde.bandwidth()
    }
}

/// Builds the KDE likelihood of one pair from `n_samples` noise draws.
/// Draws with a nonpositive displacement have no stiffness and are discarded.
pub fn kde_likelihood(
    pair: &LoadDisplacementPair,
    noise: &PairNoise,
    n_samples: usize,
    seed: u64,
) -> Result<KdeLikelihood> {
    if n_samples < 1000 {
        return Err(invalid(format!("KDE likelihood needs at least 1000 samples, got {n_samples}")));
    }
    let e_hat = e_hat_from_pair(pair)?;
    let (sm, sx) = (noise.sigma_mass_g(), noise.sigma_displacement_mm());
    if !(sm >= 0.0 && sx >= 0.0) {
        return Err(invalid("noise widths must be nonnegative"));
    }
    let mut rng = rng::stream(seed, KDE_STREAM);
    let mass = Normal::new(pair.applied_mass_g, sm).map_err(|e| invalid(e.to_string()))?;
    let disp = Normal::new(pair.tip_displacement_mm, sx).map_err(|e| invalid(e.to_string()))?;
    let mut samples = Vec::with_capacity(n_samples);
    while samples.len() < n_samples {
        let m = mass.sample(&mut rng);
        let x = disp.sample(&mut rng);
        if x > 0.0 {
            let k = grams_to_newtons(m) / x;
            samples.push((k - STIFFNESS_INTERCEPT) / STIFFNESS_SLOPE);
        }
    }
    let kde = GaussianKde::new(samples);
    let grid = kde.gridded();
    Ok(KdeLikelihood { pair: *pair, e_hat, kde, grid })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub std: f64,
}

impl GaussianPrior {
    pub fn from_ci95(mean: f64, half_width: f64) -> Self {
        GaussianPrior { mean, std: sigma_from_ci95(half_width) }
    }
}

/// Particle cloud over a scalar parameter. Values never move; only the
/// weights change.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedParticles {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedParticles {
    pub fn from_prior(prior: &GaussianPrior, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("particle count must be positive"));
        }
        let dist = Normal::new(prior.mean, prior.std).map_err(|e| invalid(e.to_string()))?;
        let mut rng = rng::stream(seed, PRIOR_STREAM);
        let values = (0..n).map(|_| dist.sample(&mut rng)).collect();
        Ok(WeightedParticles { values, weights: vec![1.0 / n as f64; n] })
    }

    pub fn delta(value: f64) -> Self {
        WeightedParticles { values: vec![value], weights: vec![1.0] }
    }

    pub fn from_particles(particles: &[Particle]) -> Result<Self> {
        if particles.is_empty() {
            return Err(invalid("posterior has no particles"));
        }
        let total: f64 = particles.iter().map(|p| p.weight).sum();
        if !(total > 0.0) || particles.iter().any(|p| p.weight < 0.0 || !p.value.is_finite()) {
            return Err(invalid("posterior particles must have finite values and nonnegative weights"));
        }
        Ok(WeightedParticles {
            values: particles.iter().map(|p| p.value).collect(),
            weights: particles.iter().map(|p| p.weight / total).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * (v - m).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn sorted_cdf(&self) -> (Vec<f64>, Vec<f64>) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(order.len());
        for &i in &order {
            acc += self.weights[i];
            cdf.push(acc);
        }
        (order.into_iter().map(|i| self.values[i]).collect(), cdf)
    }

    fn quantile_from(values: &[f64], cdf: &[f64], q: f64) -> f64 {
        let total = *cdf.last().unwrap();
        let idx = cdf.partition_point(|&c| c < q * total);
        values[idx.min(values.len() - 1)]
    }

    /// Equal-tailed 95% interval of the empirical CDF.
    pub fn ci95(&self) -> [f64; 2] {
        let (values, cdf) = self.sorted_cdf();
        [
            Self::quantile_from(&values, &cdf, 0.025),
            Self::quantile_from(&values, &cdf, 0.975),
        ]
    }

    /// Inverse-transform draws from the empirical CDF.
    pub fn sample(&self, n: usize, rng: &mut TwinRng) -> Vec<f64> {
        let (values, cdf) = self.sorted_cdf();
        (0..n)
            .map(|_| Self::quantile_from(&values, &cdf, rng.random::<f64>()))
            .collect()
    }

    pub fn summarize(&self, include_particles: bool) -> CalibrationPosterior {
        CalibrationPosterior {
            mean: self.mean(),
            std: self.std(),
            ci95: self.ci95(),
            particles: include_particles.then(|| {
                self.values
                    .iter()
                    .zip(&self.weights)
                    .map(|(&value, &weight)| Particle { value, weight })
                    .collect()
            }),
        }
    }
}

impl CalibrationPosterior {
    /// Draws `n` values: inverse-transform on the particles when present,
    /// otherwise from `Normal(mean, std)`.
    pub fn sample(&self, n: usize, rng: &mut TwinRng) -> Result<Vec<f64>> {
        match &self.particles {
            Some(p) => Ok(WeightedParticles::from_particles(p)?.sample(n, rng)),
            None if self.std == 0.0 => Ok(vec![self.mean; n]),
            None => {
                let d = Normal::new(self.mean, self.std).map_err(|e| invalid(e.to_string()))?;
                Ok((0..n).map(|_| d.sample(rng)).collect())
            }
        }
    }

    pub fn delta(value: f64) -> Self {
        WeightedParticles::delta(value).summarize(true)
    }
}

/// Scales every weight by the likelihood at its particle and renormalizes.
pub fn particle_update(
    prior: &WeightedParticles,
    likelihood: impl Fn(f64) -> f64,
) -> Result<WeightedParticles> {
    let mut weights: Vec<f64> = prior
        .values
        .iter()
        .zip(&prior.weights)
        .map(|(v, w)| w * likelihood(*v).max(0.0))
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::AnnihilatedSupport);
    }
    for w in &mut weights {
        *w /= total;
    }
    Ok(WeightedParticles { values: prior.values.clone(), weights })
}

#[derive(Debug, Clone)]
pub struct StiffnessCalibration {
    pub prior: GaussianPrior,
    pub posterior: WeightedParticles,
    pub likelihoods: Vec<KdeLikelihood>,
    /// Posterior std after each assimilated pair.
    pub std_history: Vec<f64>,
    /// Fraction of prior variance removed by the update.
    pub reward: f64,
}

/// Sequentially assimilates `pairs` into a Gaussian prior on `e`.
///
/// The KDE seed of each pair depends on the master seed and the pair's own
/// values, so the final weights do not depend on the order of `pairs`.
pub fn calibrate_stiffness(
    prior: &GaussianPrior,
    pairs: &[LoadDisplacementPair],
    noise: &PairNoise,
    n_particles: usize,
    n_kde_samples: usize,
    seed: u64,
) -> Result<StiffnessCalibration> {
    if pairs.is_empty() {
        return Err(invalid("no load-displacement pairs"));
    }
    let mut particles = WeightedParticles::from_prior(prior, n_particles, seed)?;
    let mut likelihoods = Vec::with_capacity(pairs.len());
    let mut std_history = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let pair_seed = rng::mix(
            rng::mix(seed, pair.applied_mass_g.to_bits()),
            pair.tip_displacement_mm.to_bits(),
        );
        let lik = kde_likelihood(pair, noise, n_kde_samples, pair_seed)?;
        particles = particle_update(&particles, |e| lik.eval(e))?;
        std_history.push(particles.std());
        likelihoods.push(lik);
    }
    let reward = 1.0 - (particles.std() / prior.std).powi(2);
    Ok(StiffnessCalibration { prior: *prior, posterior: particles, likelihoods, std_history, reward })
}

/// Pairs a test rig would report for a wing with modulus scale `e_true`: the
/// recorded mass is nominal, the actual load and the displacement reading are
/// perturbed by `noise`.
pub fn synthetic_pairs(
    e_true: f64,
    masses_g: &[f64],
    trials: usize,
    noise: &PairNoise,
    seed: u64,
) -> Result<Vec<LoadDisplacementPair>> {
    const PAIR_STREAM: u64 = 0x5041_4952_5300_0003;
    let k = crate::surrogate::stiffness_from_e(e_true);
    let mut rng = rng::stream(seed, PAIR_STREAM);
    let dm = Normal::new(0.0, noise.sigma_mass_g()).map_err(|e| invalid(e.to_string()))?;
    let dx = Normal::new(0.0, noise.sigma_displacement_mm()).map_err(|e| invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(masses_g.len() * trials);
    for &m in masses_g {
        for _ in 0..trials {
            let actual = m + dm.sample(&mut rng);
            let x = grams_to_newtons(actual) / k + dx.sample(&mut rng);
            let pair = LoadDisplacementPair { applied_mass_g: m, tip_displacement_mm: x };
            pair.validate()?;
            out.push(pair);
        }
    }
    Ok(out)
}
