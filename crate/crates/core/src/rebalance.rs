//! SMOGN rebalancing for a regression target with a heavy upper tail.
//!
//! Samples at or above `tau` are high-impact. Each one seeds
//! `oversample_rate` synthetic samples: a randomly chosen high-impact
//! neighbour closer than half the median neighbour distance gives a SMOTER
//! interpolation, anything farther gives a Gaussian perturbation of the seed.
//! Low-impact samples are randomly thinned to `undersample_rate` of their
//! count. High-impact originals are kept.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, MinMaxScaler};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RebalanceConfig {
    pub tau: f64,
    pub k_neighbors: usize,
    /// Synthetic samples generated per high-impact sample.
    pub oversample_rate: usize,
    /// Fraction of low-impact samples retained.
    pub undersample_rate: f64,
    /// Gaussian noise σ as a fraction of each feature's standard deviation.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for RebalanceConfig {
    fn default() -> Self {
        RebalanceConfig {
            tau: 380.0,
            k_neighbors: 5,
            oversample_rate: 1,
            undersample_rate: 0.5,
            noise_fraction: 0.02,
            seed: 0,
        }
    }
}

impl RebalanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.undersample_rate > 0.0 && self.undersample_rate <= 1.0) {
            return Err(Error::Config(format!(
                "undersample rate must be in (0, 1], got {}",
                self.undersample_rate
            )));
        }
        if !(self.noise_fraction >= 0.0) {
            return Err(Error::Config("noise fraction must be non-negative".into()));
        }
        if self.k_neighbors == 0 {
            return Err(Error::Config("k_neighbors must be positive".into()));
        }
        Ok(())
    }
}

/// Where an output sample came from; indices refer to the input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleOrigin {
    Original(usize),
    Smoter { seed: usize, neighbor: usize },
    Gaussian { seed: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rebalanced {
    pub samples: Vec<TrainingSample>,
    pub origins: Vec<SampleOrigin>,
}

/// Indices of high-impact (`q ≥ tau`) and low-impact samples.
pub fn partition(samples: &[TrainingSample], tau: f64) -> (Vec<usize>, Vec<usize>) {
    (0..samples.len()).partition(|&i| samples[i].target >= tau)
}

/// SMOTER interpolation at a given position `u ∈ [0, 1]` along the segment
/// from `seed` to `neighbor`. The target is the inverse-distance weighted
/// mean of the two endpoint targets.
pub fn smoter_interpolate_at(seed: &TrainingSample, neighbor: &TrainingSample, u: f64) -> TrainingSample {
    let features: Vec<f64> = seed
        .features
        .iter()
        .zip(&neighbor.features)
        .map(|(&a, &b)| a + u * (b - a))
        .collect();
    let d_seed = euclidean(&features, &seed.features);
    let d_neighbor = euclidean(&features, &neighbor.features);
    let (lo, hi) = (seed.target.min(neighbor.target), seed.target.max(neighbor.target));
    let target = if d_seed + d_neighbor == 0.0 {
        (seed.target + neighbor.target) / 2.0
    } else {
        ((d_neighbor * seed.target + d_seed * neighbor.target) / (d_seed + d_neighbor)).clamp(lo, hi)
    };
    TrainingSample { features, target }
}

pub fn smoter_interpolate<R: Rng + ?Sized>(seed: &TrainingSample, neighbor: &TrainingSample, rng: &mut R) -> TrainingSample {
    let u: f64 = rng.random();
    smoter_interpolate_at(seed, neighbor, u)
}

/// Copy of `seed` with `N(0, (noise_fraction·std_j)²)` added to feature j.
/// Features with zero spread are left untouched. The target is unchanged.
pub fn gaussian_perturb<R: Rng + ?Sized>(
    seed: &TrainingSample,
    noise_fraction: f64,
    feature_stds: &[f64],
    rng: &mut R,
) -> TrainingSample {
    let features = seed
        .features
        .iter()
        .zip(feature_stds)
        .map(|(&v, &s)| {
            let sd = noise_fraction * s;
            if sd > 0.0 {
                v + Normal::new(0.0, sd).expect("finite positive sd").sample(rng)
            } else {
                v
            }
        })
        .collect();
    TrainingSample {
        features,
        target: seed.target,
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn population_stds(samples: &[TrainingSample]) -> Vec<f64> {
    let d = samples[0].features.len();
    let n = samples.len() as f64;
    (0..d)
        .map(|j| {
            let mean = samples.iter().map(|s| s.features[j]).sum::<f64>() / n;
            (samples.iter().map(|s| (s.features[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// Run SMOGN. Output order: high-impact originals, then synthetic samples
/// grouped by seed, then the retained low-impact originals in input order.
/// The result is a pure function of `(samples, cfg)`.
pub fn rebalance(samples: &[TrainingSample], cfg: &RebalanceConfig) -> Result<Rebalanced> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyMatrix("nothing to rebalance".into()));
    }
    let dim = samples[0].features.len();
    if let Some(bad) = samples.iter().find(|s| s.features.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.features.len(),
        });
    }
    let (hi, lo) = partition(samples, cfg.tau);
    if cfg.oversample_rate > 0 && hi.len() < 2 {
        return Err(Error::InsufficientRare(hi.len()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    let mut origins = Vec::new();
    for &i in &hi {
        out.push(samples[i].clone());
        origins.push(SampleOrigin::Original(i));
    }

    if cfg.oversample_rate > 0 {
        let scaler = MinMaxScaler::fitted(samples.iter().map(|s| s.features.as_slice()))?;
        let scaled: Vec<Vec<f64>> = hi
            .iter()
            .map(|&i| scaler.transform(&samples[i].features))
            .collect::<Result<_>>()?;
        let stds = population_stds(samples);
        let k = cfg.k_neighbors.min(hi.len() - 1);

        for (r, &seed_idx) in hi.iter().enumerate() {
            let mut dists: Vec<(f64, usize)> = (0..hi.len())
                .filter(|&m| m != r)
                .map(|m| (euclidean(&scaled[r], &scaled[m]), m))
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dists.truncate(k);
            let sorted: Vec<f64> = dists.iter().map(|d| d.0).collect();
            let safe_range = 0.5 * median(&sorted);

            for _ in 0..cfg.oversample_rate {
                let (d, m) = dists[rng.random_range(0..dists.len())];
                let neighbor_idx = hi[m];
                if d < safe_range {
                    out.push(smoter_interpolate(&samples[seed_idx], &samples[neighbor_idx], &mut rng));
                    origins.push(SampleOrigin::Smoter {
                        seed: seed_idx,
                        neighbor: neighbor_idx,
                    });
                } else {
                    out.push(gaussian_perturb(&samples[seed_idx], cfg.noise_fraction, &stds, &mut rng));
                    origins.push(SampleOrigin::Gaussian { seed: seed_idx });
                }
            }
        }
    }

    let keep = ((lo.len() as f64 * cfg.undersample_rate) + 1e-9).floor() as usize;
    let mut pool = lo;
    pool.shuffle(&mut rng);
    pool.truncate(keep);
    pool.sort_unstable();
    for i in pool {
        out.push(samples[i].clone());
        origins.push(SampleOrigin::Original(i));
    }
    Ok(Rebalanced { samples: out, origins })
}

/// Rebalance the rows of a feature matrix; synthetic rows lose their key.
pub fn rebalance_matrix(m: &FeatureMatrix, cfg: &RebalanceConfig) -> Result<FeatureMatrix> {
    let samples: Vec<TrainingSample> = m
        .rows
        .iter()
        .zip(&m.targets)
        .map(|(r, &t)| TrainingSample {
            features: r.clone(),
            target: t,
        })
        .collect();
    let res = rebalance(&samples, cfg)?;
    let mut out = FeatureMatrix::empty(m.layout);
    out.columns = m.columns.clone();
    for (s, o) in res.samples.into_iter().zip(res.origins) {
        let key = match o {
            SampleOrigin::Original(i) => m.keys[i].clone(),
            _ => None,
        };
        out.push(key, s.features, s.target);
    }
    Ok(out)
}
